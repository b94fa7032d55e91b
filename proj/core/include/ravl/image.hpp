#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace ravl {

// Dense RGB image, row-major H x W x 3, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // size = width * height * 3

  static constexpr int channels = 3;

  double& at(int y, int x, int c) { return pixels[static_cast<size_t>((y * width + x) * 3 + c)]; }
  double at(int y, int x, int c) const {
    return pixels[static_cast<size_t>((y * width + x) * 3 + c)];
  }
};

Image make_image(int width, int height, double fill = 0.0);

// Binary PPM (P6, maxval 255) is the only on-disk image format we read or
// write; it keeps the loader dependency-free and easy to verify byte-by-byte.
Image load_ppm(const std::filesystem::path& path);
void save_ppm(const Image& img, const std::filesystem::path& path);

// Synthetic frames are addressed by a self-describing reference string
//   synth:<seed>:<concept>:<video>:<clip>:<frame>:<size>
// and rendered on demand, so manifests stay tiny and fully reproducible.
struct SynthFrameKey {
  uint64_t seed = 0;
  int concept_id = 0;
  int video_idx = 0;
  int clip_idx = 0;
  int frame_idx = 0;
  int size = 224;
};

std::string synth_frame_ref(const SynthFrameKey& key);
bool is_synth_ref(const std::string& ref);
SynthFrameKey parse_synth_ref(const std::string& ref);

// Rendering recipe (deterministic in the reference string alone):
//   base color     — hue from a golden-ratio walk over concept id, so any two
//                    concepts land on well-separated colors;
//   video offset   — small per-video RGB shift (+-0.06);
//   clip gradient  — horizontal + vertical ramps with per-clip amplitudes;
//   frame noise    — per-pixel uniform jitter (+-0.02).
// Concepts dominate the pixel statistics; video and clip signatures keep
// same-concept items separable.
Image render_synth_frame(const SynthFrameKey& key);

// Dispatch: synthetic references are rendered, anything else is loaded as a
// PPM file path.
Image load_frame(const std::string& ref);

Image resize_bilinear(const Image& src, int out_width, int out_height);

// Training-time augmentation: random square crop (area fraction in
// [min_scale, max_scale]) resized to out_size, horizontal flip, then
// brightness/contrast jitter. Parameters are drawn from `rng` in a fixed
// order (scale, x, y, flip, brightness, contrast), which is what makes
// augmented runs reproducible from a seed.
struct AugmentConfig {
  double min_scale = 0.6;
  double max_scale = 1.0;
  double flip_prob = 0.5;
  double max_brightness = 0.1;  // additive, drawn from [-max, +max]
  double max_contrast = 0.1;    // multiplicative, drawn from [1-max, 1+max]
  int out_size = 224;
};

Image random_augment(const Image& src, const AugmentConfig& cfg, std::mt19937_64& rng);

// Deterministic eval-time path: center crop to square, resize to out_size.
Image center_crop_resize(const Image& src, int out_size);

}  // namespace ravl
