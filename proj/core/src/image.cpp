#include "ravl/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ravl/error.hpp"
#include "ravl/util.hpp"

namespace ravl {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// h in [0,1), s,v in [0,1] -> rgb in [0,1].
void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  double hh = (h - std::floor(h)) * 6.0;
  int sector = static_cast<int>(hh) % 6;
  double f = hh - std::floor(hh);
  double p = v * (1.0 - s);
  double q = v * (1.0 - s * f);
  double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

}  // namespace

Image make_image(int width, int height, double fill) {
  if (width <= 0 || height <= 0) throw Error("InvalidImage", "non-positive image dimensions");
  Image img;
  img.width = width;
  img.height = height;
  img.pixels.assign(static_cast<size_t>(width) * height * 3, fill);
  return img;
}

Image load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open image: " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw Error("InvalidImage", "not a binary PPM (P6): " + path.string());
  // Header tokens may be separated by whitespace and '#' comments.
  auto next_int = [&in, &path]() {
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw Error("InvalidImage", "bad PPM header: " + path.string());
    return v;
  };
  long w = next_int();
  long h = next_int();
  long maxval = next_int();
  if (w <= 0 || h <= 0 || w > 1 << 15 || h > 1 << 15) {
    throw Error("InvalidImage", "bad PPM dimensions: " + path.string());
  }
  if (maxval != 255) throw Error("InvalidImage", "only maxval 255 PPM supported: " + path.string());
  in.get();  // single whitespace after maxval
  Image img = make_image(static_cast<int>(w), static_cast<int>(h));
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error("InvalidImage", "truncated PPM payload: " + path.string());
  }
  for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
  return img;
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.pixels) {
    int byte = static_cast<int>(std::lround(clamp01(v) * 255.0));
    out.put(static_cast<char>(byte));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("IoError", "cannot open image for writing: " + path.string());
  const std::string s = out.str();
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw Error("IoError", "image write failed: " + path.string());
}

std::string synth_frame_ref(const SynthFrameKey& key) {
  std::ostringstream s;
  s << "synth:" << key.seed << ":" << key.concept_id << ":" << key.video_idx << ":"
    << key.clip_idx << ":" << key.frame_idx << ":" << key.size;
  return s.str();
}

bool is_synth_ref(const std::string& ref) { return ref.rfind("synth:", 0) == 0; }

SynthFrameKey parse_synth_ref(const std::string& ref) {
  if (!is_synth_ref(ref)) throw Error("InvalidFrameRef", "not a synthetic reference: " + ref);
  std::vector<std::string> parts;
  size_t start = 0;
  for (;;) {
    size_t pos = ref.find(':', start);
    if (pos == std::string::npos) {
      parts.push_back(ref.substr(start));
      break;
    }
    parts.push_back(ref.substr(start, pos - start));
    start = pos + 1;
  }
  if (parts.size() != 7) throw Error("InvalidFrameRef", "malformed synthetic reference: " + ref);
  SynthFrameKey key;
  try {
    key.seed = std::stoull(parts[1]);
    key.concept_id = std::stoi(parts[2]);
    key.video_idx = std::stoi(parts[3]);
    key.clip_idx = std::stoi(parts[4]);
    key.frame_idx = std::stoi(parts[5]);
    key.size = std::stoi(parts[6]);
  } catch (const std::exception&) {
    throw Error("InvalidFrameRef", "malformed synthetic reference: " + ref);
  }
  if (key.size <= 0 || key.concept_id < 0 || key.video_idx < 0 || key.clip_idx < 0 ||
      key.frame_idx < 0) {
    throw Error("InvalidFrameRef", "out-of-range synthetic reference: " + ref);
  }
  return key;
}

Image render_synth_frame(const SynthFrameKey& key) {
  if (key.size <= 0) throw Error("InvalidFrameRef", "non-positive frame size");
  const int n = key.size;

  // Concept base color: golden-ratio hue walk keeps concepts well separated.
  double hue = 0.61803398875 * key.concept_id + 0.15;
  hue -= std::floor(hue);
  double sat = 0.55 + 0.10 * std::fmod(0.37 * key.concept_id, 1.0);
  double base[3];
  hsv_to_rgb(hue, sat, 0.60, base);

  // Streams are seeded from prefix strings of the reference so the video
  // offset is shared by every clip/frame of a video and the clip gradient is
  // shared by every frame of a clip.
  std::ostringstream prefix;
  prefix << "synth:" << key.seed << ":" << key.concept_id << ":" << key.video_idx;
  std::mt19937_64 video_rng(fnv1a64(prefix.str()));
  prefix << ":" << key.clip_idx;
  std::mt19937_64 clip_rng(fnv1a64(prefix.str()));
  std::mt19937_64 frame_rng(fnv1a64(synth_frame_ref(key)));

  double video_offset[3];
  for (double& o : video_offset) o = (uniform01(video_rng) * 2.0 - 1.0) * 0.06;
  const double grad_x = (uniform01(clip_rng) * 2.0 - 1.0) * 0.15;
  const double grad_y = (uniform01(clip_rng) * 2.0 - 1.0) * 0.15;

  Image img = make_image(n, n);
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double ramp = grad_x * (x / denom - 0.5) + grad_y * (y / denom - 0.5);
      for (int c = 0; c < 3; ++c) {
        double noise = (uniform01(frame_rng) * 2.0 - 1.0) * 0.02;
        img.at(y, x, c) = clamp01(base[c] + video_offset[c] + ramp + noise);
      }
    }
  }
  return img;
}

Image load_frame(const std::string& ref) {
  if (is_synth_ref(ref)) return render_synth_frame(parse_synth_ref(ref));
  return load_ppm(ref);
}

Image resize_bilinear(const Image& src, int out_width, int out_height) {
  if (out_width <= 0 || out_height <= 0) {
    throw Error("InvalidImage", "non-positive resize dimensions");
  }
  Image dst = make_image(out_width, out_height);
  const double sx = out_width > 1 ? static_cast<double>(src.width - 1) / (out_width - 1) : 0.0;
  const double sy = out_height > 1 ? static_cast<double>(src.height - 1) / (out_height - 1) : 0.0;
  for (int y = 0; y < out_height; ++y) {
    double fy = y * sy;
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < out_width; ++x) {
      double fx = x * sx;
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.width - 1);
      double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
        double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
        dst.at(y, x, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

Image random_augment(const Image& src, const AugmentConfig& cfg, std::mt19937_64& rng) {
  if (cfg.min_scale <= 0.0 || cfg.max_scale > 1.0 || cfg.min_scale > cfg.max_scale) {
    throw Error("InvalidConfig", "augment scale range must satisfy 0 < min <= max <= 1");
  }
  // Fixed draw order; see header.
  const double area = cfg.min_scale + uniform01(rng) * (cfg.max_scale - cfg.min_scale);
  const double ux = uniform01(rng);
  const double uy = uniform01(rng);
  const bool flip = uniform01(rng) < cfg.flip_prob;
  const double brightness = (uniform01(rng) * 2.0 - 1.0) * cfg.max_brightness;
  const double contrast = 1.0 + (uniform01(rng) * 2.0 - 1.0) * cfg.max_contrast;

  const int short_side = std::min(src.width, src.height);
  int side = std::max(1, static_cast<int>(std::lround(std::sqrt(area) * short_side)));
  side = std::min(side, short_side);
  const int x0 = static_cast<int>(ux * (src.width - side + 1));
  const int y0 = static_cast<int>(uy * (src.height - side + 1));

  Image crop = make_image(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      int sxp = flip ? (x0 + side - 1 - x) : (x0 + x);
      for (int c = 0; c < 3; ++c) crop.at(y, x, c) = src.at(y0 + y, sxp, c);
    }
  }
  Image out = resize_bilinear(crop, cfg.out_size, cfg.out_size);
  for (double& v : out.pixels) v = clamp01((v - 0.5) * contrast + 0.5 + brightness);
  return out;
}

Image center_crop_resize(const Image& src, int out_size) {
  const int side = std::min(src.width, src.height);
  const int x0 = (src.width - side) / 2;
  const int y0 = (src.height - side) / 2;
  Image crop = make_image(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) crop.at(y, x, c) = src.at(y0 + y, x0 + x, c);
    }
  }
  return resize_bilinear(crop, out_size, out_size);
}

}  // namespace ravl
