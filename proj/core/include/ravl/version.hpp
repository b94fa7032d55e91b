#pragma once

namespace ravl {

// Library version, also stamped into checkpoints and bank files so a reader
// can tell which build wrote an artifact.
inline constexpr int kVersionMajor = 0;
inline constexpr int kVersionMinor = 1;
inline constexpr int kVersionPatch = 0;
inline constexpr const char* kVersionString = "0.1.0";

}  // namespace ravl
