// Shared helpers for the test suites: fixture paths, random unit-norm
// batches, finite-difference utilities, and scratch directories.
#pragma once

#include <Eigen/Core>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "ravl/util.hpp"

namespace testsupport {

inline std::string fixture_manifest() {
  return std::string(RAVL_TEST_DATA_DIR) + "/fixture_manifest.jsonl";
}

inline std::string test_data(const std::string& name) {
  return std::string(RAVL_TEST_DATA_DIR) + "/" + name;
}

inline std::string repo_data(const std::string& name) {
  return std::string(RAVL_REPO_DATA_DIR) + "/" + name;
}

// Fresh scratch directory under the system temp root; unique per call.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("ravl_test_" + tag + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// B x D matrix of unit-norm rows drawn from the library's deterministic
// gaussian so tests reproduce across platforms.
inline Eigen::MatrixXd random_unit_rows(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = ravl::gaussian(rng);
    m.row(r).normalize();
  }
  return m;
}

}  // namespace testsupport
