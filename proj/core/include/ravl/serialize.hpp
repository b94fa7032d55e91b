#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

namespace ravl {

// Little-endian binary (de)serialization for checkpoint and bank files.
// Every multi-byte value goes through these helpers so files written on one
// machine load bit-identically on another.
void write_u32(std::ostream& out, uint32_t v);
void write_u64(std::ostream& out, uint64_t v);
void write_i64(std::ostream& out, int64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);
// Matrix payloads are stored row-major with explicit dimensions, independent
// of Eigen's in-memory layout.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
void write_vector(std::ostream& out, const Eigen::VectorXd& v);

uint32_t read_u32(std::istream& in);
uint64_t read_u64(std::istream& in);
int64_t read_i64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);
Eigen::MatrixXd read_matrix(std::istream& in);
Eigen::VectorXd read_vector(std::istream& in);

// Whole-file helpers. atomic_write_file writes to a sibling temp file and
// renames it over the target so readers never observe a half-written file.
std::string read_file(const std::filesystem::path& path);
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace ravl
