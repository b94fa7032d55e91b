#include "ravl/serialize.hpp"

#include <cstring>
#include <fstream>

#include "ravl/error.hpp"

namespace ravl {

namespace {

void put_bytes(std::ostream& out, const void* data, size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw Error("IoError", "short write to stream");
}

void get_bytes(std::istream& in, void* data, size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw Error("CorruptFile", "unexpected end of stream");
  }
}

}  // namespace

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 8);
}

void write_i64(std::ostream& out, int64_t v) { write_u64(out, static_cast<uint64_t>(v)); }

void write_f64(std::ostream& out, double v) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  write_u64(out, bits);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  if (!s.empty()) put_bytes(out, s.data(), s.size());
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u64(out, static_cast<uint64_t>(m.rows()));
  write_u64(out, static_cast<uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
  }
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  write_u64(out, static_cast<uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(out, v(i));
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  get_bytes(in, b, 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  get_bytes(in, b, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

int64_t read_i64(std::istream& in) { return static_cast<int64_t>(read_u64(in)); }

double read_f64(std::istream& in) {
  uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string read_string(std::istream& in) {
  uint64_t n = read_u64(in);
  if (n > (1ull << 32)) throw Error("CorruptFile", "string length implausibly large");
  std::string s(n, '\0');
  if (n > 0) get_bytes(in, s.data(), n);
  return s;
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  uint64_t rows = read_u64(in);
  uint64_t cols = read_u64(in);
  if (rows > (1ull << 24) || cols > (1ull << 24)) {
    throw Error("CorruptFile", "matrix dimensions implausibly large");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_f64(in);
  }
  return m;
}

Eigen::VectorXd read_vector(std::istream& in) {
  uint64_t n = read_u64(in);
  if (n > (1ull << 32)) throw Error("CorruptFile", "vector length implausibly large");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = read_f64(in);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open for reading: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("IoError", "read failed: " + path.string());
  return content;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("IoError", "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("IoError", "rename failed: " + path.string() + " (" + ec.message() + ")");
  }
}

}  // namespace ravl
