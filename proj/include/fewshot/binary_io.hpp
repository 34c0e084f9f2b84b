#pragma once

// Little-endian tensor serialization shared by checkpoints.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/Dense>

#include "fewshot/error.hpp"

namespace fewshot::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorKind::Format, "truncated binary stream");
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error(ErrorKind::Format, "truncated string");
  return s;
}

// name, rows, cols, then row-major float64 payload.
inline void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  write_string(out, name);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(out, m(r, c));
  }
}

inline Eigen::MatrixXd read_tensor(std::istream& in, const std::string& expected_name) {
  const std::string name = read_string(in);
  if (name != expected_name) {
    throw Error(ErrorKind::Format, "expected tensor '" + expected_name + "', found '" + name + "'");
  }
  const auto rows = read_pod<std::uint32_t>(in);
  const auto cols = read_pod<std::uint32_t>(in);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_pod<double>(in);
  }
  return m;
}

}  // namespace fewshot::io
