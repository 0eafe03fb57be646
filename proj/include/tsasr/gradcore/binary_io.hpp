#pragma once

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/matrix.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

namespace tsasr::binio {

// Little-endian scalar and array codecs shared by checkpoint and corpus files.

template <typename T>
void write(std::ostream& os, T value) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                               std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(bytes, sizeof(T));
}

template <typename T>
T read(std::istream& is) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                               std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw FormatError("unexpected end of file");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::size_t max_len = 1u << 24) {
  const auto n = read<std::uint32_t>(is);
  if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw FormatError("unexpected end of file in string");
  return s;
}

inline void write_tokens(std::ostream& os, const std::vector<int>& tokens) {
  write<std::uint32_t>(os, static_cast<std::uint32_t>(tokens.size()));
  for (int t : tokens) write<std::int32_t>(os, t);
}

inline std::vector<int> read_tokens(std::istream& is) {
  const auto n = read<std::uint32_t>(is);
  if (n > (1u << 20)) throw FormatError("token list too long");
  std::vector<int> out(n);
  for (auto& t : out) t = read<std::int32_t>(is);
  return out;
}

/// rows, cols (u64) then row-major values.
template <typename Scalar>
void write_matrix(std::ostream& os, const Matrix<Scalar>& m) {
  write<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  write<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.size(); ++i) write<Scalar>(os, m.data()[i]);
}

template <typename Scalar>
Matrix<Scalar> read_matrix(std::istream& is) {
  const auto rows = read<std::uint64_t>(is);
  const auto cols = read<std::uint64_t>(is);
  if (rows > (1u << 24) || cols > (1u << 24) || rows * cols > (1u << 28)) throw FormatError("matrix too large");
  Matrix<Scalar> m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = read<Scalar>(is);
  return m;
}

}  // namespace tsasr::binio
