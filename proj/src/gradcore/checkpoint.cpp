#include "tsasr/gradcore/checkpoint.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/binary_io.hpp"

#include <fstream>

namespace tsasr {

namespace {

constexpr char kMagic[6] = {'T', 'S', 'C', 'K', 'P', 'T'};

struct Header {
  std::string name;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::uint8_t precision = 0;
  bool trainable = false;
};

std::vector<Header> read_headers(std::istream& is) {
  char magic[6];
  if (!is.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0) throw FormatError("not a checkpoint file");
  const auto version = binio::read<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = binio::read<std::uint32_t>(is);
  std::vector<Header> headers(count);
  for (auto& h : headers) {
    h.name = binio::read_string(is, 4096);
    const auto rank = binio::read<std::uint32_t>(is);
    if (rank != 2) throw FormatError("entry '" + h.name + "' has unsupported rank " + std::to_string(rank));
    h.rows = binio::read<std::uint64_t>(is);
    h.cols = binio::read<std::uint64_t>(is);
    h.precision = binio::read<std::uint8_t>(is);
    if (h.precision != 4 && h.precision != 8) throw FormatError("entry '" + h.name + "' has unknown precision");
    h.trainable = binio::read<std::uint8_t>(is) != 0;
    if (h.rows * h.cols > (1ULL << 28)) throw FormatError("entry '" + h.name + "' too large");
  }
  return headers;
}

}  // namespace

template <typename Scalar>
void write_checkpoint(std::ostream& os, const ParamStore<Scalar>& store) {
  os.write(kMagic, 6);
  binio::write<std::uint32_t>(os, kCheckpointVersion);
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.entries()) {
    binio::write_string(os, name);
    binio::write<std::uint32_t>(os, 2);
    binio::write<std::uint64_t>(os, static_cast<std::uint64_t>(t.data.rows()));
    binio::write<std::uint64_t>(os, static_cast<std::uint64_t>(t.data.cols()));
    binio::write<std::uint8_t>(os, static_cast<std::uint8_t>(precision_of<Scalar>()));
    binio::write<std::uint8_t>(os, t.requires_grad ? 1 : 0);
  }
  for (const auto& [_, t] : store.entries())
    for (Index i = 0; i < t.data.size(); ++i) binio::write<Scalar>(os, t.data.data()[i]);
}

template <typename Scalar>
ParamStore<Scalar> read_checkpoint(std::istream& is) {
  const auto headers = read_headers(is);
  ParamStore<Scalar> store;
  for (const auto& h : headers) {
    Matrix<Scalar> m(static_cast<Index>(h.rows), static_cast<Index>(h.cols));
    for (Index i = 0; i < m.size(); ++i)
      m.data()[i] = h.precision == 4 ? static_cast<Scalar>(binio::read<float>(is))
                                     : static_cast<Scalar>(binio::read<double>(is));
    store.add(h.name, std::move(m), h.trainable);
  }
  return store;
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<Scalar>& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(os, store);
  if (!os) throw FormatError("write to '" + path.string() + "' failed");
}

template <typename Scalar>
ParamStore<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint<Scalar>(is);
}

Precision checkpoint_precision(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  const auto headers = read_headers(is);
  if (headers.empty()) return Precision::f32;
  return headers.front().precision == 4 ? Precision::f32 : Precision::f64;
}

template void write_checkpoint(std::ostream&, const ParamStore<float>&);
template void write_checkpoint(std::ostream&, const ParamStore<double>&);
template ParamStore<float> read_checkpoint(std::istream&);
template ParamStore<double> read_checkpoint(std::istream&);
template void save_checkpoint(const std::filesystem::path&, const ParamStore<float>&);
template void save_checkpoint(const std::filesystem::path&, const ParamStore<double>&);
template ParamStore<float> load_checkpoint(const std::filesystem::path&);
template ParamStore<double> load_checkpoint(const std::filesystem::path&);

}  // namespace tsasr
