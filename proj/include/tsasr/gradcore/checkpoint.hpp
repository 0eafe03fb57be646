#pragma once

#include "tsasr/gradcore/param_store.hpp"

#include <filesystem>
#include <iosfwd>

namespace tsasr {

// Checkpoint layout (all integers little-endian):
//   "TSCKPT" | u32 version | u32 entry count
//   per entry: u32 name length, name bytes, u32 rank (=2), u64 rows, u64 cols,
//              u8 precision (4 = f32, 8 = f64), u8 trainable
//   then, per entry in header order, rows*cols raw row-major values.
// Entries are written in ParamStore order (sorted by name).

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
void write_checkpoint(std::ostream& os, const ParamStore<Scalar>& store);

/// Reads any checkpoint, converting values to Scalar when the stored precision differs.
template <typename Scalar>
ParamStore<Scalar> read_checkpoint(std::istream& is);

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<Scalar>& store);

template <typename Scalar>
ParamStore<Scalar> load_checkpoint(const std::filesystem::path& path);

/// Precision recorded in the first entry header (f32 for an empty checkpoint).
Precision checkpoint_precision(const std::filesystem::path& path);

}  // namespace tsasr
