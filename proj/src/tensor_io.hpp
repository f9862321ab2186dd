#pragma once

// Shape-prefixed tensor records shared by the checkpoint formats.

#include <string>

#include "cno/binary_io.hpp"
#include "cno/error.hpp"
#include "cno/spectral_nn.hpp"

namespace cno::detail {

inline void write_tensor(BinaryWriter& w, const Matrix& m) {
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.f64s({m.data(), static_cast<std::size_t>(m.size())});
}

inline void write_tensor(BinaryWriter& w, const Vector& v) {
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(v.size()));
  w.f64s({v.data(), static_cast<std::size_t>(v.size())});
}

/// Reads into a tensor already sized from the metadata; a different stored shape is a DataError.
inline void read_tensor(BinaryReader& r, Matrix& m) {
  const auto rank = r.u32();
  if (rank != 2) throw DataError("checkpoint: expected a rank-2 tensor, found rank " + std::to_string(rank));
  const auto rows = r.u32();
  const auto cols = r.u32();
  if (rows != m.rows() || cols != m.cols()) throw DataError("checkpoint: tensor shape disagrees with metadata");
  r.f64s({m.data(), static_cast<std::size_t>(m.size())});
}

inline void read_tensor(BinaryReader& r, Vector& v) {
  const auto rank = r.u32();
  if (rank != 1) throw DataError("checkpoint: expected a rank-1 tensor, found rank " + std::to_string(rank));
  if (r.u32() != v.size()) throw DataError("checkpoint: tensor shape disagrees with metadata");
  r.f64s({v.data(), static_cast<std::size_t>(v.size())});
}

}  // namespace cno::detail
