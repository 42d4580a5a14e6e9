#pragma once

#include <cstddef>
#include <vector>

#include "maelab/matrix.hpp"
#include "maelab/rng.hpp"

namespace maelab {

/// Binary mask over `total` maskable units (vector components or patch
/// tokens). masked_idx and visible_idx are sorted and partition 0..total-1.
struct MaskSpec {
  std::size_t total = 0;
  double ratio = 0.0;
  std::vector<std::size_t> masked_idx;
  std::vector<std::size_t> visible_idx;

  bool is_masked(std::size_t i) const;
};

enum class MaskPairMode { kSame, kDifferent };

/// Student/teacher mask pairing. kSame shares one draw; kDifferent draws the
/// two masks independently (coincidence by chance is allowed).
struct MaskPair {
  MaskSpec student;
  MaskSpec teacher;
  MaskPairMode mode = MaskPairMode::kSame;
};

/// Uniformly random subset of round(ratio * total) masked units. Ties in the
/// rounding go half away from zero.
MaskSpec draw_mask(std::size_t total, double ratio, Rng& rng);

/// Masked components zeroed, visible components copied. x.len must equal
/// mask.total.
DenseVector apply_vector_mask(const DenseVector& x, const MaskSpec& mask);

MaskPair draw_mask_pair(std::size_t total, double ratio, MaskPairMode mode, Rng& rng);

}  // namespace maelab
