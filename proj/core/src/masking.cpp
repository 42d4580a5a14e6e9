#include "maelab/masking.hpp"

#include <algorithm>
#include <cmath>

namespace maelab {

bool MaskSpec::is_masked(std::size_t i) const {
  return std::binary_search(masked_idx.begin(), masked_idx.end(), i);
}

MaskSpec draw_mask(std::size_t total, double ratio, Rng& rng) {
  if (total == 0) throw ContractViolation("draw_mask: total must be positive");
  if (ratio < 0.0 || ratio > 1.0)
    throw ContractViolation("draw_mask: ratio must be in [0, 1]");

  const auto n_masked = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(total)));

  // Partial Fisher-Yates: the first n_masked slots become the masked set.
  std::vector<std::size_t> perm(total);
  for (std::size_t i = 0; i < total; ++i) perm[i] = i;
  for (std::size_t i = 0; i < n_masked; ++i) {
    const std::size_t j = i + rng.next_below(total - i);
    std::swap(perm[i], perm[j]);
  }

  MaskSpec spec;
  spec.total = total;
  spec.ratio = ratio;
  spec.masked_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_masked));
  std::sort(spec.masked_idx.begin(), spec.masked_idx.end());
  spec.visible_idx.reserve(total - n_masked);
  std::size_t m = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (m < spec.masked_idx.size() && spec.masked_idx[m] == i) {
      ++m;
    } else {
      spec.visible_idx.push_back(i);
    }
  }
  return spec;
}

DenseVector apply_vector_mask(const DenseVector& x, const MaskSpec& mask) {
  if (x.len != mask.total)
    throw ContractViolation("apply_vector_mask: vector length must equal mask.total");
  DenseVector out = x;
  for (std::size_t i : mask.masked_idx) out[i] = 0.0;
  return out;
}

MaskPair draw_mask_pair(std::size_t total, double ratio, MaskPairMode mode, Rng& rng) {
  MaskPair pair;
  pair.mode = mode;
  pair.student = draw_mask(total, ratio, rng);
  pair.teacher = mode == MaskPairMode::kSame ? pair.student : draw_mask(total, ratio, rng);
  return pair;
}

}  // namespace maelab
