#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "maelab/matrix.hpp"
#include "maelab/rng.hpp"

namespace maelab {

/// Recipe for a random Gaussian-mixture dataset: cluster means drawn uniform
/// elementwise, cluster covariances drawn Wishart with a uniform diagonal
/// scale.
struct GaussianMixtureSpec {
  std::size_t dim = 32;
  std::size_t n_clusters = 10;
  std::size_t points_per_cluster = 200;
  std::pair<double, double> mean_range{-3.0, 3.0};
  std::pair<double, double> wishart_scale_range{0.25, 0.35};
  std::size_t wishart_dof = 48;  // 1.5 x dim; 54 also accepted via config
  /// When true (default) the sampled points are shifted so the empirical
  /// mean is exactly zero.
  bool center = true;

  void validate() const;
};

struct VectorDataset {
  std::size_t dim = 0;
  std::vector<DenseVector> points;
  std::vector<std::size_t> cluster_ids;

  std::size_t size() const { return points.size(); }
};

enum class ImageGenerator { kGaussianBlobs, kSinusoidalTextures, kMixed };

/// Synthetic patch-image corpus geometry. H and W must be divisible by P.
struct ImageCorpusSpec {
  std::size_t n_images = 256;
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t patch_size = 4;
  ImageGenerator generator = ImageGenerator::kMixed;

  void validate() const;
  std::size_t n_tokens() const { return (height / patch_size) * (width / patch_size); }
  std::size_t token_dim() const { return patch_size * patch_size * channels; }
};

/// Images stored patchified: one (n_tokens x token_dim) matrix per image,
/// pixel values in [0, 1].
struct ImageCorpus {
  ImageCorpusSpec spec;
  std::vector<DenseMatrix> images;

  std::size_t size() const { return images.size(); }
};

VectorDataset build_gaussian_mixture(const GaussianMixtureSpec& spec, Rng& rng);

ImageCorpus build_image_corpus(const ImageCorpusSpec& spec, Rng& rng);

/// (patch - mean) / sqrt(var + 1e-6), population variance over the patch.
DenseVector patch_normalize(const DenseVector& patch);

/// Row-normalized copy of a patchified image: every token run through
/// patch_normalize. The reconstruction target convention.
DenseMatrix patch_normalize_tokens(const DenseMatrix& tokens);

/// Flat pixels (channel-major planes, row-major within a plane) into
/// (n_tokens x token_dim) tokens; patchify_image and unpatchify_image are an
/// exact inverse pair.
DenseMatrix patchify_image(const DenseVector& pixels, const ImageCorpusSpec& spec);
DenseVector unpatchify_image(const DenseMatrix& tokens, const ImageCorpusSpec& spec);

}  // namespace maelab
