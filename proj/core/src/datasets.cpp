#include "maelab/datasets.hpp"

#include <cmath>
#include <numbers>

namespace maelab {

void GaussianMixtureSpec::validate() const {
  if (dim == 0) throw ContractViolation("GaussianMixtureSpec: dim must be positive");
  if (n_clusters == 0) throw ContractViolation("GaussianMixtureSpec: n_clusters must be positive");
  if (points_per_cluster == 0)
    throw ContractViolation("GaussianMixtureSpec: points_per_cluster must be positive");
  if (mean_range.first > mean_range.second)
    throw ContractViolation("GaussianMixtureSpec: mean_range low must not exceed high");
  if (wishart_scale_range.first > wishart_scale_range.second ||
      wishart_scale_range.first <= 0.0)
    throw ContractViolation("GaussianMixtureSpec: wishart_scale_range must be positive, low <= high");
  if (wishart_dof < dim)
    throw ContractViolation("GaussianMixtureSpec: wishart_dof must be >= dim");
}

VectorDataset build_gaussian_mixture(const GaussianMixtureSpec& spec, Rng& rng) {
  spec.validate();

  VectorDataset ds;
  ds.dim = spec.dim;
  ds.points.reserve(spec.n_clusters * spec.points_per_cluster);
  ds.cluster_ids.reserve(ds.points.capacity());

  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    DenseVector mu(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i)
      mu[i] = rng.uniform(spec.mean_range.first, spec.mean_range.second);

    auto draw_factor = [&]() -> std::optional<DenseMatrix> {
      DenseVector scale_diag(spec.dim);
      for (std::size_t i = 0; i < spec.dim; ++i)
        scale_diag[i] = rng.uniform(spec.wishart_scale_range.first,
                                    spec.wishart_scale_range.second);
      const DenseMatrix sigma = sample_wishart(rng, scale_diag, spec.wishart_dof);
      return cholesky_lower(sigma);
    };

    std::optional<DenseMatrix> chol = draw_factor();
    if (!chol) chol = draw_factor();  // one resample, then give up
    if (!chol)
      throw ContractViolation("build_gaussian_mixture: degenerate Wishart covariance draw");

    for (std::size_t p = 0; p < spec.points_per_cluster; ++p) {
      ds.points.push_back(sample_gaussian(rng, mu, *chol));
      ds.cluster_ids.push_back(c);
    }
  }

  if (spec.center) {
    DenseVector mean(spec.dim, 0.0);
    for (const DenseVector& x : ds.points)
      for (std::size_t i = 0; i < spec.dim; ++i) mean[i] += x[i];
    const double inv_n = 1.0 / static_cast<double>(ds.points.size());
    for (std::size_t i = 0; i < spec.dim; ++i) mean[i] *= inv_n;
    for (DenseVector& x : ds.points)
      for (std::size_t i = 0; i < spec.dim; ++i) x[i] -= mean[i];
  }

  for (const DenseVector& x : ds.points)
    if (!all_finite(x))
      throw ContractViolation("build_gaussian_mixture: non-finite sample");
  return ds;
}

void ImageCorpusSpec::validate() const {
  if (n_images == 0) throw ContractViolation("ImageCorpusSpec: n_images must be positive");
  if (channels == 0) throw ContractViolation("ImageCorpusSpec: channels must be positive");
  if (patch_size == 0) throw ContractViolation("ImageCorpusSpec: patch_size must be positive");
  if (height % patch_size != 0 || width % patch_size != 0)
    throw ContractViolation("ImageCorpusSpec: height and width must be divisible by patch_size");
}

namespace {

// Pixel layout inside a flat image vector: channel planes, row-major.
std::size_t pixel_index(const ImageCorpusSpec& s, std::size_t c, std::size_t y, std::size_t x) {
  return (c * s.height + y) * s.width + x;
}

void render_gaussian_blobs(const ImageCorpusSpec& s, Rng& rng, DenseVector& img) {
  const std::size_t n_blobs = 2 + rng.next_below(3);
  struct Blob {
    double cx, cy, sigma, amp;
  };
  std::vector<Blob> blobs(n_blobs);
  for (Blob& b : blobs) {
    b.cx = rng.uniform(0.0, static_cast<double>(s.width - 1));
    b.cy = rng.uniform(0.0, static_cast<double>(s.height - 1));
    b.sigma = rng.uniform(0.1, 0.35) * static_cast<double>(std::min(s.width, s.height));
    b.amp = rng.uniform(0.5, 1.0);
  }
  for (std::size_t c = 0; c < s.channels; ++c) {
    const double channel_shift = s.channels > 1 ? rng.uniform(-1.0, 1.0) : 0.0;
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        double v = 0.0;
        for (const Blob& b : blobs) {
          const double dx = static_cast<double>(x) - b.cx + channel_shift;
          const double dy = static_cast<double>(y) - b.cy;
          v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        }
        img[pixel_index(s, c, y, x)] = v;
      }
    }
  }
}

void render_sinusoids(const ImageCorpusSpec& s, Rng& rng, DenseVector& img) {
  const double fx = rng.uniform(0.5, 2.5);
  const double fy = rng.uniform(0.5, 2.5);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double fx2 = rng.uniform(0.5, 2.5);
  const double fy2 = rng.uniform(0.5, 2.5);
  const double mix = rng.uniform(0.2, 0.8);
  for (std::size_t c = 0; c < s.channels; ++c) {
    const double channel_phase = phase + static_cast<double>(c) * 0.7;
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        const double u = static_cast<double>(x) / static_cast<double>(s.width);
        const double v = static_cast<double>(y) / static_cast<double>(s.height);
        const double w1 = std::sin(2.0 * std::numbers::pi * (fx * u + fy * v) + channel_phase);
        const double w2 = std::sin(2.0 * std::numbers::pi * (fx2 * u - fy2 * v));
        img[pixel_index(s, c, y, x)] = mix * w1 + (1.0 - mix) * w2;
      }
    }
  }
}

void normalize_to_unit_range(DenseVector& img) {
  double lo = img[0], hi = img[0];
  for (double v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  if (span <= 0.0) {
    for (double& v : img.data) v = 0.5;
    return;
  }
  for (double& v : img.data) v = (v - lo) / span;
}

}  // namespace

DenseMatrix patchify_image(const DenseVector& pixels, const ImageCorpusSpec& spec) {
  if (pixels.len != spec.channels * spec.height * spec.width)
    throw ContractViolation("patchify_image: pixel count mismatch");
  const std::size_t gw = spec.width / spec.patch_size;
  DenseMatrix tokens(spec.n_tokens(), spec.token_dim());
  for (std::size_t t = 0; t < spec.n_tokens(); ++t) {
    const std::size_t py = t / gw;
    const std::size_t px = t % gw;
    std::size_t e = 0;
    for (std::size_t c = 0; c < spec.channels; ++c)
      for (std::size_t iy = 0; iy < spec.patch_size; ++iy)
        for (std::size_t ix = 0; ix < spec.patch_size; ++ix)
          tokens(t, e++) = pixels[pixel_index(spec, c, py * spec.patch_size + iy,
                                              px * spec.patch_size + ix)];
  }
  return tokens;
}

DenseVector unpatchify_image(const DenseMatrix& tokens, const ImageCorpusSpec& spec) {
  if (tokens.rows != spec.n_tokens() || tokens.cols != spec.token_dim())
    throw ContractViolation("unpatchify_image: token shape mismatch");
  const std::size_t gw = spec.width / spec.patch_size;
  DenseVector pixels(spec.channels * spec.height * spec.width);
  for (std::size_t t = 0; t < spec.n_tokens(); ++t) {
    const std::size_t py = t / gw;
    const std::size_t px = t % gw;
    std::size_t e = 0;
    for (std::size_t c = 0; c < spec.channels; ++c)
      for (std::size_t iy = 0; iy < spec.patch_size; ++iy)
        for (std::size_t ix = 0; ix < spec.patch_size; ++ix)
          pixels[pixel_index(spec, c, py * spec.patch_size + iy,
                             px * spec.patch_size + ix)] = tokens(t, e++);
  }
  return pixels;
}

ImageCorpus build_image_corpus(const ImageCorpusSpec& spec, Rng& rng) {
  spec.validate();
  ImageCorpus corpus;
  corpus.spec = spec;
  corpus.images.reserve(spec.n_images);
  for (std::size_t i = 0; i < spec.n_images; ++i) {
    DenseVector img(spec.channels * spec.height * spec.width, 0.0);
    ImageGenerator gen = spec.generator;
    if (gen == ImageGenerator::kMixed)
      gen = (i % 2 == 0) ? ImageGenerator::kGaussianBlobs : ImageGenerator::kSinusoidalTextures;
    if (gen == ImageGenerator::kGaussianBlobs) {
      render_gaussian_blobs(spec, rng, img);
    } else {
      render_sinusoids(spec, rng, img);
    }
    normalize_to_unit_range(img);
    corpus.images.push_back(patchify_image(img, spec));
  }
  return corpus;
}

DenseVector patch_normalize(const DenseVector& patch) {
  if (patch.len < 2) throw ContractViolation("patch_normalize: patch length must be >= 2");
  const double n = static_cast<double>(patch.len);
  double mean = 0.0;
  for (double v : patch.data) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : patch.data) {
    const double d = v - mean;
    var += d * d;
  }
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + 1e-6);
  DenseVector out(patch.len);
  for (std::size_t i = 0; i < patch.len; ++i) out[i] = (patch[i] - mean) * inv_std;
  return out;
}

DenseMatrix patch_normalize_tokens(const DenseMatrix& tokens) {
  DenseMatrix out(tokens.rows, tokens.cols);
  DenseVector row(tokens.cols);
  for (std::size_t i = 0; i < tokens.rows; ++i) {
    for (std::size_t j = 0; j < tokens.cols; ++j) row[j] = tokens(i, j);
    const DenseVector norm = patch_normalize(row);
    for (std::size_t j = 0; j < tokens.cols; ++j) out(i, j) = norm[j];
  }
  return out;
}

}  // namespace maelab
