#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "vdctr/errors.hpp"
#include "vdctr/numerics/tensor.hpp"
#include "vdctr/rng.hpp"

namespace vdctr::encoder {

/// Vector analogs of the usual image augmentations: masking for random crops,
/// additive Gaussian jitter for colour jitter, replacing every coordinate by
/// the mean for greyscale, and negating a random coordinate subset for flips.
struct AugmentationConfig {
  double mask_fraction = 0.2;
  double jitter_sigma = 0.1;
  double grey_prob = 0.05;
  double flip_prob = 0.05;

  bool any_active() const {
    return mask_fraction > 0.0 || jitter_sigma > 0.0 || grey_prob > 0.0 || flip_prob > 0.0;
  }

  void validate() const {
    auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!unit(mask_fraction) || !unit(grey_prob) || !unit(flip_prob) || !(jitter_sigma >= 0.0)) {
      throw ConfigError("augmentation: probabilities must lie in [0,1], jitter >= 0");
    }
  }
};

namespace detail {

inline std::vector<double> augment_once(std::span<const double> image,
                                        const AugmentationConfig& cfg, Rng& rng) {
  std::vector<double> x(image.begin(), image.end());
  const std::size_t d = x.size();
  const auto n_mask = static_cast<std::size_t>(std::floor(cfg.mask_fraction * d + 0.5));
  if (n_mask > 0) {
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n_mask; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, d - 1);
      std::swap(idx[i], idx[pick(rng)]);
      x[idx[i]] = 0.0;
    }
  }
  if (cfg.jitter_sigma > 0.0) {
    for (double& v : x) v += cfg.jitter_sigma * standard_normal(rng);
  }
  if (cfg.grey_prob > 0.0 && uniform01(rng) < cfg.grey_prob) {
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(d);
    std::fill(x.begin(), x.end(), m);
  }
  if (cfg.flip_prob > 0.0 && uniform01(rng) < cfg.flip_prob) {
    for (double& v : x) {
      if (uniform01(rng) < 0.5) v = -v;
    }
  }
  return x;
}

}  // namespace detail

/// Draws t(image). A degenerate (near-zero) draw is resampled once; a second
/// degenerate draw throws DegenerateVectorError.
inline std::vector<double> augment(std::span<const double> image,
                                   const AugmentationConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto x = detail::augment_once(image, cfg, rng);
    if (l2_norm(x) > kNormFloor) return x;
  }
  throw DegenerateVectorError("augmentation produced a degenerate vector twice");
}

}  // namespace vdctr::encoder
