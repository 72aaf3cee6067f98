#include "pivodl/dp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pivodl::dp {

void DpParams::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (!(clip > 0.0)) throw std::invalid_argument("clip must be positive");
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) throw std::invalid_argument("sample_rate must lie in (0, 1]");
  if (steps < 1) throw std::invalid_argument("steps must be at least 1");
  if (!(calibration > 0.0)) throw std::invalid_argument("calibration must be positive");
}

double clip_leaf(double w, double clip) {
  if (!(clip > 0.0)) throw std::invalid_argument("clip must be positive");
  return w / std::max(1.0, std::fabs(w) / clip);
}

double noise_sigma(const DpParams& params) {
  params.validate();
  return params.calibration * params.sample_rate *
         std::sqrt(static_cast<double>(params.steps) * std::log(1.0 / params.delta)) / params.epsilon;
}

NoisyLeaf perturb_leaf(double w, double clip, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be non-negative");
  const double clipped = clip_leaf(w, clip);
  if (sigma == 0.0) return {clipped, true};
  std::normal_distribution<double> noise(0.0, leaf_sensitivity(clip) * sigma);
  return {clipped + noise(rng), true};
}

NoisyLeaf perturb_leaf(double w, const DpParams& params, Rng& rng) {
  if (!params.enabled) throw std::logic_error("perturb_leaf called with DP disabled");
  return perturb_leaf(w, params.clip, noise_sigma(params), rng);
}

}  // namespace pivodl::dp
