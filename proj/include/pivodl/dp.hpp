#pragma once

#include "pivodl/rng.hpp"

namespace pivodl::dp {

struct DpParams {
  double epsilon = 8.0;
  double delta = 1e-5;
  double clip = 2.0;
  double sample_rate = 1.0;  // q
  int steps = 5;             // T: one leaf release round per boosting tree
  double calibration = 1.0;  // c
  bool enabled = true;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct NoisyLeaf {
  double value = 0.0;
  bool was_perturbed = false;
};

// w / max(1, |w| / C)
double clip_leaf(double w, double clip);

// c * q * sqrt(T * ln(1/delta)) / epsilon
double noise_sigma(const DpParams& params);

// Sensitivity of a clipped leaf weight: two clipped values differ by at most 2C.
inline double leaf_sensitivity(double clip) { return 2.0 * clip; }

// clip_leaf(w, C) + N(0, (2C * sigma)^2).
NoisyLeaf perturb_leaf(double w, const DpParams& params, Rng& rng);
NoisyLeaf perturb_leaf(double w, double clip, double sigma, Rng& rng);

}  // namespace pivodl::dp
