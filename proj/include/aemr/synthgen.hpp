#pragma once

// Seeded generators for the synthetic experiments.
//
// Outcomes follow
//   y = sum_i alpha_i x_i + T sum_i beta_i x_i + T U sum_{i<g} x_i x_g + tau eps
// with eps ~ Normal(0, noise_sd). Interactions run over the important
// covariates only. Every draw comes from a per-row generator keyed on
// (seed, part, arm, row within arm), so output never depends on the thread
// count, and control pools of different sizes share their common prefix.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aemr/core.hpp"

namespace aemr {

enum class Scenario {
  kIrrelevant,
  kExpDecay,
  kImbalance,
  kNoise,
  kMissingCorrelated,
};

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct DgpSpec {
  Scenario scenario = Scenario::kIrrelevant;
  std::size_t n_control = 15000;
  std::size_t n_treated = 15000;
  // Holdout sizes; zero means "same as the main sample".
  std::size_t holdout_control = 0;
  std::size_t holdout_treated = 0;
  std::size_t p_important = 5;
  std::size_t p_irrelevant = 10;
  // Empty means drawn (or fixed) per scenario. Irrelevant covariates always
  // get zero coefficients when drawn.
  std::vector<double> alpha;
  std::vector<double> beta;
  double U = 0.0;
  double tau = 0.0;
  double noise_sd = 1.0;
  double missing_rate = 0.0;
  // Row-major p x p correlation for the latent normals of the missing
  // scenario. Empty means blocks of `block_size` with `block_rho` inside.
  std::vector<double> correlation;
  std::size_t block_size = 5;
  double block_rho = 0.5;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  std::size_t p() const { return p_important + p_irrelevant; }
};

// Full-scale defaults for a scenario.
DgpSpec scenario_defaults(Scenario s);

// Throws kConfig on inconsistent settings.
void validate_spec(const DgpSpec& spec);

struct OutcomeModel {
  std::vector<double> alpha;
  std::vector<double> beta;
  double U = 0.0;
  // Interactions use covariates [0, n_interacting).
  std::size_t n_interacting = 0;
};

// Noiseless part of the outcome plus `noise` (already scaled by tau).
double gen_outcome(const OutcomeModel& m, std::span<const double> x, bool treated,
                   double noise = 0.0);
// gen_outcome(x, 1) - gen_outcome(x, 0) without noise.
double true_cate(const OutcomeModel& m, std::span<const double> x);

// 64 * (1/2)^i for the 1-based covariate index i.
double exp_decay_alpha(std::size_t i);

struct SyntheticData {
  Dataset data;
  Dataset holdout;
  std::vector<double> true_cate;
  std::vector<double> holdout_true_cate;
  OutcomeModel model;
};

// Controls come first, then treated units, in both samples.
SyntheticData gen_scenario(const DgpSpec& spec);

// Correlated binaries with values deleted completely at random. The
// returned datasets carry a missing mask and use code 2 as the sentinel.
SyntheticData gen_missing_correlated(const DgpSpec& spec);

}  // namespace aemr
