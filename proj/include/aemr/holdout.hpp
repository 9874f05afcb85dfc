#pragma once

// Covariate relevance from a holdout set: least-squares fits, the prediction
// error PE of a dropped set, the balancing factor BF of a candidate drop, the
// match quality MQ trading the two off, and permutation importance.
//
// Regressions treat covariate codes as numeric and always include an
// intercept column first. Unobserved cells are replaced by the observed mean
// of their column for fitting purposes only.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aemr/core.hpp"

namespace aemr {

struct FitResult {
  Eigen::VectorXd beta;
  // Mean squared training residual.
  double training_loss = 0.0;
  // Set for lambda == 0 fits whose design has deficient column rank; beta is
  // then the minimum-norm solution.
  bool rank_deficient = false;
};

// Minimizes |y - X beta|^2 + lambda |beta|^2.
FitResult fit_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            double ridge_lambda);

// Intercept plus the `retained` covariates for `rows`.
Eigen::MatrixXd design_matrix(const Dataset& d, std::span<const UnitId> rows,
                              const CovariateSet& retained);

// Control-fit MSE on controls plus treated-fit MSE on treated, both using the
// covariates not in `dropped`.
double prediction_error(const Dataset& holdout, const CovariateSet& dropped,
                        double ridge_lambda);

// matched_control / remaining_control + matched_treated / remaining_treated.
// A side with nothing remaining contributes 0 when nothing was matched there
// and 1 otherwise.
double balancing_factor(std::size_t matched_control,
                        std::size_t remaining_control,
                        std::size_t matched_treated,
                        std::size_t remaining_treated);

// C * bf - pe; larger is better.
double match_quality(double pe, double bf, double tradeoff_c);

struct ImportanceOptions {
  std::size_t n_shuffles = 100;
  double ridge_lambda = 1.0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// score_j = mean over shuffles of loss(column j permuted, refit) / loss(no
// permutation), where loss is the two-arm training error used by PE. Scores
// near 1 mean the covariate carries no signal.
std::vector<double> permutation_importance(const Dataset& holdout,
                                           const ImportanceOptions& opts);

// w_j = max(0, score_j - min_k score_k).
WeightVector weights_from_importance(std::span<const double> scores);

}  // namespace aemr
