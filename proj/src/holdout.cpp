#include "aemr/holdout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "aemr/parallel.hpp"

namespace aemr {

namespace {

// Observed mean of each covariate column, used in place of unobserved cells.
std::vector<double> observed_means(const Dataset& d) {
  std::vector<double> sum(d.p(), 0.0);
  std::vector<std::size_t> count(d.p(), 0);
  for (std::size_t i = 0; i < d.n(); ++i) {
    for (std::size_t j = 0; j < d.p(); ++j) {
      if (d.missing(i, j)) continue;
      sum[j] += d.code(i, j);
      ++count[j];
    }
  }
  for (std::size_t j = 0; j < d.p(); ++j) {
    sum[j] = count[j] > 0 ? sum[j] / static_cast<double>(count[j]) : 0.0;
  }
  return sum;
}

double cell_value(const Dataset& d, const std::vector<double>& means,
                  std::size_t i, std::size_t j) {
  return d.missing(i, j) ? means[j] : static_cast<double>(d.code(i, j));
}

Eigen::MatrixXd design_with_means(const Dataset& d,
                                  std::span<const UnitId> rows,
                                  const CovariateSet& retained,
                                  const std::vector<double>& means) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(retained.size() + 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    x(ri, 0) = 1.0;
    Eigen::Index c = 1;
    for (auto j : retained) x(ri, c++) = cell_value(d, means, rows[r], j);
  }
  return x;
}

Eigen::VectorXd outcomes_of(const Dataset& d, std::span<const UnitId> rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y(static_cast<Eigen::Index>(r)) = d.outcome(rows[r]);
  }
  return y;
}

struct Arms {
  std::vector<UnitId> control;
  std::vector<UnitId> treated;
};

Arms split_arms(const Dataset& d) {
  Arms a;
  for (UnitId u = 0; u < d.n(); ++u) {
    (d.treated(u) ? a.treated : a.control).push_back(u);
  }
  if (a.control.empty() || a.treated.empty()) {
    throw Error(ErrorCode::kValidation,
                "holdout needs at least one treated and one control unit");
  }
  return a;
}

// Solves (G + lambda I) beta = c; pseudo-inverse when lambda == 0.
Eigen::VectorXd solve_normal(const Eigen::MatrixXd& gram,
                             const Eigen::VectorXd& rhs, double lambda) {
  if (lambda > 0.0) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += lambda;
    return a.ldlt().solve(rhs);
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
  return cod.solve(rhs);
}

// One arm of the importance computation. Keeps the Gram matrix of the full
// design so a permuted column only costs O(n p) to refit.
class ArmModel {
 public:
  ArmModel(Eigen::MatrixXd x, Eigen::VectorXd y, double lambda)
      : x_(std::move(x)), y_(std::move(y)), lambda_(lambda) {
    gram_ = x_.transpose() * x_;
    rhs_ = x_.transpose() * y_;
  }

  double base_loss() const {
    Eigen::VectorXd beta = solve_normal(gram_, rhs_, lambda_);
    return (y_ - x_ * beta).squaredNorm() / static_cast<double>(y_.size());
  }

  // Loss after replacing design column `col` by `values`.
  double loss_with_column(Eigen::Index col, const Eigen::VectorXd& values) const {
    Eigen::MatrixXd g = gram_;
    Eigen::VectorXd c = rhs_;
    Eigen::VectorXd cross = x_.transpose() * values;
    cross(col) = values.squaredNorm();
    g.col(col) = cross;
    g.row(col) = cross.transpose();
    c(col) = values.dot(y_);
    Eigen::VectorXd beta = solve_normal(g, c, lambda_);
    Eigen::VectorXd fitted = x_ * beta;
    fitted += (values - x_.col(col)) * beta(col);
    return (y_ - fitted).squaredNorm() / static_cast<double>(y_.size());
  }

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  double lambda_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
};

}  // namespace

FitResult fit_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            double ridge_lambda) {
  if (x.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "least squares needs >= 1 row");
  }
  if (x.rows() != y.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("design has {} rows, outcome has {}", x.rows(),
                            y.size()));
  }
  if (!(ridge_lambda >= 0.0)) {
    throw Error(ErrorCode::kConfig, "ridge lambda must be >= 0");
  }
  FitResult fit;
  if (ridge_lambda > 0.0) {
    Eigen::MatrixXd a = x.transpose() * x;
    a.diagonal().array() += ridge_lambda;
    fit.beta = a.ldlt().solve(x.transpose() * y);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
    fit.beta = cod.solve(y);
    fit.rank_deficient = cod.rank() < x.cols();
  }
  fit.training_loss =
      (y - x * fit.beta).squaredNorm() / static_cast<double>(x.rows());
  return fit;
}

Eigen::MatrixXd design_matrix(const Dataset& d, std::span<const UnitId> rows,
                              const CovariateSet& retained) {
  return design_with_means(d, rows, retained, observed_means(d));
}

double prediction_error(const Dataset& holdout, const CovariateSet& dropped,
                        double ridge_lambda) {
  const auto arms = split_arms(holdout);
  const auto retained = CovariateSet::complement(dropped, holdout.p());
  const auto means = observed_means(holdout);
  double pe = 0.0;
  for (const auto* rows : {&arms.control, &arms.treated}) {
    auto x = design_with_means(holdout, *rows, retained, means);
    pe += fit_least_squares(x, outcomes_of(holdout, *rows), ridge_lambda)
              .training_loss;
  }
  return pe;
}

double balancing_factor(std::size_t matched_control,
                        std::size_t remaining_control,
                        std::size_t matched_treated,
                        std::size_t remaining_treated) {
  auto ratio = [](std::size_t matched, std::size_t remaining) {
    if (remaining == 0) return matched == 0 ? 0.0 : 1.0;
    return static_cast<double>(matched) / static_cast<double>(remaining);
  };
  return ratio(matched_control, remaining_control) +
         ratio(matched_treated, remaining_treated);
}

double match_quality(double pe, double bf, double tradeoff_c) {
  return tradeoff_c * bf - pe;
}

std::vector<double> permutation_importance(const Dataset& holdout,
                                           const ImportanceOptions& opts) {
  if (opts.n_shuffles == 0) {
    throw Error(ErrorCode::kConfig, "permutation importance needs >= 1 shuffle");
  }
  const auto arms = split_arms(holdout);
  const auto all = CovariateSet::all(holdout.p());
  const auto means = observed_means(holdout);

  // Position of each holdout row inside its arm.
  std::vector<std::pair<int, Eigen::Index>> slot(holdout.n());
  for (std::size_t r = 0; r < arms.control.size(); ++r) {
    slot[arms.control[r]] = {0, static_cast<Eigen::Index>(r)};
  }
  for (std::size_t r = 0; r < arms.treated.size(); ++r) {
    slot[arms.treated[r]] = {1, static_cast<Eigen::Index>(r)};
  }
  const ArmModel models[2] = {
      ArmModel(design_with_means(holdout, arms.control, all, means),
               outcomes_of(holdout, arms.control), opts.ridge_lambda),
      ArmModel(design_with_means(holdout, arms.treated, all, means),
               outcomes_of(holdout, arms.treated), opts.ridge_lambda)};
  const double base = models[0].base_loss() + models[1].base_loss();

  double y_scale = 0.0;
  for (std::size_t i = 0; i < holdout.n(); ++i) {
    y_scale += holdout.outcome(i) * holdout.outcome(i);
  }
  y_scale /= static_cast<double>(holdout.n());
  // Keeps the ratio finite when a model fits the holdout exactly.
  const double floor = 1e-12 * std::max(1.0, y_scale);

  const std::size_t p = holdout.p();
  std::vector<double> loss_sum(p * opts.n_shuffles, 0.0);
  parallel_for(p * opts.n_shuffles, opts.threads, [&](std::size_t task) {
    const std::size_t j = task / opts.n_shuffles;
    const std::size_t t = task % opts.n_shuffles;
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed),
                      static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(j),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::vector<UnitId> perm(holdout.n());
    std::iota(perm.begin(), perm.end(), UnitId{0});
    std::shuffle(perm.begin(), perm.end(), rng);

    Eigen::VectorXd col[2] = {
        Eigen::VectorXd(static_cast<Eigen::Index>(arms.control.size())),
        Eigen::VectorXd(static_cast<Eigen::Index>(arms.treated.size()))};
    for (std::size_t i = 0; i < holdout.n(); ++i) {
      const auto [arm, pos] = slot[i];
      col[arm](pos) = cell_value(holdout, means, perm[i], j);
    }
    const auto design_col = static_cast<Eigen::Index>(j + 1);
    loss_sum[task] = models[0].loss_with_column(design_col, col[0]) +
                     models[1].loss_with_column(design_col, col[1]);
  });

  std::vector<double> scores(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double total = 0.0;
    for (std::size_t t = 0; t < opts.n_shuffles; ++t) {
      total += loss_sum[j * opts.n_shuffles + t];
    }
    const double mean = total / static_cast<double>(opts.n_shuffles);
    scores[j] = (mean + floor) / (base + floor);
  }
  return scores;
}

WeightVector weights_from_importance(std::span<const double> scores) {
  if (scores.empty()) return WeightVector{};
  const double lo = *std::min_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    w[j] = std::max(0.0, scores[j] - lo);
  }
  return WeightVector(std::move(w));
}

}  // namespace aemr
