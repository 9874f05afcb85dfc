#include "aemr/synthgen.hpp"

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "aemr/parallel.hpp"

namespace aemr {

namespace {

constexpr std::uint32_t kCoefficientStream = 0xC0EFu;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t part,
                         std::uint32_t arm, std::uint64_t row) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    part,
                    arm,
                    static_cast<std::uint32_t>(row),
                    static_cast<std::uint32_t>(row >> 32)};
  return std::mt19937_64(seq);
}

bool decaying(Scenario s) {
  return s == Scenario::kExpDecay || s == Scenario::kImbalance;
}

OutcomeModel build_model(const DgpSpec& spec) {
  const std::size_t p = spec.p();
  OutcomeModel m;
  m.U = spec.U;
  m.n_interacting = spec.p_important;
  m.alpha.assign(p, 0.0);
  m.beta.assign(p, 0.0);
  auto rng = make_rng(spec.seed, kCoefficientStream, 0, 0);
  std::normal_distribution<double> beta_dist(1.5, 0.15);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < spec.p_important; ++i) {
    if (decaying(spec.scenario)) {
      m.alpha[i] = exp_decay_alpha(i + 1);
    } else {
      const double s = coin(rng) ? 1.0 : -1.0;
      m.alpha[i] = std::normal_distribution<double>(10.0 * s, 1.0)(rng);
    }
    m.beta[i] = beta_dist(rng);
  }
  if (!spec.alpha.empty()) m.alpha = spec.alpha;
  if (!spec.beta.empty()) m.beta = spec.beta;
  return m;
}

struct Part {
  std::vector<Code> codes;
  std::vector<std::uint8_t> treatment;
  std::vector<double> outcome;
  std::vector<std::uint8_t> mask;
  std::vector<double> cate;
};

// Draws one row of covariate values in {0, 1}.
using RowSampler =
    std::function<void(std::mt19937_64&, bool treated, std::span<double> x,
                       std::span<std::uint8_t> missing)>;

Part gen_part(const DgpSpec& spec, const OutcomeModel& model,
              std::uint32_t part_id, std::size_t n_c, std::size_t n_t,
              bool with_mask, const RowSampler& sampler) {
  const std::size_t p = spec.p();
  const std::size_t n = n_c + n_t;
  Part out;
  out.codes.resize(n * p);
  out.treatment.resize(n);
  out.outcome.resize(n);
  out.cate.resize(n);
  if (with_mask) out.mask.assign(n * p, 0);

  parallel_for(n, spec.threads, [&](std::size_t row) {
    const bool treated = row >= n_c;
    const std::size_t idx = treated ? row - n_c : row;
    auto rng = make_rng(spec.seed, part_id, treated ? 1 : 0, idx);
    std::vector<double> x(p);
    std::vector<std::uint8_t> missing(p, 0);
    sampler(rng, treated, x, missing);
    const double eps =
        spec.tau > 0.0
            ? spec.tau * std::normal_distribution<double>(0.0, spec.noise_sd)(rng)
            : 0.0;
    out.treatment[row] = treated ? 1 : 0;
    out.outcome[row] = gen_outcome(model, x, treated, eps);
    out.cate[row] = true_cate(model, x);
    for (std::size_t j = 0; j < p; ++j) {
      if (with_mask && missing[j]) {
        out.mask[row * p + j] = 1;
        out.codes[row * p + j] = 2;
      } else {
        out.codes[row * p + j] = static_cast<Code>(x[j]);
      }
    }
  });
  return out;
}

Dataset to_dataset(const DgpSpec& spec, Part& part, bool with_mask) {
  std::vector<CovariateSpec> specs;
  for (std::size_t j = 0; j < spec.p(); ++j) {
    specs.push_back({fmt::format("x{}", j + 1), with_mask ? 3u : 2u});
  }
  return Dataset(std::move(specs), std::move(part.codes),
                 std::move(part.treatment), std::move(part.outcome),
                 std::move(part.mask));
}

SyntheticData assemble(const DgpSpec& spec, const OutcomeModel& model,
                       bool with_mask, const RowSampler& sampler) {
  const std::size_t hc = spec.holdout_control ? spec.holdout_control : spec.n_control;
  const std::size_t ht = spec.holdout_treated ? spec.holdout_treated : spec.n_treated;
  auto main = gen_part(spec, model, 0, spec.n_control, spec.n_treated,
                       with_mask, sampler);
  auto hold = gen_part(spec, model, 1, hc, ht, with_mask, sampler);
  SyntheticData out;
  out.true_cate = std::move(main.cate);
  out.holdout_true_cate = std::move(hold.cate);
  out.data = to_dataset(spec, main, with_mask);
  out.holdout = to_dataset(spec, hold, with_mask);
  out.model = model;
  return out;
}

Eigen::MatrixXd correlation_of(const DgpSpec& spec) {
  const auto p = static_cast<Eigen::Index>(spec.p());
  Eigen::MatrixXd sigma(p, p);
  if (!spec.correlation.empty()) {
    for (Eigen::Index r = 0; r < p; ++r) {
      for (Eigen::Index c = 0; c < p; ++c) {
        sigma(r, c) = spec.correlation[static_cast<std::size_t>(r * p + c)];
      }
    }
    return sigma;
  }
  const auto block = static_cast<Eigen::Index>(std::max<std::size_t>(1, spec.block_size));
  for (Eigen::Index r = 0; r < p; ++r) {
    for (Eigen::Index c = 0; c < p; ++c) {
      sigma(r, c) = r == c ? 1.0 : (r / block == c / block ? spec.block_rho : 0.0);
    }
  }
  return sigma;
}

// L with L L^T = sigma; throws when sigma is not symmetric PSD.
Eigen::MatrixXd factor(const Eigen::MatrixXd& sigma) {
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw Error(ErrorCode::kConfig, "correlation matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const auto& values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  if (values.minCoeff() < -1e-10 * scale) {
    throw Error(ErrorCode::kConfig,
                fmt::format("correlation matrix is not positive semi-definite "
                            "(smallest eigenvalue {:.3g})",
                            values.minCoeff()));
  }
  return eig.eigenvectors() *
         values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kIrrelevant: return "irrelevant";
    case Scenario::kExpDecay: return "exp_decay";
    case Scenario::kImbalance: return "imbalance";
    case Scenario::kNoise: return "noise";
    case Scenario::kMissingCorrelated: return "missing_correlated";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& name) {
  for (auto s : {Scenario::kIrrelevant, Scenario::kExpDecay, Scenario::kImbalance,
                 Scenario::kNoise, Scenario::kMissingCorrelated}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::kConfig, fmt::format("unknown scenario '{}'", name));
}

DgpSpec scenario_defaults(Scenario s) {
  DgpSpec spec;
  spec.scenario = s;
  switch (s) {
    case Scenario::kIrrelevant:
      break;
    case Scenario::kExpDecay:
      spec.p_important = 10;
      spec.p_irrelevant = 0;
      break;
    case Scenario::kImbalance:
      spec.n_treated = 2000;
      spec.n_control = 40000;
      spec.p_important = 10;
      spec.p_irrelevant = 0;
      break;
    case Scenario::kNoise:
      spec.p_irrelevant = 8;
      spec.tau = 0.25;
      spec.noise_sd = 1.0;
      break;
    case Scenario::kMissingCorrelated:
      spec.n_control = 15000;
      spec.n_treated = 5000;
      spec.p_important = 10;
      spec.p_irrelevant = 0;
      spec.missing_rate = 0.2;
      break;
  }
  return spec;
}

void validate_spec(const DgpSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  if (spec.p() == 0) fail("a scenario needs at least one covariate");
  if (!spec.alpha.empty() && spec.alpha.size() != spec.p()) {
    fail(fmt::format("alpha has {} entries, expected {}", spec.alpha.size(), spec.p()));
  }
  if (!spec.beta.empty() && spec.beta.size() != spec.p()) {
    fail(fmt::format("beta has {} entries, expected {}", spec.beta.size(), spec.p()));
  }
  if (!(spec.tau >= 0.0) || !(spec.noise_sd >= 0.0)) {
    fail("tau and noise_sd must be >= 0");
  }
  if (!std::isfinite(spec.U)) fail("U must be finite");
  if (!(spec.missing_rate >= 0.0 && spec.missing_rate <= 1.0)) {
    fail("missing_rate must lie in [0, 1]");
  }
  const bool missing = spec.scenario == Scenario::kMissingCorrelated;
  if (!missing && spec.missing_rate > 0.0) {
    fail("missing_rate applies to the missing_correlated scenario only");
  }
  if (!missing && !spec.correlation.empty()) {
    fail("a correlation matrix applies to the missing_correlated scenario only");
  }
  if (!spec.correlation.empty() &&
      spec.correlation.size() != spec.p() * spec.p()) {
    fail(fmt::format("correlation has {} entries, expected {}",
                     spec.correlation.size(), spec.p() * spec.p()));
  }
  if (!(spec.block_rho >= -1.0 && spec.block_rho <= 1.0)) {
    fail("block_rho must lie in [-1, 1]");
  }
}

double gen_outcome(const OutcomeModel& m, std::span<const double> x,
                   bool treated, double noise) {
  if (x.size() != m.alpha.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("row has {} covariates, model has {}", x.size(),
                            m.alpha.size()));
  }
  double y = noise;
  for (std::size_t i = 0; i < x.size(); ++i) y += m.alpha[i] * x[i];
  if (treated) y += true_cate(m, x);
  return y;
}

double true_cate(const OutcomeModel& m, std::span<const double> x) {
  double effect = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) effect += m.beta[i] * x[i];
  if (m.U != 0.0) {
    double pairs = 0.0;
    const std::size_t k = std::min(m.n_interacting, x.size());
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t g = i + 1; g < k; ++g) pairs += x[i] * x[g];
    }
    effect += m.U * pairs;
  }
  return effect;
}

double exp_decay_alpha(std::size_t i) { return 64.0 * std::pow(0.5, static_cast<double>(i)); }

SyntheticData gen_scenario(const DgpSpec& spec) {
  validate_spec(spec);
  if (spec.scenario == Scenario::kMissingCorrelated) {
    return gen_missing_correlated(spec);
  }
  const auto model = build_model(spec);
  const std::size_t p_imp = spec.p_important;
  const RowSampler sampler = [&](std::mt19937_64& rng, bool treated,
                                 std::span<double> x, std::span<std::uint8_t>) {
    std::bernoulli_distribution half(0.5);
    std::bernoulli_distribution irrelevant(treated ? 0.9 : 0.1);
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] = (j < p_imp ? half(rng) : irrelevant(rng)) ? 1.0 : 0.0;
    }
  };
  return assemble(spec, model, false, sampler);
}

SyntheticData gen_missing_correlated(const DgpSpec& spec) {
  validate_spec(spec);
  const Eigen::MatrixXd l = factor(correlation_of(spec));
  const auto model = build_model(spec);
  const double rate = spec.missing_rate;
  const RowSampler sampler = [&](std::mt19937_64& rng, bool,
                                 std::span<double> x,
                                 std::span<std::uint8_t> missing) {
    const auto p = static_cast<Eigen::Index>(x.size());
    Eigen::VectorXd g(p);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < p; ++j) g(j) = normal(rng);
    const Eigen::VectorXd z = l * g;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      x[sj] = z(j) > 0.0 ? 1.0 : 0.0;
      missing[sj] = unit(rng) < rate ? 1 : 0;
    }
  };
  return assemble(spec, model, true, sampler);
}

}  // namespace aemr
