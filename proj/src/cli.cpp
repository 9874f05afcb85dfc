#include "aemr/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "aemr/engine.hpp"
#include "aemr/estimate.hpp"
#include "aemr/holdout.hpp"
#include "aemr/io.hpp"
#include "aemr/oracle.hpp"
#include "aemr/synthgen.hpp"
#include "json.hpp"

namespace aemr {

namespace {

namespace fs = std::filesystem;

unsigned parse_thread_count(const std::string& text) {
  unsigned value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || value < 1 || value > 1024) {
    throw Error(ErrorCode::kConfig,
                fmt::format("AEMR_THREADS must be an integer in [1, 1024], got '{}'", text));
  }
  return value;
}

using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

IngestOptions ingest_options(const DataOptions& o) {
  IngestOptions io;
  io.treatment = o.treatment;
  io.outcome = o.outcome;
  io.drop_cols = o.drop_cols;
  if (!o.id_col.empty()) io.id_col = o.id_col;
  io.missing = o.missing;
  return io;
}

Json data_echo(const DataOptions& o) {
  return Json{{"treatment", o.treatment},
              {"outcome", o.outcome},
              {"drop_cols", o.drop_cols},
              {"id_col", o.id_col},
              {"missing", o.missing}};
}

Json input_entry(const std::string& role, const std::string& path) {
  return Json{{"role", role}, {"path", path}, {"sha256", sha256_file(path)}};
}

// Writes every file, then a manifest listing their digests.
void write_outputs(const fs::path& dir,
                   const std::vector<std::pair<std::string, std::string>>& files,
                   Json manifest) {
  fs::create_directories(dir);
  Json digests = Json::object();
  for (const auto& [name, content] : files) {
    write_file(dir / name, content);
    digests[name] = sha256_hex(content);
  }
  manifest["outputs"] = std::move(digests);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Json manifest_head(const std::string& command, std::uint64_t seed) {
  return Json{{"tool", "aemr"}, {"version", kVersion}, {"command", command},
              {"seed", seed}};
}

std::string percent(std::size_t num, std::size_t den) {
  if (den == 0) return "n/a";
  return fmt::format("{:.4g}%", 100.0 * static_cast<double>(num) /
                                    static_cast<double>(den));
}

std::string dataset_csv(const Dataset& d, const std::vector<double>& cate) {
  std::string out;
  for (std::size_t j = 0; j < d.p(); ++j) out += csv_field(d.spec(j).name) + ",";
  out += "T,Y,true_cate\n";
  for (std::size_t i = 0; i < d.n(); ++i) {
    for (std::size_t j = 0; j < d.p(); ++j) {
      if (!d.missing(i, j)) out += std::to_string(d.code(i, j));
      out.push_back(',');
    }
    out += fmt::format("{},{},{}\n", d.treatment(i), format_number(d.outcome(i)),
                       format_number(cate[i]));
  }
  return out;
}

}  // namespace

int cmd_match(const MatchOptions& o, std::ostream& out) {
  const auto t0 = Clock::now();
  const auto main_csv = read_csv(o.data.input);
  std::optional<CsvTable> hold_csv;
  if (!o.holdout.empty()) hold_csv = read_csv(o.holdout);
  const auto in = ingest(main_csv, hold_csv ? &*hold_csv : nullptr,
                         ingest_options(o.data));
  const double ingest_ms = ms_since(t0);

  EngineConfig cfg;
  if (o.mode == "fixed") {
    cfg.mode = SelectionMode::kFixedWeight;
  } else if (o.mode == "adaptive") {
    cfg.mode = SelectionMode::kAdaptiveMq;
  } else {
    throw Error(ErrorCode::kConfig,
                fmt::format("unknown mode '{}' (fixed or adaptive)", o.mode));
  }
  if (!o.weights.empty()) cfg.weights = read_weights(o.weights, in.names);
  cfg.tradeoff_c = o.tradeoff_c;
  cfg.stop.exhaust_treated = !o.match_all_controls;
  cfg.stop.max_pe_degradation_fraction =
      o.no_pe_stop ? std::nullopt : std::optional<double>(o.stop_pe_frac);
  cfg.stop.max_balance_ratio_gap =
      o.no_bf_stop ? std::nullopt : std::optional<double>(o.stop_bf_gap);
  cfg.stop.max_iterations = o.max_iterations;
  cfg.stop.early_stop_before_important = o.early_stop_weight;
  cfg.missing_enabled = o.data.missing;
  cfg.seed = o.seed;
  cfg.ridge_lambda = o.ridge_lambda;
  cfg.importance_shuffles = o.importance_shuffles;
  cfg.importance_lambda = o.importance_lambda;
  cfg.threads = o.threads;

  const auto result = run(in.main.data, in.holdout ? &in.holdout->data : nullptr, cfg);
  const auto t1 = Clock::now();
  const auto records = estimate_all(result, in.main.data, o.threads);
  const double estimate_ms = ms_since(t1);

  std::size_t matched_treated = 0;
  for (const auto& r : records) matched_treated += r.treated ? 1 : 0;
  const std::size_t n_treated = in.main.data.count_treated();
  std::optional<double> ate_value;
  if (matched_treated > 0) ate_value = ate(records);

  Json manifest = manifest_head("match", o.seed);
  Json inputs = Json::array({input_entry("input", o.data.input)});
  if (!o.holdout.empty()) inputs.push_back(input_entry("holdout", o.holdout));
  if (!o.weights.empty()) inputs.push_back(input_entry("weights", o.weights));
  manifest["inputs"] = std::move(inputs);
  manifest["config"] = Json{
      {"data", data_echo(o.data)},
      {"mode", o.mode},
      {"C", o.tradeoff_c},
      {"stop_pe_frac", o.no_pe_stop ? Json(nullptr) : Json(o.stop_pe_frac)},
      {"stop_bf_gap", o.no_bf_stop ? Json(nullptr) : Json(o.stop_bf_gap)},
      {"max_iterations", o.max_iterations ? Json(*o.max_iterations) : Json(nullptr)},
      {"early_stop_weight",
       o.early_stop_weight ? Json(*o.early_stop_weight) : Json(nullptr)},
      {"match_all_controls", o.match_all_controls},
      {"ridge_lambda", o.ridge_lambda},
      {"importance_shuffles", o.importance_shuffles},
      {"importance_lambda", o.importance_lambda}};
  Json weights_used = nullptr;
  if (result.weights) {
    weights_used = Json::object();
    for (std::size_t j = 0; j < in.names.size(); ++j) {
      weights_used[in.names[j]] = (*result.weights)[j];
    }
  }
  manifest["results"] = Json{
      {"stop_reason", to_string(result.stop_reason)},
      {"iterations", result.state.trace.size()},
      {"groups", result.state.groups.size()},
      {"matched_treated", matched_treated},
      {"treated", n_treated},
      {"ate_treated", ate_value ? Json(*ate_value) : Json(nullptr)},
      {"weights", weights_used}};

  const fs::path dir(o.out);
  write_outputs(dir,
                {{"groups.jsonl", groups_jsonl(result.state, in.main.data, in)},
                 {"cate.csv", cate_csv(records, in.main.unit_ids)},
                 {"trace.csv", trace_csv(result.state.trace, in.names)}},
                std::move(manifest));
  // Wall-clock numbers live apart from the reproducible outputs.
  const Json timing{{"ingest_ms", ingest_ms},
                    {"weights_ms", result.timing.weights_ms},
                    {"matching_ms", result.timing.matching_ms},
                    {"estimate_ms", estimate_ms},
                    {"total_ms", ms_since(t0)}};
  write_file(dir / "timing.json", timing.dump(2) + "\n");

  out << fmt::format("matched treated: {}/{} ({})\n", matched_treated, n_treated,
                     percent(matched_treated, n_treated));
  out << fmt::format("groups: {}, iterations: {}, stop: {}\n",
                     result.state.groups.size(), result.state.trace.size(),
                     to_string(result.stop_reason));
  out << fmt::format("ATE on matched treated: {}\n",
                     ate_value ? format_number(*ate_value) : "n/a");
  return 0;
}

int cmd_oracle_check(const OracleCheckOptions& o, std::ostream& out) {
  CrossCheckOptions cc;
  cc.inject_fault = o.inject_fault;
  cc.enumerate_cap = o.cap;
  cc.threads = o.threads;

  CrossCheckReport total;
  std::size_t agreeing_instances = 0;
  Json inputs = Json::array();
  if (o.trials > 0) {
    if (!o.data.input.empty()) {
      throw Error(ErrorCode::kConfig, "--trials and --input are exclusive");
    }
    for (std::size_t t = 0; t < o.trials; ++t) {
      const auto inst = random_instance(o.seed, t);
      auto rep = cross_check(inst.data, inst.weights, cc);
      if (rep.all_agree()) ++agreeing_instances;
      for (auto& n : rep.notes) n = fmt::format("trial {}: {}", t, n);
      total.merge(rep);
    }
  } else {
    if (o.data.input.empty() || o.weights.empty()) {
      throw Error(ErrorCode::kConfig,
                  "oracle-check needs --input and --weights, or --trials");
    }
    const auto in = ingest(read_csv(o.data.input), nullptr, ingest_options(o.data));
    if (in.main.data.p() > o.cap) {
      throw Error(ErrorCode::kSize,
                  fmt::format("{} covariates exceed the oracle cap of {}",
                              in.main.data.p(), o.cap));
    }
    const auto w = read_weights(o.weights, in.names);
    total = cross_check(in.main.data, w, cc);
    agreeing_instances = total.all_agree() ? 1 : 0;
    inputs.push_back(input_entry("input", o.data.input));
    inputs.push_back(input_entry("weights", o.weights));
  }

  out << fmt::format("instances: {} ({} in full agreement)\n", total.instances,
                     agreeing_instances);
  if (o.trials > 0) {
    out << fmt::format("trials: {}/{} agreements\n", agreeing_instances, o.trials);
  }
  out << fmt::format("treated units checked: {}\n", total.treated);
  out << fmt::format("optimal weight agreement: {}/{}\n", total.weight_agree,
                     total.treated);
  out << fmt::format("witness and group agreement: {}/{}\n", total.witness_agree,
                     total.treated);
  out << fmt::format("enumeration agreement: {}/{}\n", total.enumerate_agree,
                     total.enumerate_checked);
  for (const auto& n : total.notes) out << "disagreement: " << n << "\n";
  const std::size_t agreed =
      total.all_agree() ? total.treated : std::min(total.weight_agree, total.witness_agree);
  out << "agreement: " << percent(agreed, total.treated) << "\n";

  if (!o.out.empty()) {
    Json manifest = manifest_head("oracle-check", o.seed);
    manifest["inputs"] = std::move(inputs);
    manifest["config"] = Json{{"trials", o.trials}, {"cap", o.cap},
                              {"inject_fault", o.inject_fault}};
    const Json report{{"instances", total.instances},
                      {"agreeing_instances", agreeing_instances},
                      {"treated", total.treated},
                      {"weight_agree", total.weight_agree},
                      {"witness_agree", total.witness_agree},
                      {"enumerate_checked", total.enumerate_checked},
                      {"enumerate_agree", total.enumerate_agree},
                      {"notes", total.notes}};
    write_outputs(o.out, {{"report.json", report.dump(2) + "\n"}},
                  std::move(manifest));
  }
  return total.all_agree() ? 0 : 1;
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::kConfig, "simulate needs --out");
  DgpSpec spec = scenario_defaults(scenario_from_string(o.scenario));
  if (o.n_treated) spec.n_treated = *o.n_treated;
  if (o.n_control) spec.n_control = *o.n_control;
  if (o.holdout_treated) spec.holdout_treated = *o.holdout_treated;
  if (o.holdout_control) spec.holdout_control = *o.holdout_control;
  if (o.p_important) spec.p_important = *o.p_important;
  if (o.p_irrelevant) spec.p_irrelevant = *o.p_irrelevant;
  if (o.U) spec.U = *o.U;
  if (o.tau) spec.tau = *o.tau;
  if (o.noise_sd) spec.noise_sd = *o.noise_sd;
  if (o.missing_rate) spec.missing_rate = *o.missing_rate;
  if (o.block_rho) spec.block_rho = *o.block_rho;
  if (o.block_size) spec.block_size = *o.block_size;
  spec.seed = o.seed;
  spec.threads = o.threads;
  const auto data = gen_scenario(spec);

  Json manifest = manifest_head("simulate", o.seed);
  manifest["inputs"] = Json::array();
  manifest["config"] = Json{{"scenario", to_string(spec.scenario)},
                            {"n_treated", spec.n_treated},
                            {"n_control", spec.n_control},
                            {"holdout_treated", data.holdout.count_treated()},
                            {"holdout_control", data.holdout.count_control()},
                            {"p_important", spec.p_important},
                            {"p_irrelevant", spec.p_irrelevant},
                            {"U", spec.U},
                            {"tau", spec.tau},
                            {"noise_sd", spec.noise_sd},
                            {"missing_rate", spec.missing_rate},
                            {"block_size", spec.block_size},
                            {"block_rho", spec.block_rho}};
  manifest["results"] = Json{{"alpha", data.model.alpha}, {"beta", data.model.beta}};
  write_outputs(o.out,
                {{"data.csv", dataset_csv(data.data, data.true_cate)},
                 {"holdout.csv", dataset_csv(data.holdout, data.holdout_true_cate)}},
                std::move(manifest));
  out << fmt::format("wrote {} units and a {}-unit holdout to {}\n",
                     data.data.n(), data.holdout.n(), o.out);
  return 0;
}

int cmd_importance(const ImportanceCliOptions& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::kConfig, "importance needs --out");
  const auto in = ingest(read_csv(o.data.input), nullptr, ingest_options(o.data));
  ImportanceOptions io;
  io.n_shuffles = o.shuffles;
  io.ridge_lambda = o.lambda;
  io.seed = o.seed;
  io.threads = o.threads;
  const auto scores = permutation_importance(in.main.data, io);
  const auto weights = weights_from_importance(scores);

  std::vector<std::size_t> order(scores.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return in.names[a] < in.names[b];
  });
  std::string table = "covariate,score\n";
  for (auto j : order) {
    table += fmt::format("{},{}\n", csv_field(in.names[j]), format_number(scores[j]));
  }
  std::string wcsv = "covariate,weight\n";
  for (std::size_t j = 0; j < scores.size(); ++j) {
    wcsv += fmt::format("{},{}\n", csv_field(in.names[j]), format_number(weights[j]));
  }

  Json manifest = manifest_head("importance", o.seed);
  manifest["inputs"] = Json::array({input_entry("holdout", o.data.input)});
  manifest["config"] = Json{{"data", data_echo(o.data)},
                            {"shuffles", o.shuffles},
                            {"lambda", o.lambda}};
  write_outputs(o.out, {{"importance.csv", table}, {"weights.csv", wcsv}},
                std::move(manifest));
  out << table;
  return 0;
}

int cmd_bench(const BenchOptions& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::kConfig, "bench needs --out");
  if (o.reps == 0) throw Error(ErrorCode::kConfig, "bench needs --reps >= 1");
  std::string results = "n,p,method,status,matched_treated\n";
  std::string timing = "n,p,method,rep,wall_ms\n";
  for (const auto& cell : o.grid) {
    const auto colon = cell.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::kConfig, fmt::format("grid cell '{}' is not n:p", cell));
    }
    std::size_t n = 0;
    std::size_t p = 0;
    try {
      n = std::stoul(cell.substr(0, colon));
      p = std::stoul(cell.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, fmt::format("grid cell '{}' is not n:p", cell));
    }
    if (n < 2 || p == 0) {
      throw Error(ErrorCode::kConfig, fmt::format("grid cell '{}' is too small", cell));
    }
    DgpSpec spec = scenario_defaults(Scenario::kExpDecay);
    spec.n_treated = n / 2;
    spec.n_control = n - n / 2;
    spec.holdout_treated = 1;
    spec.holdout_control = 1;
    spec.p_important = p;
    spec.p_irrelevant = 0;
    spec.seed = o.seed;
    spec.threads = o.threads;
    const auto data = gen_scenario(spec);
    const WeightVector w(data.model.alpha);

    auto bench_one = [&](const std::string& method, auto&& fn) {
      std::size_t matched = 0;
      for (std::size_t rep = 0; rep < o.reps; ++rep) {
        const auto t0 = Clock::now();
        matched = fn();
        timing += fmt::format("{},{},{},{},{:.3f}\n", n, p, method, rep, ms_since(t0));
      }
      results += fmt::format("{},{},{},ok,{}\n", n, p, method, matched);
    };
    auto matched_of = [&](const MatchState& s) {
      std::size_t m = 0;
      for (std::size_t u = 0; u < data.data.n(); ++u) {
        m += data.data.treated(u) && s.main_group[u] ? 1 : 0;
      }
      return m;
    };
    bench_one("engine", [&] {
      EngineConfig cfg;
      cfg.weights = w;
      cfg.threads = o.threads;
      return matched_of(run(data.data, nullptr, cfg).state);
    });
    if (p <= o.cap) {
      bench_one("brute_enumerate", [&] {
        return matched_of(brute_enumerate(data.data, w, o.cap).state);
      });
    } else {
      results += fmt::format("{},{},brute_enumerate,skipped,\n", n, p);
    }
    bench_one("brute_pairwise", [&] {
      const auto r = brute_pairwise(data.data, w, o.threads);
      std::size_t m = 0;
      for (const auto& rec : r.records) {
        m += rec.treated && rec.has_partner && !rec.degenerate ? 1 : 0;
      }
      return m;
    });
  }
  Json manifest = manifest_head("bench", o.seed);
  manifest["inputs"] = Json::array();
  manifest["config"] = Json{{"grid", o.grid}, {"reps", o.reps}, {"cap", o.cap}};
  write_outputs(o.out, {{"bench.csv", results}}, std::move(manifest));
  write_file(fs::path(o.out) / "timing.csv", timing);
  out << timing;
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Almost-exact matching with replacement on categorical data", "aemr"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML file mirroring the command-line flags");
  app.require_subcommand(1);

  auto data_flags = [](CLI::App* sub, DataOptions& d, const char* input_help) {
    sub->add_option("--input", d.input, input_help)->required()->check(CLI::ExistingFile);
    sub->add_option("--treatment", d.treatment, "Treatment column (0/1)")->required();
    sub->add_option("--outcome", d.outcome, "Outcome column")->required();
    sub->add_option("--drop-cols", d.drop_cols, "Columns to ignore")->delimiter(',');
    sub->add_option("--id-col", d.id_col, "Column holding unit ids");
    sub->add_flag("--missing", d.missing, "Treat empty cells as missing values");
  };
  unsigned threads = 1;
  std::vector<CLI::Option*> thread_opts;
  auto thread_flag = [&](CLI::App* sub) {
    thread_opts.push_back(sub->add_option("--threads", threads,
                                          "Worker threads (default: $AEMR_THREADS, else 1)")
                              ->check(CLI::Range(1u, 1024u)));
  };

  MatchOptions mo;
  auto* match = app.add_subcommand("match", "Run the matching engine");
  data_flags(match, mo.data, "Input CSV");
  match->add_option("--holdout", mo.holdout, "Holdout CSV")->check(CLI::ExistingFile);
  match->add_option("--weights", mo.weights, "Covariate weights CSV")
      ->check(CLI::ExistingFile);
  match->add_option("--out", mo.out, "Output directory")->required();
  match->add_option("--mode", mo.mode, "fixed or adaptive")
      ->check(CLI::IsMember({"fixed", "adaptive"}));
  match->add_option("--C", mo.tradeoff_c, "BF/PE trade-off (adaptive mode)");
  match->add_option("--stop-pe-frac", mo.stop_pe_frac,
                    "Stop before a PE rise above this fraction");
  match->add_option("--stop-bf-gap", mo.stop_bf_gap,
                    "Stop before a treated/control match-ratio gap above this");
  match->add_flag("--no-pe-stop", mo.no_pe_stop, "Disable the PE stop rule");
  match->add_flag("--no-bf-stop", mo.no_bf_stop, "Disable the balance stop rule");
  match->add_option("--max-iterations", mo.max_iterations, "Iteration cap");
  match->add_option("--early-stop-weight", mo.early_stop_weight,
                    "Stop before dropping a covariate heavier than this");
  match->add_flag("--match-all-controls", mo.match_all_controls,
                  "Keep going after every treated unit is matched");
  match->add_option("--seed", mo.seed, "Seed for derived weights");
  match->add_option("--ridge-lambda", mo.ridge_lambda, "Ridge penalty for PE fits");
  match->add_option("--importance-shuffles", mo.importance_shuffles,
                    "Shuffles per covariate when deriving weights");
  match->add_option("--importance-lambda", mo.importance_lambda,
                    "Ridge penalty when deriving weights");
  thread_flag(match);

  OracleCheckOptions oo;
  auto* oracle = app.add_subcommand("oracle-check",
                                    "Compare the engine with the brute-force oracles");
  oracle->add_option("--input", oo.data.input, "Input CSV")->check(CLI::ExistingFile);
  oracle->add_option("--treatment", oo.data.treatment, "Treatment column");
  oracle->add_option("--outcome", oo.data.outcome, "Outcome column");
  oracle->add_option("--drop-cols", oo.data.drop_cols, "Columns to ignore")
      ->delimiter(',');
  oracle->add_option("--id-col", oo.data.id_col, "Column holding unit ids");
  oracle->add_flag("--missing", oo.data.missing, "Treat empty cells as missing");
  oracle->add_option("--weights", oo.weights, "Covariate weights CSV")
      ->check(CLI::ExistingFile);
  oracle->add_option("--trials", oo.trials, "Random instances instead of --input");
  oracle->add_option("--seed", oo.seed, "Seed for random instances");
  oracle->add_option("--cap", oo.cap, "Covariate cap for enumeration");
  oracle->add_option("--out", oo.out, "Directory for report.json");
  oracle->add_flag("--inject-fault", oo.inject_fault)->group("");
  thread_flag(oracle);

  SimulateOptions so;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim->add_option("--scenario", so.scenario,
                  "irrelevant, exp_decay, imbalance, noise or missing_correlated");
  sim->add_option("--n-t", so.n_treated, "Treated units");
  sim->add_option("--n-c", so.n_control, "Control units");
  sim->add_option("--holdout-n-t", so.holdout_treated, "Holdout treated units");
  sim->add_option("--holdout-n-c", so.holdout_control, "Holdout control units");
  sim->add_option("--p-important", so.p_important, "Important covariates");
  sim->add_option("--p-irrelevant", so.p_irrelevant, "Irrelevant covariates");
  sim->add_option("--U", so.U, "Interaction coefficient");
  sim->add_option("--tau", so.tau, "Noise coefficient");
  sim->add_option("--noise-sd", so.noise_sd, "Noise standard deviation");
  sim->add_option("--missing-rate", so.missing_rate, "Fraction of deleted cells");
  sim->add_option("--block-rho", so.block_rho, "Within-block latent correlation");
  sim->add_option("--block-size", so.block_size, "Latent correlation block size");
  sim->add_option("--seed", so.seed, "Seed");
  sim->add_option("--out", so.out, "Output directory")->required();
  thread_flag(sim);

  ImportanceCliOptions io;
  auto* imp = app.add_subcommand("importance", "Permutation importance on a holdout");
  imp->add_option("--holdout", io.data.input, "Holdout CSV")
      ->required()
      ->check(CLI::ExistingFile);
  imp->add_option("--treatment", io.data.treatment, "Treatment column")->required();
  imp->add_option("--outcome", io.data.outcome, "Outcome column")->required();
  imp->add_option("--drop-cols", io.data.drop_cols, "Columns to ignore")->delimiter(',');
  imp->add_option("--id-col", io.data.id_col, "Column holding unit ids");
  imp->add_flag("--missing", io.data.missing, "Treat empty cells as missing");
  imp->add_option("--shuffles", io.shuffles, "Shuffles per covariate");
  imp->add_option("--lambda", io.lambda, "Ridge penalty");
  imp->add_option("--seed", io.seed, "Seed");
  imp->add_option("--out", io.out, "Output directory")->required();
  thread_flag(imp);

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "Time the engine against the oracles");
  bench->add_option("--grid", bo.grid, "n:p cells")->delimiter(',');
  bench->add_option("--reps", bo.reps, "Repetitions per cell");
  bench->add_option("--seed", bo.seed, "Seed");
  bench->add_option("--cap", bo.cap, "Covariate cap for enumeration");
  bench->add_option("--out", bo.out, "Output directory")->required();
  thread_flag(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    // CLI11 drops environment values that fail conversion, so read it here.
    const bool flag_given = std::any_of(thread_opts.begin(), thread_opts.end(),
                                        [](const CLI::Option* o) { return o->count() > 0; });
    if (const char* env = std::getenv("AEMR_THREADS"); env != nullptr && !flag_given) {
      threads = parse_thread_count(env);
    }
    if (match->parsed()) {
      if (mo.data.treatment == mo.data.outcome) {
        throw Error(ErrorCode::kConfig, "treatment and outcome must differ");
      }
      mo.threads = threads;
      return cmd_match(mo, out);
    }
    if (oracle->parsed()) {
      oo.threads = threads;
      return cmd_oracle_check(oo, out);
    }
    if (sim->parsed()) {
      so.threads = threads;
      return cmd_simulate(so, out);
    }
    if (imp->parsed()) {
      io.threads = threads;
      return cmd_importance(io, out);
    }
    bo.threads = threads;
    return cmd_bench(bo, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace aemr
