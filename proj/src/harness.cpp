#include "aspd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>
#include <tuple>

#include "aspd/rng.hpp"
#include "aspd/selection.hpp"

namespace aspd {

namespace {

int g_experiment_threads = 2;
int spec_threads(const ExperimentSpec&) { return g_experiment_threads; }

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

ExperimentId experiment_id_from(const std::string& name,
                                const std::string& where) {
  if (name == "convergence") return ExperimentId::convergence;
  if (name == "tradeoff") return ExperimentId::tradeoff;
  if (name == "samples_curve") return ExperimentId::samples_curve;
  if (name == "vs_ks") return ExperimentId::vs_ks;
  if (name == "vs_ptot") return ExperimentId::vs_ptot;
  if (name == "vs_n") return ExperimentId::vs_n;
  throw ConfigInvalid(where + ": unknown experiment id '" + name + "'");
}

std::vector<double> parse_double_list(const std::string& value,
                                      const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) continue;
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigInvalid(where + ": cannot parse number '" + cell + "'");
    }
  }
  if (out.empty()) throw ConfigInvalid(where + ": empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& value,
                                const std::string& where) {
  std::vector<int> out;
  for (double v : parse_double_list(value, where)) out.push_back(static_cast<int>(v));
  return out;
}

struct Row {
  double sweep_value = 0.0;
  std::string method;
  int trial = 0;
  double raw_rate_bps = 0.0;
  double effective_rate_bps = 0.0;
  std::uint64_t subsets_examined = 0;
  double wall_ms = 0.0;
};

/// The wall column reports the channel-use accounting model (tau_pro
/// converted to milliseconds) so experiment files stay bit-reproducible.
Row row_from(const SelectionResult& result, const SystemConfig& cfg,
             double sweep, const std::string& method, int trial) {
  Row row;
  row.sweep_value = sweep;
  row.method = method;
  row.trial = trial;
  row.raw_rate_bps = result.best_rate_raw.sum_rate_bps;
  row.effective_rate_bps = result.best_rate.sum_rate_bps;
  row.subsets_examined = result.subsets_examined;
  row.wall_ms = result.best_rate.tau_pro_cu * cfg.cu_duration_s * 1e3;
  return row;
}

void write_rows(std::vector<Row> rows, const std::string& path) {
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.sweep_value, a.method, a.trial) <
           std::tie(b.sweep_value, b.method, b.trial);
  });
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::fprintf(f,
               "sweep_value,method,trial,raw_rate_bps,effective_rate_bps,"
               "subsets_examined,wall_ms\n");
  for (const auto& r : rows)
    std::fprintf(f, "%.17g,%s,%d,%.17g,%.17g,%" PRIu64 ",%.17g\n",
                 r.sweep_value, r.method.c_str(), r.trial, r.raw_rate_bps,
                 r.effective_rate_bps, r.subsets_examined, r.wall_ms);
  std::fclose(f);
}

void parallel_trials(int trials, int num_threads,
                     const std::function<void(int)>& body) {
  if (num_threads <= 1) {
    for (int t = 0; t < trials; ++t) body(t);
    return;
  }
  std::atomic<int> cursor{0};
  auto worker = [&] {
    while (true) {
      const int t = cursor.fetch_add(1, std::memory_order_relaxed);
      if (t >= trials) break;
      body(t);
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < num_threads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

/// Zero-forcing power-control baseline on the model's predicted candidates.
SelectionResult zf_on_candidates(const MlpModel& model,
                                 const ChannelMatrix& channel,
                                 const SystemConfig& cfg, std::uint64_t k_s) {
  const SubsetEnumeration enumeration(cfg.num_antennas, cfg.num_rf_chains);
  FeatureKind kind = model.input_dim() ==
                             feature_dim(FeatureKind::antenna_gram,
                                         cfg.num_antennas, cfg.num_rf_chains)
                         ? FeatureKind::antenna_gram
                         : FeatureKind::user_gram;
  const FeatureVector fv = build_features(channel, cfg, kind);
  const auto candidates = predict_topk(model, fv, k_s, enumeration);
  const double eff_bw = effective_bandwidth(cfg, 0.0, channel.num_users());

  SelectionResult result;
  result.subsets_examined = k_s;
  for (const auto& subset : candidates) {
    SelectionResult::LogEntry entry{enumeration.rank(subset),
                                    -std::numeric_limits<double>::infinity(),
                                    false};
    const Eigen::MatrixXcd sub = restrict_channel(channel.entries, subset);
    const ZfResult zf = zf_power_control(sub, cfg, eff_bw);
    if (zf.status == SolveStatus::ok) {
      entry.objective_bps =
          sum_rate(sub, zf.iterate.precoders, cfg, 0.0).sum_rate_bps;
      entry.feasible = true;
    }
    result.log.push_back(entry);
  }

  double best = -std::numeric_limits<double>::infinity();
  for (const auto& e : result.log) best = std::max(best, e.objective_bps);
  if (!std::isfinite(best)) {
    result.status = SolveStatus::infeasible;
    return result;
  }
  const double threshold = best - 1e-9 * std::abs(best);
  const SelectionResult::LogEntry* winner = nullptr;
  for (const auto& e : result.log)
    if (e.feasible && e.objective_bps >= threshold &&
        (!winner || e.subset_index < winner->subset_index))
      winner = &e;
  result.best_subset = enumeration.unrank(winner->subset_index);
  const Eigen::MatrixXcd sub = restrict_channel(channel.entries, result.best_subset);
  const ZfResult zf = zf_power_control(sub, cfg, eff_bw);
  result.best_precoders = zf.iterate.precoders;
  result.best_rate_raw = sum_rate(sub, zf.iterate.precoders, cfg, 0.0);
  result.best_rate = result.best_rate_raw;  // closed form, no solver time charged
  result.status = SolveStatus::ok;
  return result;
}

MlpModel require_model(const std::string& path, const char* purpose) {
  if (path.empty())
    throw MissingModel(std::string("experiment needs a model file for ") + purpose);
  return load_model(path);
}

void run_convergence(const ExperimentSpec& spec, const FullConfig& cfg,
                     std::vector<Row>& rows) {
  ScenarioConfig scfg = cfg.scenario;
  scfg.seed = spec.seed;
  std::vector<std::vector<double>> traces(static_cast<std::size_t>(spec.trials));
  std::vector<Row> local(static_cast<std::size_t>(spec.trials));
  parallel_trials(spec.trials, spec_threads(spec), [&](int t) {
    const Scenario scen = scenario_at(scfg, cfg.system, static_cast<std::uint64_t>(t));
    const AntennaSubset subset = AntennaSubset::first_m(cfg.system.num_rf_chains);
    const Eigen::MatrixXcd sub = restrict_channel(scen.channel.entries, subset);
    const double eff_bw =
        effective_bandwidth(cfg.system, 0.0, scen.num_users);
    const ScaResult solved = sca_solve(sub, cfg.system, eff_bw, cfg.solver);
    traces[static_cast<std::size_t>(t)] = solved.objective_trace_bps;
    Row row;
    row.sweep_value = 0.0;
    row.method = "sca";
    row.trial = t;
    row.raw_rate_bps = solved.report.sum_rate_bps;
    const RateReport charged =
        sum_rate(sub, solved.precoders, cfg.system, cfg.system.solve_cost_cu);
    row.effective_rate_bps = charged.sum_rate_bps;
    row.subsets_examined = 1;
    row.wall_ms = charged.tau_pro_cu * cfg.system.cu_duration_s * 1e3;
    local[static_cast<std::size_t>(t)] = row;
  });
  rows.insert(rows.end(), local.begin(), local.end());

  std::FILE* f = std::fopen((spec.out + ".trace.csv").c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + spec.out + ".trace.csv");
  std::fprintf(f, "trial,iteration,objective_bps\n");
  for (int t = 0; t < spec.trials; ++t)
    for (std::size_t i = 0; i < traces[static_cast<std::size_t>(t)].size(); ++i)
      std::fprintf(f, "%d,%zu,%.17g\n", t, i,
                   traces[static_cast<std::size_t>(t)][i]);
  std::fclose(f);
}

void run_method_comparison(const ExperimentSpec& spec, const FullConfig& cfg,
                           std::vector<Row>& rows) {
  ScenarioConfig scfg = cfg.scenario;
  scfg.seed = spec.seed;
  const bool sweep_is_ks = spec.id == ExperimentId::tradeoff ||
                           spec.id == ExperimentId::vs_ks;
  const bool with_extra_baselines = spec.id != ExperimentId::tradeoff;
  const MlpModel model = require_model(spec.model_path, "the learned selector");

  // Channels are paired across the sweep (the sweep changes algorithm
  // parameters, not the propagation), so methods are compared on identical
  // fading draws.
  std::vector<Scenario> scenarios(static_cast<std::size_t>(spec.trials));
  for (int t = 0; t < spec.trials; ++t)
    scenarios[static_cast<std::size_t>(t)] =
        scenario_at(scfg, cfg.system, static_cast<std::uint64_t>(t));

  for (std::size_t pt = 0; pt < spec.sweep.size(); ++pt) {
    const double value = spec.sweep[pt];
    SystemConfig sys = cfg.system;
    std::uint64_t k_s = spec.k_s;
    if (sweep_is_ks) k_s = static_cast<std::uint64_t>(value);
    else if (spec.id == ExperimentId::vs_ptot) sys.power_budget_w = value;

    std::vector<std::vector<Row>> local(static_cast<std::size_t>(spec.trials));
    parallel_trials(spec.trials, spec_threads(spec), [&](int t) {
      const Scenario& scen = scenarios[static_cast<std::size_t>(t)];
      auto& out = local[static_cast<std::size_t>(t)];
      out.push_back(row_from(jaspd_exhaustive(scen.channel, sys, cfg.solver),
                             sys, value, "jaspd", t));
      out.push_back(row_from(l_aspd(model, scen.channel, sys, k_s, cfg.solver),
                             sys, value, "laspd", t));
      out.push_back(row_from(
          heuristic_baseline(scen.channel, sys, k_s,
                             derive_seed(spec.seed, static_cast<std::uint64_t>(t),
                                         0x68657572),
                             cfg.solver),
          sys, value, "heuristic", t));
      if (with_extra_baselines) {
        out.push_back(row_from(bd_eliminate_baseline(scen.channel, sys, cfg.solver),
                               sys, value, "bd_elim", t));
        out.push_back(row_from(zf_on_candidates(model, scen.channel, sys, k_s),
                               sys, value, "zf", t));
      }
    });
    for (auto& chunk : local) rows.insert(rows.end(), chunk.begin(), chunk.end());
  }
}

void run_vs_n(const ExperimentSpec& spec, const FullConfig& cfg,
              std::vector<Row>& rows) {
  ScenarioConfig scfg = cfg.scenario;
  scfg.seed = spec.seed;
  for (std::size_t pt = 0; pt < spec.sweep.size(); ++pt) {
    const int n = static_cast<int>(spec.sweep[pt]);
    SystemConfig sys = cfg.system;
    sys.num_antennas = n;
    sys.validate();
    const auto it = spec.models_by_n.find(n);
    if (it == spec.models_by_n.end())
      throw MissingModel("vs_n experiment has no model for N=" + std::to_string(n));
    const MlpModel model = load_model(it->second);

    std::vector<std::vector<Row>> local(static_cast<std::size_t>(spec.trials));
    parallel_trials(spec.trials, spec_threads(spec), [&](int t) {
      const Scenario scen = scenario_at(scfg, sys, static_cast<std::uint64_t>(t),
                                        static_cast<std::uint64_t>(n));
      auto& out = local[static_cast<std::size_t>(t)];
      out.push_back(row_from(jaspd_exhaustive(scen.channel, sys, cfg.solver),
                             sys, n, "jaspd", t));
      out.push_back(row_from(l_aspd(model, scen.channel, sys, spec.k_s, cfg.solver),
                             sys, n, "laspd", t));
      out.push_back(row_from(
          heuristic_baseline(scen.channel, sys, spec.k_s,
                             derive_seed(spec.seed, static_cast<std::uint64_t>(t),
                                         0x68657572),
                             cfg.solver),
          sys, n, "heuristic", t));
      out.push_back(row_from(bd_eliminate_baseline(scen.channel, sys, cfg.solver),
                             sys, n, "bd_elim", t));
    });
    for (auto& chunk : local) rows.insert(rows.end(), chunk.begin(), chunk.end());
  }
}

void run_samples_curve(const ExperimentSpec& spec, const FullConfig& cfg,
                       std::vector<Row>& rows) {
  for (std::size_t pt = 0; pt < spec.sweep.size(); ++pt) {
    const int n_samples = static_cast<int>(spec.sweep[pt]);
    ScenarioConfig gen_scfg = cfg.scenario;
    gen_scfg.seed = derive_seed(spec.seed, 0xd5, pt);
    const Dataset ds = generate_dataset(gen_scfg, cfg.system, n_samples,
                                        cfg.solver, cfg.feature_kind,
                                        spec_threads(spec));
    const SubsetEnumeration enumeration(cfg.system.num_antennas,
                                        cfg.system.num_rf_chains);
    std::vector<int> dims{static_cast<int>(ds.features.cols())};
    for (int h : cfg.train.hidden_dims) dims.push_back(h);
    dims.push_back(static_cast<int>(enumeration.count));
    MlpModel model = MlpModel::init(dims, derive_seed(spec.seed, 0x7e, pt));
    TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed(spec.seed, 0x7f, pt);
    scg_train(model, ds, tcfg);

    ScenarioConfig eval_scfg = cfg.scenario;
    eval_scfg.seed = derive_seed(spec.seed, 0xe7a1, 0);
    std::vector<std::vector<Row>> local(static_cast<std::size_t>(spec.trials));
    parallel_trials(spec.trials, spec_threads(spec), [&](int t) {
      const Scenario scen =
          scenario_at(eval_scfg, cfg.system, static_cast<std::uint64_t>(t));
      auto& out = local[static_cast<std::size_t>(t)];
      out.push_back(row_from(jaspd_exhaustive(scen.channel, cfg.system, cfg.solver),
                             cfg.system, n_samples, "jaspd", t));
      out.push_back(
          row_from(l_aspd(model, scen.channel, cfg.system, spec.k_s, cfg.solver),
                   cfg.system, n_samples, "laspd", t));
    });
    for (auto& chunk : local) rows.insert(rows.end(), chunk.begin(), chunk.end());
  }
}

}  // namespace

FullConfig parse_config_text(const std::string& text, const std::string& name) {
  FullConfig cfg;
  std::stringstream stream(text);
  std::string line;
  int lineno = 0;
  while (std::getline(stream, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigInvalid(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigInvalid(where + ": expected 'key = value'");

    auto as_double = [&]() {
      try {
        return std::stod(value);
      } catch (const std::exception&) {
        throw ConfigInvalid(where + ": cannot parse number '" + value +
                            "' for key '" + key + "'");
      }
    };
    auto as_int = [&]() { return static_cast<int>(as_double()); };
    auto as_u64 = [&]() {
      try {
        return static_cast<std::uint64_t>(std::stoull(value));
      } catch (const std::exception&) {
        throw ConfigInvalid(where + ": cannot parse integer '" + value +
                            "' for key '" + key + "'");
      }
    };

    if (key == "system.bandwidth_hz") cfg.system.bandwidth_hz = as_double();
    else if (key == "system.block_len_cu") cfg.system.block_len_cu = as_double();
    else if (key == "system.cu_duration_s") cfg.system.cu_duration_s = as_double();
    else if (key == "system.noise_power_w") cfg.system.noise_power_w = as_double();
    else if (key == "system.power_budget_w") cfg.system.power_budget_w = as_double();
    else if (key == "system.qos_bps") cfg.system.qos_bps = as_double();
    else if (key == "system.num_antennas") cfg.system.num_antennas = as_int();
    else if (key == "system.num_rf_chains") cfg.system.num_rf_chains = as_int();
    else if (key == "system.solve_cost_cu") cfg.system.solve_cost_cu = as_double();
    else if (key == "scenario.pathloss_db_min") cfg.scenario.pathloss_db_min = as_double();
    else if (key == "scenario.pathloss_db_max") cfg.scenario.pathloss_db_max = as_double();
    else if (key == "scenario.user_min") cfg.scenario.user_min = as_int();
    else if (key == "scenario.user_max") cfg.scenario.user_max = as_int();
    else if (key == "scenario.seed") cfg.scenario.seed = as_u64();
    else if (key == "solver.outer_tol_rel") cfg.solver.outer_tol_rel = as_double();
    else if (key == "solver.max_outer_iters") cfg.solver.max_outer_iters = as_int();
    else if (key == "solver.barrier_rel_gap") cfg.solver.barrier_rel_gap = as_double();
    else if (key == "solver.newton_tol") cfg.solver.newton_tol = as_double();
    else if (key == "solver.max_newton_iters") cfg.solver.max_newton_iters = as_int();
    else if (key == "solver.barrier_mu") cfg.solver.barrier_mu = as_double();
    else if (key == "solver.kkt_tol") cfg.solver.kkt_tol = as_double();
    else if (key == "solver.cond_guard") cfg.solver.cond_guard = as_double();
    else if (key == "features.kind") {
      if (value == "antenna_gram") cfg.feature_kind = FeatureKind::antenna_gram;
      else if (value == "user_gram") cfg.feature_kind = FeatureKind::user_gram;
      else throw ConfigInvalid(where + ": unknown feature kind '" + value + "'");
    } else if (key == "train.lambda_reg") cfg.train.lambda_reg = as_double();
    else if (key == "train.max_epochs") cfg.train.max_epochs = as_int();
    else if (key == "train.validation_fraction") cfg.train.validation_fraction = as_double();
    else if (key == "train.patience") cfg.train.patience = as_int();
    else if (key == "train.scg_sigma0") cfg.train.scg_sigma0 = as_double();
    else if (key == "train.scg_lambda0") cfg.train.scg_lambda0 = as_double();
    else if (key == "train.loss") {
      if (value == "two_sided") cfg.train.two_sided_loss = true;
      else if (value == "one_sided") cfg.train.two_sided_loss = false;
      else throw ConfigInvalid(where + ": unknown loss '" + value + "'");
    } else if (key == "train.hidden") cfg.train.hidden_dims = parse_int_list(value, where);
    else if (key == "experiment.id") cfg.experiment.id = experiment_id_from(value, where);
    else if (key == "experiment.sweep") cfg.experiment.sweep = parse_double_list(value, where);
    else if (key == "experiment.trials") cfg.experiment.trials = as_int();
    else if (key == "experiment.seed") cfg.experiment.seed = as_u64();
    else if (key == "experiment.out") cfg.experiment.out = value;
    else if (key == "experiment.model") cfg.experiment.model_path = value;
    else if (key == "experiment.k_s") cfg.experiment.k_s = as_u64();
    else if (key == "experiment.models") {
      // "6=path-a,8=path-b"
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto sep = item.find('=');
        if (sep == std::string::npos)
          throw ConfigInvalid(where + ": expected N=path in experiment.models");
        cfg.experiment.models_by_n[std::stoi(trim(item.substr(0, sep)))] =
            trim(item.substr(sep + 1));
      }
    } else {
      throw ConfigInvalid(where + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

FullConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid(path + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

void set_experiment_threads(int n) { g_experiment_threads = std::max(1, n); }

void run_experiment(const ExperimentSpec& spec, const FullConfig& cfg) {
  cfg.system.validate();
  cfg.scenario.validate(cfg.system.num_rf_chains);
  if (spec.sweep.empty() && spec.id != ExperimentId::convergence)
    throw ConfigInvalid("experiment.sweep must not be empty");
  if (spec.trials < 1) throw ConfigInvalid("experiment.trials must be >= 1");

  std::vector<Row> rows;
  switch (spec.id) {
    case ExperimentId::convergence:
      run_convergence(spec, cfg, rows);
      break;
    case ExperimentId::tradeoff:
    case ExperimentId::vs_ks:
    case ExperimentId::vs_ptot:
      run_method_comparison(spec, cfg, rows);
      break;
    case ExperimentId::vs_n:
      run_vs_n(spec, cfg, rows);
      break;
    case ExperimentId::samples_curve:
      run_samples_curve(spec, cfg, rows);
      break;
  }
  write_rows(std::move(rows), spec.out);
}

}  // namespace aspd
