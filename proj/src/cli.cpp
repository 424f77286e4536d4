#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <iostream>
#include <thread>

#include "aspd/harness.hpp"
#include "aspd/rng.hpp"
#include "aspd/selection.hpp"

namespace aspd {

namespace {

FullConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return FullConfig{};
  return parse_config_file(path);
}

int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 2 : static_cast<int>(hw);
}

void print_selection(const SelectionResult& result) {
  if (result.status != SolveStatus::ok) {
    std::printf("no feasible subset\n");
    return;
  }
  std::printf("best subset:");
  for (int idx : result.best_subset.indices) std::printf(" %d", idx);
  std::printf("\nraw sum rate:       %.6g bit/s\n",
              result.best_rate_raw.sum_rate_bps);
  std::printf("effective sum rate: %.6g bit/s (tau_csi %.4g c.u., tau_pro %.4g c.u.)\n",
              result.best_rate.sum_rate_bps, result.best_rate.tau_csi_cu,
              result.best_rate.tau_pro_cu);
  std::printf("subsets examined:   %" PRIu64 "\n", result.subsets_examined);
}

bool check(const char* name, bool ok) {
  std::printf("[%s] %s\n", ok ? " ok " : "FAIL", name);
  return ok;
}

}  // namespace

bool selftest() {
  bool all = true;
  const SystemConfig cfg;
  const SolverSettings settings;

  all &= check("channel overhead formula",
               channel_overhead(4, 9, 4) == 12 && channel_overhead(4, 6, 4) == 8 &&
                   channel_overhead(2, 8, 4) == 6);

  all &= check("complexity gain arithmetic",
               complexity_gain(5, 8, 4) == 13.0 / 14.0 &&
                   complexity_gain(70, 8, 4) == 0.0);

  {
    ScenarioConfig scfg;
    scfg.seed = 17;
    const Scenario a = scenario_at(scfg, cfg, 3);
    const Scenario b = scenario_at(scfg, cfg, 3);
    all &= check("scenario determinism",
                 a.num_users == b.num_users && a.channel.entries == b.channel.entries);
  }

  {
    // Phase rotation of a precoder column must not move any rate.
    Rng rng(5);
    Eigen::MatrixXcd h(2, 4);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 4; ++c) h(r, c) = 1e-4 * rng.complex_gaussian();
    PrecodingMatrix w;
    w.columns.resize(4, 2);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 2; ++c) w.columns(r, c) = rng.complex_gaussian();
    const RateReport base = sum_rate(h, w, cfg, 0.0);
    PrecodingMatrix rotated = w;
    rotated.columns.col(1) *= std::polar(1.0, 1.234);
    const RateReport after = sum_rate(h, rotated, cfg, 0.0);
    all &= check("phase invariance",
                 std::abs(base.sum_rate_bps - after.sum_rate_bps) <=
                     1e-9 * base.sum_rate_bps);
  }

  {
    // Linearization of the convex ratio never overshoots it.
    Rng rng(11);
    bool ok = true;
    for (int trial = 0; trial < 50 && ok; ++trial) {
      Eigen::MatrixXcd h(1, 3);
      for (int c = 0; c < 3; ++c) h(0, c) = rng.complex_gaussian();
      PrecodingMatrix w_hat;
      w_hat.columns.resize(3, 1);
      for (int r = 0; r < 3; ++r) w_hat.columns(r, 0) = rng.complex_gaussian();
      Eigen::VectorXd u_hat(1);
      u_hat[0] = rng.uniform(0.1, 10.0);
      const DcLinearization lin = dc_linearize(h, w_hat, u_hat, 0);
      for (int probe = 0; probe < 20; ++probe) {
        Eigen::VectorXcd w(3);
        for (int r = 0; r < 3; ++r) w[r] = rng.complex_gaussian();
        const double u = rng.uniform(0.1, 10.0);
        const double truth =
            std::norm(std::complex<double>(h.row(0) * w)) / u;
        const double surrogate = lin.value_at(embed_complex(w), u);
        if (surrogate > truth + 1e-9 * std::max(1.0, std::abs(truth))) ok = false;
      }
    }
    all &= check("surrogate under-estimation", ok);
  }

  {
    Rng rng(23);
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
      const int dim = rng.uniform_int(2, 6);
      Eigen::MatrixXd b(dim, dim);
      for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) b(r, c) = rng.gaussian();
      const Eigen::MatrixXd a = b * b.transpose();
      Eigen::VectorXd x(dim);
      for (int r = 0; r < dim; ++r) x[r] = rng.gaussian();
      if (convexity_certificate(a, x, rng.uniform(0.1, 10.0)) < -1e-8) ok = false;
    }
    all &= check("convexity certificate", ok);
  }

  {
    // Monotone objective and target consistency over a few instances.
    ScenarioConfig scfg;
    scfg.seed = 99;
    scfg.user_min = 2;
    scfg.user_max = 4;
    SystemConfig small = cfg;
    small.num_antennas = 4;
    small.power_budget_w = 5.0;
    bool ok = true;
    for (int t = 0; t < 5 && ok; ++t) {
      const Scenario scen = scenario_at(scfg, small, static_cast<std::uint64_t>(t));
      const double eff_bw = effective_bandwidth(small, 0.0, scen.num_users);
      const ScaResult res = sca_solve(scen.channel.entries, small, eff_bw, settings);
      if (res.status != SolveStatus::ok || !res.converged) { ok = false; break; }
      for (std::size_t i = 1; i < res.objective_trace_bps.size(); ++i)
        if (res.objective_trace_bps[i] <
            res.objective_trace_bps[i - 1] * (1.0 - 1e-9))
          ok = false;
    }
    all &= check("sca monotone convergence", ok);
  }

  {
    const SubsetEnumeration e(6, 3);
    bool ok = e.count == 20;
    for (std::uint64_t i = 0; i < e.count; ++i)
      if (e.rank(e.unrank(i)) != i) ok = false;
    all &= check("subset rank/unrank bijection", ok);
  }

  {
    // Analytic gradient against central finite differences.
    MlpModel model = MlpModel::init({4, 5, 3}, 7);
    Eigen::MatrixXd x(4, 6);
    Rng rng(31);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 6; ++c) x(r, c) = rng.uniform();
    std::vector<std::uint32_t> labels{0, 2, 1, 0, 1, 2};
    const LossGrad lg = loss_and_grad(model, x, labels, 1e-3, true);
    Eigen::VectorXd flat = model.to_flat();
    bool ok = true;
    for (int i = 0; i < flat.size() && ok; i += 7) {
      const double h = 1e-6;
      Eigen::VectorXd probe = flat;
      probe[i] = flat[i] + h;
      model.from_flat(probe);
      const double up = loss_and_grad(model, x, labels, 1e-3, true).loss;
      probe[i] = flat[i] - h;
      model.from_flat(probe);
      const double down = loss_and_grad(model, x, labels, 1e-3, true).loss;
      const double fd = (up - down) / (2.0 * h);
      if (std::abs(fd - lg.grad[i]) >
          1e-5 * std::max({1.0, std::abs(fd), std::abs(lg.grad[i])}))
        ok = false;
    }
    all &= check("mlp gradient vs finite differences", ok);
  }

  {
    const SubsetEnumeration e(6, 4);
    MlpModel model = MlpModel::init({16, 8, static_cast<int>(e.count)}, 3);
    for (auto& w : model.weights) w.setZero();
    FeatureVector fv;
    fv.kind = FeatureKind::user_gram;
    fv.values = Eigen::VectorXd::Constant(16, 0.5);
    const auto top3 = predict_topk(model, fv, 3, e);
    const auto top5 = predict_topk(model, fv, 5, e);
    bool ok = true;
    for (std::size_t i = 0; i < top3.size(); ++i)
      if (!(top3[i] == top5[i])) ok = false;
    // Uniform outputs fall back to index order.
    ok = ok && top3[0] == e.unrank(0) && top3[1] == e.unrank(1);
    all &= check("top-k prefix consistency", ok);
  }

  return all;
}

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"joint antenna selection and precoding design toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, model_path;
  std::uint64_t seed = 0;
  std::uint64_t k_s = 10;
  int n_samples = 1000;
  int threads = default_threads();

  auto* gen = app.add_subcommand("gen-data", "generate a labeled training dataset");
  gen->add_option("--n-samples", n_samples, "number of samples");
  gen->add_option("--seed", seed, "root seed");
  gen->add_option("--config", config_path, "config file");
  gen->add_option("--out", out_path, "output CSV path")->required();
  gen->add_option("--threads", threads, "worker threads");

  auto* train = app.add_subcommand("train", "train the subset predictor");
  train->add_option("--data", data_path, "dataset CSV from gen-data")->required();
  train->add_option("--out", out_path, "output model path")->required();
  train->add_option("--seed", seed, "training seed");
  train->add_option("--config", config_path, "config file");

  auto* predict = app.add_subcommand("predict", "rank subsets for one scenario");
  predict->add_option("--model", model_path, "model file")->required();
  predict->add_option("--seed", seed, "scenario seed");
  predict->add_option("--config", config_path, "config file");
  predict->add_option("--k-s", k_s, "number of candidates");

  auto* jaspd_cmd = app.add_subcommand("jaspd", "exhaustive joint selection");
  jaspd_cmd->add_option("--seed", seed, "scenario seed");
  jaspd_cmd->add_option("--config", config_path, "config file");
  jaspd_cmd->add_option("--threads", threads, "worker threads");
  jaspd_cmd->add_option("--out", out_path, "write the per-subset log CSV here");

  auto* laspd_cmd = app.add_subcommand("laspd", "learning-assisted joint selection");
  laspd_cmd->add_option("--model", model_path, "model file")->required();
  laspd_cmd->add_option("--seed", seed, "scenario seed");
  laspd_cmd->add_option("--config", config_path, "config file");
  laspd_cmd->add_option("--k-s", k_s, "number of candidates");
  laspd_cmd->add_option("--out", out_path, "write the per-subset log CSV here");

  auto* exp = app.add_subcommand("experiment", "run a configured experiment");
  exp->add_option("--config", config_path, "config file")->required();
  exp->add_option("--seed", seed, "override experiment seed");
  exp->add_option("--out", out_path, "override output path");
  exp->add_option("--model", model_path, "override model path");
  exp->add_option("--threads", threads, "worker threads");

  auto* self = app.add_subcommand("selftest", "run the invariant suite");
  (void)self;

  std::vector<const char*> argv;
  argv.push_back("aspd");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    set_experiment_threads(threads);
    if (gen->parsed()) {
      FullConfig cfg = load_config_or_default(config_path);
      cfg.scenario.seed = seed;
      const Dataset ds = generate_dataset(cfg.scenario, cfg.system, n_samples,
                                          cfg.solver, cfg.feature_kind, threads);
      write_dataset(ds, out_path);
      std::printf("wrote %d samples to %s (%d resampled)\n", ds.meta.num_samples,
                  out_path.c_str(), ds.meta.resampled);
    } else if (train->parsed()) {
      FullConfig cfg = load_config_or_default(config_path);
      const Dataset ds = read_dataset(data_path);
      const SubsetEnumeration enumeration(ds.meta.num_antennas,
                                          ds.meta.num_rf_chains);
      std::vector<int> dims{static_cast<int>(ds.features.cols())};
      for (int h : cfg.train.hidden_dims) dims.push_back(h);
      dims.push_back(static_cast<int>(enumeration.count));
      MlpModel model = MlpModel::init(dims, seed);
      TrainConfig tcfg = cfg.train;
      tcfg.seed = seed;
      const TrainLog log = scg_train(model, ds, tcfg);
      save_model(model, out_path);
      const double final_loss =
          log.epochs.empty() ? 0.0 : log.epochs.back().train_loss;
      std::printf("trained %zu epochs (best val epoch %d), final loss %.6g -> %s\n",
                  log.epochs.size(), log.best_epoch, final_loss, out_path.c_str());
    } else if (predict->parsed()) {
      FullConfig cfg = load_config_or_default(config_path);
      const MlpModel model = load_model(model_path);
      cfg.scenario.seed = seed;
      const Scenario scen = scenario_at(cfg.scenario, cfg.system, 0);
      const SubsetEnumeration enumeration(cfg.system.num_antennas,
                                          cfg.system.num_rf_chains);
      FeatureKind kind = model.input_dim() ==
                                 feature_dim(FeatureKind::antenna_gram,
                                             cfg.system.num_antennas,
                                             cfg.system.num_rf_chains)
                             ? FeatureKind::antenna_gram
                             : FeatureKind::user_gram;
      const FeatureVector fv = build_features(scen.channel, cfg.system, kind);
      const Eigen::VectorXd probs = mlp_forward(model, fv.values);
      const auto top = predict_topk(model, fv, k_s, enumeration);
      std::printf("scenario: K=%d users\n", scen.num_users);
      for (const auto& subset : top) {
        std::printf("subset %" PRIu64 " (p=%.4g):",
                    enumeration.rank(subset), probs[static_cast<int>(enumeration.rank(subset))]);
        for (int idx : subset.indices) std::printf(" %d", idx);
        std::printf("\n");
      }
    } else if (jaspd_cmd->parsed()) {
      FullConfig cfg = load_config_or_default(config_path);
      cfg.scenario.seed = seed;
      const Scenario scen = scenario_at(cfg.scenario, cfg.system, 0);
      std::printf("scenario: K=%d users, N=%d, M=%d\n", scen.num_users,
                  cfg.system.num_antennas, cfg.system.num_rf_chains);
      const SelectionResult sel =
          jaspd_exhaustive(scen.channel, cfg.system, cfg.solver, threads);
      print_selection(sel);
      if (!out_path.empty()) write_subset_log_csv(sel, out_path);
    } else if (laspd_cmd->parsed()) {
      FullConfig cfg = load_config_or_default(config_path);
      const MlpModel model = load_model(model_path);
      cfg.scenario.seed = seed;
      const Scenario scen = scenario_at(cfg.scenario, cfg.system, 0);
      std::printf("scenario: K=%d users, N=%d, M=%d, K_S=%" PRIu64 "\n",
                  scen.num_users, cfg.system.num_antennas,
                  cfg.system.num_rf_chains, k_s);
      const SelectionResult sel =
          l_aspd(model, scen.channel, cfg.system, k_s, cfg.solver);
      print_selection(sel);
      if (!out_path.empty()) write_subset_log_csv(sel, out_path);
    } else if (exp->parsed()) {
      FullConfig cfg = parse_config_file(config_path);
      ExperimentSpec spec = cfg.experiment;
      if (seed != 0 || spec.seed == 0) spec.seed = seed;
      if (!out_path.empty()) spec.out = out_path;
      if (!model_path.empty()) spec.model_path = model_path;
      run_experiment(spec, cfg);
      std::printf("wrote %s\n", spec.out.c_str());
    } else if (self->parsed()) {
      if (!selftest()) {
        std::fprintf(stderr, "selftest failed\n");
        return 1;
      }
      std::printf("selftest passed\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace aspd
