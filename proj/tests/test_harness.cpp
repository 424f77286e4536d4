#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aspd/harness.hpp"
#include "aspd/learning.hpp"

using namespace aspd;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

int run_cli(const std::vector<std::string>& args) { return cli_dispatch(args); }

}  // namespace

TEST_CASE("config parser reads dotted keys and defaults the rest") {
  const FullConfig cfg = parse_config_text(
      "# comment line\n"
      "system.power_budget_w = 3.5\n"
      "system.num_antennas = 7\n"
      "scenario.user_max = 3\n"
      "solver.outer_tol_rel = 5e-4\n"
      "features.kind = user_gram\n"
      "train.hidden = 32,16\n"
      "train.loss = one_sided\n"
      "experiment.id = vs_n\n"
      "experiment.sweep = 6,7,8\n"
      "experiment.trials = 12\n"
      "experiment.models = 6=/a.model, 8=/b.model\n",
      "test.cfg");
  CHECK(cfg.system.power_budget_w == 3.5);
  CHECK(cfg.system.num_antennas == 7);
  CHECK(cfg.system.bandwidth_hz == 1e6);  // untouched default
  CHECK(cfg.scenario.user_max == 3);
  CHECK(cfg.solver.outer_tol_rel == 5e-4);
  CHECK(cfg.feature_kind == FeatureKind::user_gram);
  CHECK(cfg.train.hidden_dims == std::vector<int>{32, 16});
  CHECK_FALSE(cfg.train.two_sided_loss);
  CHECK(cfg.experiment.id == ExperimentId::vs_n);
  CHECK(cfg.experiment.sweep == std::vector<double>{6, 7, 8});
  CHECK(cfg.experiment.trials == 12);
  CHECK(cfg.experiment.models_by_n.at(6) == "/a.model");
  CHECK(cfg.experiment.models_by_n.at(8) == "/b.model");
}

TEST_CASE("config parser rejects unknown keys with line diagnostics") {
  try {
    parse_config_text("system.power_budget_w = 2\nsytem.qos = 1\n", "bad.cfg");
    FAIL("expected ConfigInvalid");
  } catch (const ConfigInvalid& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.cfg:2") != std::string::npos);
    CHECK(msg.find("sytem.qos") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("system.qos_bps == 2\n", "x"), ConfigInvalid);
  CHECK_THROWS_AS(parse_config_text("system.qos_bps = abc\n", "x"), ConfigInvalid);
  CHECK_THROWS_AS(parse_config_text("features.kind = nonsense\n", "x"),
                  ConfigInvalid);
}

TEST_CASE("cli: usage errors exit 2, runtime failures exit 1") {
  CHECK(run_cli({"laspd"}) == 2);             // --model is required
  CHECK(run_cli({"no-such-command"}) == 2);   // unknown subcommand
  CHECK(run_cli({}) == 2);                    // a subcommand is required
  CHECK(run_cli({"laspd", "--model", "/tmp/aspd_missing.model"}) == 1);
  spit("/tmp/aspd_bad.cfg", "bogus.key = 1\n");
  CHECK(run_cli({"jaspd", "--config", "/tmp/aspd_bad.cfg"}) == 1);
  std::remove("/tmp/aspd_bad.cfg");
}

TEST_CASE("cli: gen-data twice with one seed produces identical files") {
  spit("/tmp/aspd_gen.cfg",
       "system.num_antennas = 5\n"
       "scenario.user_max = 2\n");
  REQUIRE(run_cli({"gen-data", "--n-samples", "12", "--seed", "5", "--config",
                   "/tmp/aspd_gen.cfg", "--out", "/tmp/aspd_gen_a.csv",
                   "--threads", "2"}) == 0);
  REQUIRE(run_cli({"gen-data", "--n-samples", "12", "--seed", "5", "--config",
                   "/tmp/aspd_gen.cfg", "--out", "/tmp/aspd_gen_b.csv",
                   "--threads", "1"}) == 0);
  CHECK(slurp("/tmp/aspd_gen_a.csv") == slurp("/tmp/aspd_gen_b.csv"));
  CHECK(slurp("/tmp/aspd_gen_a.meta") == slurp("/tmp/aspd_gen_b.meta"));
  for (const char* f : {"/tmp/aspd_gen_a.csv", "/tmp/aspd_gen_b.csv",
                        "/tmp/aspd_gen_a.meta", "/tmp/aspd_gen_b.meta",
                        "/tmp/aspd_gen.cfg"})
    std::remove(f);
}

TEST_CASE("cli: jaspd smoke run") {
  spit("/tmp/aspd_jaspd.cfg",
       "system.num_antennas = 5\n"
       "scenario.user_max = 2\n");
  CHECK(run_cli({"jaspd", "--config", "/tmp/aspd_jaspd.cfg", "--seed", "7"}) == 0);
  std::remove("/tmp/aspd_jaspd.cfg");
}

TEST_CASE("convergence experiment writes deterministic, monotone traces") {
  FullConfig cfg;
  cfg.system.num_antennas = 4;
  cfg.system.num_rf_chains = 4;
  cfg.system.power_budget_w = 5.0;
  cfg.scenario.user_min = 2;
  cfg.scenario.user_max = 4;

  ExperimentSpec spec;
  spec.id = ExperimentId::convergence;
  spec.trials = 6;
  spec.seed = 9;
  spec.out = "/tmp/aspd_conv.csv";
  set_experiment_threads(2);
  run_experiment(spec, cfg);
  const std::string first = slurp("/tmp/aspd_conv.csv");
  const std::string first_trace = slurp("/tmp/aspd_conv.csv.trace.csv");
  run_experiment(spec, cfg);
  CHECK(slurp("/tmp/aspd_conv.csv") == first);
  CHECK(slurp("/tmp/aspd_conv.csv.trace.csv") == first_trace);

  // Header then per-trial monotone objective columns.
  std::stringstream trace(first_trace);
  std::string line;
  std::getline(trace, line);
  CHECK(line == "trial,iteration,objective_bps");
  int last_trial = -1;
  double last_value = 0.0;
  int rows = 0;
  while (std::getline(trace, line)) {
    if (line.empty()) continue;
    int trial, iteration;
    double value;
    REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf", &trial, &iteration, &value) == 3);
    if (trial == last_trial) CHECK(value >= last_value * (1.0 - 1e-9));
    last_trial = trial;
    last_value = value;
    ++rows;
  }
  CHECK(rows >= 2 * 6);  // several iterations per trial

  std::stringstream main_csv(first);
  std::getline(main_csv, line);
  CHECK(line ==
        "sweep_value,method,trial,raw_rate_bps,effective_rate_bps,"
        "subsets_examined,wall_ms");
  int data_rows = 0;
  while (std::getline(main_csv, line)) {
    if (line.empty()) continue;
    ++data_rows;
    // effective <= raw in every row.
    double sweep, raw, eff, wall;
    int trial;
    unsigned long long subsets;
    char method[32];
    REQUIRE(std::sscanf(line.c_str(), "%lf,%31[^,],%d,%lf,%lf,%llu,%lf", &sweep,
                        method, &trial, &raw, &eff, &subsets, &wall) == 7);
    CHECK(eff <= raw);
  }
  CHECK(data_rows == 6);
  std::remove("/tmp/aspd_conv.csv");
  std::remove("/tmp/aspd_conv.csv.trace.csv");
}

TEST_CASE("method-comparison experiment runs end to end with a model") {
  // Small world: N=5, M=4, so C(N, M) = 5 subsets.
  FullConfig cfg;
  cfg.system.num_antennas = 5;
  cfg.scenario.user_max = 2;
  cfg.train.max_epochs = 15;
  cfg.train.hidden_dims = {8};

  const Dataset ds = generate_dataset(cfg.scenario, cfg.system, 30, cfg.solver,
                                      FeatureKind::antenna_gram, 2);
  MlpModel model = MlpModel::init({25, 8, 5}, 3);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = 3;
  scg_train(model, ds, tcfg);
  save_model(model, "/tmp/aspd_exp.model");

  ExperimentSpec spec;
  spec.id = ExperimentId::vs_ks;
  spec.sweep = {1, 3, 5};
  spec.trials = 4;
  spec.seed = 12;
  spec.k_s = 3;
  spec.out = "/tmp/aspd_vs_ks.csv";
  spec.model_path = "/tmp/aspd_exp.model";
  set_experiment_threads(2);
  run_experiment(spec, cfg);

  const std::string csv = slurp("/tmp/aspd_vs_ks.csv");
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  int rows = 0;
  int laspd_full = 0;
  double laspd_rate = 0, jaspd_rate = 0;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    ++rows;
    double sweep, raw, eff, wall;
    int trial;
    unsigned long long subsets;
    char method[32];
    REQUIRE(std::sscanf(line.c_str(), "%lf,%31[^,],%d,%lf,%lf,%llu,%lf", &sweep,
                        method, &trial, &raw, &eff, &subsets, &wall) == 7);
    CHECK(eff <= raw);
    if (sweep == 5.0 && std::string(method) == "laspd") {
      laspd_rate += raw;
      ++laspd_full;
    }
    if (sweep == 5.0 && std::string(method) == "jaspd") jaspd_rate += raw;
  }
  CHECK(rows == 3 * 4 * 5);  // sweep x trials x methods
  CHECK(laspd_full == 4);
  // Full coverage k_s = C(N, M): the learned search ties the exhaustive one.
  CHECK(laspd_rate == doctest::Approx(jaspd_rate).epsilon(1e-12));

  // Missing model: hard error.
  spec.model_path.clear();
  CHECK_THROWS_AS(run_experiment(spec, cfg), MissingModel);

  // Sweeping the power budget raises every method's rate.
  spec.id = ExperimentId::vs_ptot;
  spec.sweep = {0.5, 4.0};
  spec.model_path = "/tmp/aspd_exp.model";
  spec.out = "/tmp/aspd_vs_ptot.csv";
  run_experiment(spec, cfg);
  {
    std::stringstream pp(slurp("/tmp/aspd_vs_ptot.csv"));
    std::getline(pp, line);
    double low = 0, high = 0;
    while (std::getline(pp, line)) {
      if (line.empty()) continue;
      double sweep, raw, eff, wall;
      int trial;
      unsigned long long subsets;
      char method[32];
      REQUIRE(std::sscanf(line.c_str(), "%lf,%31[^,],%d,%lf,%lf,%llu,%lf",
                          &sweep, method, &trial, &raw, &eff, &subsets,
                          &wall) == 7);
      if (std::string(method) != "jaspd") continue;
      (sweep == 0.5 ? low : high) += raw;
    }
    CHECK(high > low);
  }

  std::remove("/tmp/aspd_exp.model");
  std::remove("/tmp/aspd_vs_ks.csv");
  std::remove("/tmp/aspd_vs_ptot.csv");
}

TEST_CASE("samples-curve experiment trains per sweep point") {
  FullConfig cfg;
  cfg.system.num_antennas = 5;
  cfg.scenario.user_max = 2;
  cfg.train.max_epochs = 10;
  cfg.train.hidden_dims = {6};

  ExperimentSpec spec;
  spec.id = ExperimentId::samples_curve;
  spec.sweep = {15, 30};
  spec.trials = 3;
  spec.seed = 77;
  spec.k_s = 2;
  spec.out = "/tmp/aspd_samples.csv";
  set_experiment_threads(2);
  run_experiment(spec, cfg);

  std::stringstream ss(slurp("/tmp/aspd_samples.csv"));
  std::string line;
  std::getline(ss, line);
  int laspd_rows = 0, jaspd_rows = 0;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    if (line.find(",laspd,") != std::string::npos) ++laspd_rows;
    if (line.find(",jaspd,") != std::string::npos) ++jaspd_rows;
  }
  CHECK(laspd_rows == 6);  // 2 sweep points x 3 trials
  CHECK(jaspd_rows == 6);
  std::remove("/tmp/aspd_samples.csv");
}
