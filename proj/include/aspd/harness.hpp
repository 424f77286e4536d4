#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aspd/channel_gen.hpp"
#include "aspd/core_model.hpp"
#include "aspd/learning.hpp"
#include "aspd/sca_beamformer.hpp"

namespace aspd {

enum class ExperimentId {
  convergence,   // per-iteration objective traces of the SCA loop
  tradeoff,      // performance vs complexity saving over K_S
  samples_curve, // learned performance vs training-set size
  vs_ks,         // method comparison over K_S
  vs_ptot,       // method comparison over the power budget
  vs_n,          // effective-rate comparison over the antenna count
};

struct ExperimentSpec {
  ExperimentId id = ExperimentId::convergence;
  std::vector<double> sweep;  // meaning depends on id
  int trials = 50;
  std::uint64_t seed = 0;
  std::string out = "experiment.csv";
  std::string model_path;                 // single-model experiments
  std::map<int, std::string> models_by_n; // vs_n: one model per antenna count
  std::uint64_t k_s = 10;                 // fixed K_S where the sweep is elsewhere
};

/// Everything a run needs, parsed from one flat `key = value` config file.
struct FullConfig {
  SystemConfig system;
  ScenarioConfig scenario;
  SolverSettings solver;
  TrainConfig train;
  FeatureKind feature_kind = FeatureKind::antenna_gram;
  ExperimentSpec experiment;
};

/// Parses the dotted-key config format. Unknown keys are hard errors with
/// file/line/key diagnostics (ConfigInvalid).
FullConfig parse_config_file(const std::string& path);
FullConfig parse_config_text(const std::string& text, const std::string& name);

/// Runs one experiment and writes its CSV (plus a `.trace.csv` companion for
/// the convergence experiment). Rows are sorted, and the wall_ms column uses
/// the channel-use accounting model, so outputs are byte-identical across
/// reruns with the same seed and config.
void run_experiment(const ExperimentSpec& spec, const FullConfig& cfg);

/// Worker-pool width for experiments and dataset generation (default 2).
void set_experiment_threads(int n);

/// Quick invariant suite behind the `selftest` subcommand; prints one line
/// per check and returns false when any fails.
bool selftest();

/// Entry point for the command-line tool. Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage error.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace aspd
