#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "aspd/core_model.hpp"
#include "aspd/rng.hpp"

namespace aspd {

/// Random scenario recipe: user count range and pathloss spread. Pathloss
/// is drawn directly as uniform dB, the distribution the WINNER II LOS
/// model yields for users 50..300 m from the base station.
struct ScenarioConfig {
  double pathloss_db_min = -74.6;
  double pathloss_db_max = -59.4;
  int user_min = 1;
  int user_max = 4;
  std::uint64_t seed = 0;

  void validate(int num_rf_chains) const;
};

struct Scenario {
  ChannelMatrix channel;        // K x N, pathloss folded in
  Eigen::VectorXd pathloss_db;  // per user
  int num_users = 0;
};

/// One pathloss draw, uniform on [pathloss_db_min, pathloss_db_max] dB.
double sample_pathloss(const ScenarioConfig& scfg, Rng& rng);

/// Draws K uniform on [user_min, user_max], then per-user pathloss and a
/// Rayleigh-fading row: row k = sqrt(PL_k,linear) * g_k with g_k entries
/// i.i.d. circularly-symmetric complex Gaussian of unit variance.
Scenario sample_scenario(const ScenarioConfig& scfg, const SystemConfig& cfg,
                         Rng& rng);

/// Scenario for sample index t of a seeded batch; derives an independent
/// stream so batches can be generated in parallel in any order.
Scenario scenario_at(const ScenarioConfig& scfg, const SystemConfig& cfg,
                     std::uint64_t sample_index, std::uint64_t salt = 0);

}  // namespace aspd
