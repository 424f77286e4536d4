#include "aspd/channel_gen.hpp"

#include <cmath>
#include <stdexcept>

namespace aspd {

void ScenarioConfig::validate(int num_rf_chains) const {
  if (pathloss_db_min > pathloss_db_max)
    throw std::invalid_argument("pathloss interval is empty");
  if (user_min < 1 || user_min > user_max)
    throw std::invalid_argument("need 1 <= user_min <= user_max");
  if (user_max > num_rf_chains)
    throw std::invalid_argument("user_max must not exceed num_rf_chains");
}

double sample_pathloss(const ScenarioConfig& scfg, Rng& rng) {
  return rng.uniform(scfg.pathloss_db_min, scfg.pathloss_db_max);
}

Scenario sample_scenario(const ScenarioConfig& scfg, const SystemConfig& cfg,
                         Rng& rng) {
  Scenario s;
  s.num_users = rng.uniform_int(scfg.user_min, scfg.user_max);
  s.pathloss_db.resize(s.num_users);
  s.channel.entries.resize(s.num_users, cfg.num_antennas);
  for (int k = 0; k < s.num_users; ++k) {
    s.pathloss_db[k] = sample_pathloss(scfg, rng);
    const double amp = std::sqrt(std::pow(10.0, s.pathloss_db[k] / 10.0));
    for (int n = 0; n < cfg.num_antennas; ++n)
      s.channel.entries(k, n) = amp * rng.complex_gaussian();
  }
  return s;
}

Scenario scenario_at(const ScenarioConfig& scfg, const SystemConfig& cfg,
                     std::uint64_t sample_index, std::uint64_t salt) {
  Rng rng = derive_rng(scfg.seed, sample_index, salt);
  return sample_scenario(scfg, cfg, rng);
}

}  // namespace aspd
