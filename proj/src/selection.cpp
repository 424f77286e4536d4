#include "aspd/selection.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "aspd/rng.hpp"

namespace aspd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Lowest index whose objective ties the maximum at 1e-9 relative.
std::int64_t best_log_index(const std::vector<SelectionResult::LogEntry>& log) {
  double best = kNegInf;
  for (const auto& e : log) best = std::max(best, e.objective_bps);
  if (best == kNegInf) return -1;
  const double threshold = best - 1e-9 * std::abs(best);
  std::int64_t lowest = -1;
  std::uint64_t lowest_subset = 0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (!log[i].feasible || log[i].objective_bps < threshold) continue;
    if (lowest < 0 || log[i].subset_index < lowest_subset) {
      lowest = static_cast<std::int64_t>(i);
      lowest_subset = log[i].subset_index;
    }
  }
  return lowest;
}

}  // namespace

void finalize_selection(SelectionResult& result, const ChannelMatrix& channel,
                        const SystemConfig& cfg, const SolverSettings& settings,
                        const SubsetEnumeration& enumeration, double eff_bw_hz,
                        double tau_pro_cu) {
  const std::int64_t pos = best_log_index(result.log);
  if (pos < 0) {
    result.status = SolveStatus::infeasible;
    return;
  }
  const auto& entry = result.log[static_cast<std::size_t>(pos)];
  result.best_subset = enumeration.unrank(entry.subset_index);
  const Eigen::MatrixXcd sub = restrict_channel(channel.entries, result.best_subset);
  const ScaResult solved = sca_solve(sub, cfg, eff_bw_hz, settings);
  result.best_precoders = solved.precoders;
  result.best_rate_raw = solved.report;
  result.best_rate = sum_rate(sub, solved.precoders, cfg, tau_pro_cu);
  result.status = SolveStatus::ok;
}

SelectionResult::LogEntry solve_subset(const ChannelMatrix& channel,
                                       const SystemConfig& cfg,
                                       const SolverSettings& settings,
                                       const SubsetEnumeration& enumeration,
                                       double eff_bw_hz, std::uint64_t index,
                                       std::atomic<int>* stalled) {
  SelectionResult::LogEntry entry{index, kNegInf, false};
  const AntennaSubset subset = enumeration.unrank(index);
  const Eigen::MatrixXcd sub = restrict_channel(channel.entries, subset);
  try {
    const ScaResult solved = sca_solve(sub, cfg, eff_bw_hz, settings);
    if (solved.status == SolveStatus::ok) {
      entry.objective_bps = solved.report.sum_rate_bps;
      entry.feasible = true;
    }
  } catch (const SolverStalled&) {
    if (stalled) stalled->fetch_add(1, std::memory_order_relaxed);
  }
  return entry;
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t result = 1;
  for (int i = 1; i <= k; ++i) {
    const auto factor = static_cast<std::uint64_t>(n - k + i);
    if (result > std::numeric_limits<std::uint64_t>::max() / factor)
      throw std::overflow_error("binomial coefficient exceeds 64 bits");
    result = result * factor / static_cast<std::uint64_t>(i);
  }
  return result;
}

SubsetEnumeration::SubsetEnumeration(int n_antennas, int m_selected)
    : n(n_antennas), m(m_selected) {
  if (m < 1 || n < m)
    throw std::invalid_argument("enumeration needs n >= m >= 1");
  count = binomial(n, m);
}

AntennaSubset SubsetEnumeration::unrank(std::uint64_t index) const {
  if (index >= count) throw std::out_of_range("subset index out of range");
  std::vector<int> idx(static_cast<std::size_t>(m));
  std::uint64_t remaining = index;
  int value = 0;
  for (int j = 0; j < m; ++j) {
    while (true) {
      const std::uint64_t block = binomial(n - value - 1, m - j - 1);
      if (remaining < block) break;
      remaining -= block;
      ++value;
    }
    idx[static_cast<std::size_t>(j)] = value++;
  }
  return AntennaSubset{std::move(idx)};
}

std::uint64_t SubsetEnumeration::rank(const AntennaSubset& subset) const {
  if (subset.size() != m) throw std::invalid_argument("subset size mismatch");
  std::uint64_t index = 0;
  int prev = -1;
  for (int j = 0; j < m; ++j) {
    for (int value = prev + 1; value < subset.indices[static_cast<std::size_t>(j)];
         ++value)
      index += binomial(n - value - 1, m - j - 1);
    prev = subset.indices[static_cast<std::size_t>(j)];
  }
  return index;
}

bool next_combination(std::vector<int>& indices, int n) {
  const int m = static_cast<int>(indices.size());
  int i = m - 1;
  while (i >= 0 && indices[static_cast<std::size_t>(i)] == n - m + i) --i;
  if (i < 0) return false;
  ++indices[static_cast<std::size_t>(i)];
  for (int j = i + 1; j < m; ++j)
    indices[static_cast<std::size_t>(j)] = indices[static_cast<std::size_t>(j - 1)] + 1;
  return true;
}

SelectionResult jaspd_exhaustive(const ChannelMatrix& channel,
                                 const SystemConfig& cfg,
                                 const SolverSettings& settings,
                                 int num_threads) {
  const int k_users = channel.num_users();
  if (k_users > cfg.num_rf_chains)
    throw std::invalid_argument("need num_users <= num_rf_chains");
  const SubsetEnumeration enumeration(cfg.num_antennas, cfg.num_rf_chains);
  const double eff_bw = effective_bandwidth(cfg, 0.0, k_users);

  SelectionResult result;
  result.subsets_examined = enumeration.count;
  result.log.resize(enumeration.count);

  std::atomic<int> stalled{0};
  std::atomic<std::uint64_t> cursor{0};
  auto worker = [&] {
    while (true) {
      const std::uint64_t index = cursor.fetch_add(1, std::memory_order_relaxed);
      if (index >= enumeration.count) break;
      result.log[index] =
          solve_subset(channel, cfg, settings, enumeration, eff_bw, index, &stalled);
    }
  };
  if (num_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(num_threads));
    for (int i = 0; i < num_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  result.stalled_count = stalled.load();

  const double tau_pro =
      cfg.solve_cost_cu * static_cast<double>(enumeration.count);
  finalize_selection(result, channel, cfg, settings, enumeration, eff_bw, tau_pro);
  return result;
}

SelectionResult bd_eliminate_baseline(const ChannelMatrix& channel,
                                      const SystemConfig& cfg,
                                      const SolverSettings& settings) {
  const int k_users = channel.num_users();
  if (k_users > cfg.num_rf_chains)
    throw std::invalid_argument("need num_users <= num_rf_chains");
  const double eff_bw = effective_bandwidth(cfg, 0.0, k_users);

  std::vector<int> active(static_cast<std::size_t>(cfg.num_antennas));
  for (int i = 0; i < cfg.num_antennas; ++i) active[static_cast<std::size_t>(i)] = i;

  while (static_cast<int>(active.size()) > cfg.num_rf_chains) {
    double best_power = std::numeric_limits<double>::infinity();
    int best_pos = -1;
    for (std::size_t p = 0; p < active.size(); ++p) {
      std::vector<int> candidate = active;
      candidate.erase(candidate.begin() + static_cast<std::ptrdiff_t>(p));
      const AntennaSubset subset =
          AntennaSubset::of(std::move(candidate), cfg.num_antennas);
      const Eigen::MatrixXcd sub = restrict_channel(channel.entries, subset);
      const ZfResult zf = zf_initialize(sub, cfg, eff_bw, settings.cond_guard);
      if (zf.status == SolveStatus::rank_deficient) continue;
      if (zf.required_power_w < best_power) {
        best_power = zf.required_power_w;
        best_pos = static_cast<int>(p);
      }
    }
    if (best_pos < 0) {
      SelectionResult failed;
      failed.status = SolveStatus::infeasible;
      return failed;
    }
    active.erase(active.begin() + best_pos);
  }

  const SubsetEnumeration enumeration(cfg.num_antennas, cfg.num_rf_chains);
  const AntennaSubset final_subset = AntennaSubset::of(active, cfg.num_antennas);

  SelectionResult result;
  result.subsets_examined = 1;
  result.log.push_back(solve_subset(channel, cfg, settings, enumeration, eff_bw,
                                 enumeration.rank(final_subset), nullptr));
  finalize_selection(result, channel, cfg, settings, enumeration, eff_bw,
                     cfg.solve_cost_cu);
  return result;
}

SelectionResult heuristic_baseline(const ChannelMatrix& channel,
                                   const SystemConfig& cfg, std::uint64_t k_s,
                                   std::uint64_t seed,
                                   const SolverSettings& settings) {
  const int k_users = channel.num_users();
  if (k_users > cfg.num_rf_chains)
    throw std::invalid_argument("need num_users <= num_rf_chains");
  const SubsetEnumeration enumeration(cfg.num_antennas, cfg.num_rf_chains);
  if (k_s < 1 || k_s > enumeration.count)
    throw std::invalid_argument("k_s must lie in [1, C(N, M)]");
  const double eff_bw = effective_bandwidth(cfg, 0.0, k_users);

  // Prefix of a seeded Fisher-Yates permutation of all subset indices, so a
  // larger k_s evaluates a superset of the candidates.
  Rng rng(seed);
  std::unordered_map<std::uint64_t, std::uint64_t> swapped;
  std::vector<std::uint64_t> drawn;
  drawn.reserve(static_cast<std::size_t>(k_s));
  for (std::uint64_t i = 0; i < k_s; ++i) {
    const std::uint64_t j = i + rng.next() % (enumeration.count - i);
    const auto it_j = swapped.find(j);
    const std::uint64_t value_j = it_j == swapped.end() ? j : it_j->second;
    const auto it_i = swapped.find(i);
    const std::uint64_t value_i = it_i == swapped.end() ? i : it_i->second;
    drawn.push_back(value_j);
    swapped[j] = value_i;
  }

  SelectionResult result;
  result.subsets_examined = k_s;
  result.log.reserve(drawn.size());
  for (const std::uint64_t index : drawn)
    result.log.push_back(
        solve_subset(channel, cfg, settings, enumeration, eff_bw, index, nullptr));

  const double tau_pro = cfg.solve_cost_cu * static_cast<double>(k_s);
  finalize_selection(result, channel, cfg, settings, enumeration, eff_bw, tau_pro);
  return result;
}

double complexity_gain(std::uint64_t k_s, int n, int m) {
  const std::uint64_t count = binomial(n, m);
  if (k_s < 1 || k_s > count)
    throw std::invalid_argument("k_s must lie in [1, C(N, M)]");
  return static_cast<double>(count - k_s) / static_cast<double>(count);
}

void write_subset_log_csv(const SelectionResult& result,
                          const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::fprintf(f, "subset_index,objective_bps,feasible_flag\n");
  for (const auto& e : result.log)
    std::fprintf(f, "%" PRIu64 ",%.17g,%d\n", e.subset_index, e.objective_bps,
                 e.feasible ? 1 : 0);
  std::fclose(f);
}

}  // namespace aspd
