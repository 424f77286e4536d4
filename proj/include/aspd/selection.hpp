#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "aspd/core_model.hpp"
#include "aspd/sca_beamformer.hpp"

namespace aspd {

/// C(n, k), exact; throws std::overflow_error when it does not fit in 64 bits.
std::uint64_t binomial(int n, int k);

/// Lexicographic enumeration of all M-element subsets of [0, N); index 0 is
/// {0, ..., M-1}. rank and unrank are mutual inverses (combinatorial number
/// system), so subset indices are stable labels across runs.
struct SubsetEnumeration {
  int n = 0;
  int m = 0;
  std::uint64_t count = 0;

  SubsetEnumeration(int n_antennas, int m_selected);
  AntennaSubset unrank(std::uint64_t index) const;
  std::uint64_t rank(const AntennaSubset& subset) const;
};

/// Advances indices to the next combination in lexicographic order.
/// Returns false after the last one.
bool next_combination(std::vector<int>& indices, int n);

struct SelectionResult {
  SolveStatus status = SolveStatus::ok;  // infeasible == every subset failed
  AntennaSubset best_subset;
  PrecodingMatrix best_precoders;
  RateReport best_rate;      // effective: tau_pro charged per method
  RateReport best_rate_raw;  // tau_pro = 0
  std::uint64_t subsets_examined = 0;

  struct LogEntry {
    std::uint64_t subset_index = 0;
    double objective_bps = 0.0;  // -inf when infeasible
    bool feasible = false;
  };
  std::vector<LogEntry> log;
  int stalled_count = 0;
};

/// Exhaustive search: solves the precoding problem on every subset and keeps
/// the best objective, ties broken by lowest subset index (detected at 1e-9
/// relative). Infeasible subsets stay in the log at objective -inf. The
/// effective rate charges solve_cost_cu * C(N, M) of processing time.
SelectionResult jaspd_exhaustive(const ChannelMatrix& channel,
                                 const SystemConfig& cfg,
                                 const SolverSettings& settings,
                                 int num_threads = 1);

/// Greedy backward elimination: starting from all N antennas, repeatedly
/// drops the antenna whose removal minimizes the zero-forcing transmit power
/// needed to meet QoS, then runs the full precoding solve on the survivor.
SelectionResult bd_eliminate_baseline(const ChannelMatrix& channel,
                                      const SystemConfig& cfg,
                                      const SolverSettings& settings);

/// Evaluates k_s subsets drawn without replacement from a seeded random
/// permutation, so results for increasing k_s are prefix-consistent.
SelectionResult heuristic_baseline(const ChannelMatrix& channel,
                                   const SystemConfig& cfg, std::uint64_t k_s,
                                   std::uint64_t seed,
                                   const SolverSettings& settings);

/// Relative time saving of searching k_s subsets instead of all C(N, M).
double complexity_gain(std::uint64_t k_s, int n, int m);

/// Solves the precoding problem on one subset; -inf objective when the
/// subset is infeasible. A solver stall is also logged as infeasible and
/// counted through `stalled` when given.
SelectionResult::LogEntry solve_subset(const ChannelMatrix& channel,
                                       const SystemConfig& cfg,
                                       const SolverSettings& settings,
                                       const SubsetEnumeration& enumeration,
                                       double eff_bw_hz, std::uint64_t index,
                                       std::atomic<int>* stalled = nullptr);

/// Picks the winner from result.log (ties to the lowest subset index),
/// re-solves it for the precoders, and fills both rate reports.
void finalize_selection(SelectionResult& result, const ChannelMatrix& channel,
                        const SystemConfig& cfg, const SolverSettings& settings,
                        const SubsetEnumeration& enumeration, double eff_bw_hz,
                        double tau_pro_cu);

/// Per-subset objective log as CSV: subset_index,objective_bps,feasible_flag.
void write_subset_log_csv(const SelectionResult& result, const std::string& path);

}  // namespace aspd
