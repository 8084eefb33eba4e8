#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace q2c {

struct QueryRecord {
  std::string query_id;
  std::string text;
};

struct ConfigDescriptor {
  std::string config_id;
  // Knob order is preserved from the input file; may be empty (opaque config).
  std::vector<std::pair<std::string, std::string>> knobs;
};

struct OutcomeCell {
  std::string query_id;
  std::string config_id;
  // Fraction of correct runs for this (query, config) pair. A plain 0/1
  // for single-run profiling; repeated-run profiling may report the mean.
  double correct = 0.0;
  double cost_usd = 0.0;
};

// Offline profiling record: every executed (query, configuration) pair with
// its correctness and dollar cost. Sparse: not all N x |C| cells need exist.
// Immutable after construction; safe to share across threads.
class ProfilingTrace {
public:
  ProfilingTrace(std::vector<QueryRecord> queries,
                 std::vector<ConfigDescriptor> configs,
                 std::vector<OutcomeCell> cells);

  const std::vector<QueryRecord>& queries() const { return queries_; }
  const std::vector<ConfigDescriptor>& configs() const { return configs_; }
  const std::vector<OutcomeCell>& cells() const { return cells_; }

  std::size_t n_queries() const { return queries_.size(); }
  std::size_t n_configs() const { return configs_.size(); }

  bool has_query(const std::string& query_id) const;
  bool has_config(const std::string& config_id) const;
  const ConfigDescriptor* find_config(const std::string& config_id) const;
  const OutcomeCell* find_cell(const std::string& query_id,
                               const std::string& config_id) const;
  // Cells for one config, in trace cell order.
  std::vector<const OutcomeCell*> cells_for_config(
      const std::string& config_id) const;

private:
  std::vector<QueryRecord> queries_;
  std::vector<ConfigDescriptor> configs_;
  std::vector<OutcomeCell> cells_;
  std::unordered_map<std::string, std::size_t> query_index_;
  std::unordered_map<std::string, std::size_t> config_index_;
  std::unordered_map<std::string, std::size_t> cell_index_;  // "qid\x1fcid"
  std::unordered_map<std::string, std::vector<std::size_t>> cells_by_config_;
};

struct ConfigStats {
  std::string config_id;
  double mean_accuracy = 0.0;  // mean of cell `correct` over observed cells
  double mean_cost = 0.0;      // mean of cell `cost_usd` over observed cells
  std::size_t n_observed = 0;
};

struct StatsResult {
  std::vector<ConfigStats> stats;          // trace config order
  std::vector<std::string> below_min_cells;  // omitted configs, for warnings
};

// Loads the three line-delimited JSON files (queries, configs, cells),
// validates ids and invariants, and returns an indexed trace.
// Unknown extra fields in any record are ignored.
ProfilingTrace load_trace(const std::string& queries_path,
                          const std::string& configs_path,
                          const std::string& cells_path);

// Per-config means over observed cells only. Configs with fewer than
// min_cells observed cells are omitted and listed in below_min_cells.
// Throws IntegrityError when every config falls below the threshold.
StatsResult compute_stats(const ProfilingTrace& trace, std::size_t min_cells = 20);

// Partitions all query ids into k folds of near-equal size (sizes differ by
// at most one). Seeded shuffle then round-robin deal; deterministic.
std::vector<std::vector<std::string>> split_folds(const ProfilingTrace& trace,
                                                  std::size_t k,
                                                  std::uint64_t seed);

}  // namespace q2c
