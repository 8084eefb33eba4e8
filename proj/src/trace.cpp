#include "q2c/trace.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "q2c/errors.hpp"
#include "q2c/rng.hpp"

namespace q2c {

namespace {

std::string cell_key(const std::string& qid, const std::string& cid) {
  std::string k;
  k.reserve(qid.size() + 1 + cid.size());
  k += qid;
  k += '\x1f';
  k += cid;
  return k;
}

// Reads a JSONL file, invoking fn(line_number, parsed_object) per record.
// Blank lines are skipped.
template <typename Fn>
void for_each_record(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::ordered_json rec;
    try {
      rec = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.is_object())
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": record is not an object");
    fn(lineno, rec);
  }
}

std::string require_string(const nlohmann::ordered_json& rec, const char* field,
                           const std::string& path, std::size_t lineno) {
  if (!rec.contains(field) || !rec[field].is_string())
    throw ParseError(path + ":" + std::to_string(lineno) +
                     ": missing string field \"" + field + "\"");
  return rec[field].get<std::string>();
}

}  // namespace

ProfilingTrace::ProfilingTrace(std::vector<QueryRecord> queries,
                               std::vector<ConfigDescriptor> configs,
                               std::vector<OutcomeCell> cells)
    : queries_(std::move(queries)),
      configs_(std::move(configs)),
      cells_(std::move(cells)) {
  if (queries_.empty()) throw IntegrityError("trace has no queries");
  if (configs_.empty()) throw IntegrityError("trace has no configs");
  if (cells_.empty()) throw IntegrityError("trace has no cells");

  for (std::size_t i = 0; i < queries_.size(); ++i) {
    const auto& q = queries_[i];
    if (q.query_id.empty()) throw IntegrityError("empty query_id");
    if (q.text.empty())
      throw IntegrityError("query \"" + q.query_id + "\" has empty text");
    if (!query_index_.emplace(q.query_id, i).second)
      throw IntegrityError("duplicate query_id \"" + q.query_id + "\"");
  }
  for (std::size_t i = 0; i < configs_.size(); ++i) {
    const auto& c = configs_[i];
    if (c.config_id.empty()) throw IntegrityError("empty config_id");
    if (!config_index_.emplace(c.config_id, i).second)
      throw IntegrityError("duplicate config_id \"" + c.config_id + "\"");
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const auto& cell = cells_[i];
    if (!query_index_.count(cell.query_id))
      throw IntegrityError("cell references unknown query_id \"" +
                           cell.query_id + "\"");
    if (!config_index_.count(cell.config_id))
      throw IntegrityError("cell references unknown config_id \"" +
                           cell.config_id + "\"");
    if (cell.correct < 0.0 || cell.correct > 1.0)
      throw IntegrityError("cell (" + cell.query_id + ", " + cell.config_id +
                           ") has correct outside [0,1]");
    if (cell.cost_usd < 0.0)
      throw IntegrityError("cell (" + cell.query_id + ", " + cell.config_id +
                           ") has negative cost");
    if (!cell_index_.emplace(cell_key(cell.query_id, cell.config_id), i).second)
      throw IntegrityError("duplicate cell (" + cell.query_id + ", " +
                           cell.config_id + ")");
    cells_by_config_[cell.config_id].push_back(i);
  }
}

bool ProfilingTrace::has_query(const std::string& query_id) const {
  return query_index_.count(query_id) > 0;
}

bool ProfilingTrace::has_config(const std::string& config_id) const {
  return config_index_.count(config_id) > 0;
}

const ConfigDescriptor* ProfilingTrace::find_config(
    const std::string& config_id) const {
  auto it = config_index_.find(config_id);
  return it == config_index_.end() ? nullptr : &configs_[it->second];
}

const OutcomeCell* ProfilingTrace::find_cell(const std::string& query_id,
                                             const std::string& config_id) const {
  auto it = cell_index_.find(cell_key(query_id, config_id));
  return it == cell_index_.end() ? nullptr : &cells_[it->second];
}

std::vector<const OutcomeCell*> ProfilingTrace::cells_for_config(
    const std::string& config_id) const {
  std::vector<const OutcomeCell*> out;
  auto it = cells_by_config_.find(config_id);
  if (it == cells_by_config_.end()) return out;
  out.reserve(it->second.size());
  for (std::size_t i : it->second) out.push_back(&cells_[i]);
  return out;
}

ProfilingTrace load_trace(const std::string& queries_path,
                          const std::string& configs_path,
                          const std::string& cells_path) {
  std::vector<QueryRecord> queries;
  for_each_record(queries_path, [&](std::size_t lineno,
                                    const nlohmann::ordered_json& rec) {
    QueryRecord q;
    q.query_id = require_string(rec, "query_id", queries_path, lineno);
    q.text = require_string(rec, "text", queries_path, lineno);
    queries.push_back(std::move(q));
  });

  std::vector<ConfigDescriptor> configs;
  for_each_record(configs_path, [&](std::size_t lineno,
                                    const nlohmann::ordered_json& rec) {
    ConfigDescriptor c;
    c.config_id = require_string(rec, "config_id", configs_path, lineno);
    if (rec.contains("knobs")) {
      if (!rec["knobs"].is_object())
        throw ParseError(configs_path + ":" + std::to_string(lineno) +
                         ": \"knobs\" must be an object");
      for (const auto& [name, value] : rec["knobs"].items()) {
        if (value.is_string())
          c.knobs.emplace_back(name, value.get<std::string>());
        else
          c.knobs.emplace_back(name, value.dump());
      }
    }
    configs.push_back(std::move(c));
  });

  std::vector<OutcomeCell> cells;
  for_each_record(cells_path, [&](std::size_t lineno,
                                  const nlohmann::ordered_json& rec) {
    OutcomeCell cell;
    cell.query_id = require_string(rec, "query_id", cells_path, lineno);
    cell.config_id = require_string(rec, "config_id", cells_path, lineno);
    if (!rec.contains("correct") || !rec["correct"].is_number())
      throw ParseError(cells_path + ":" + std::to_string(lineno) +
                       ": missing numeric field \"correct\"");
    if (!rec.contains("cost_usd") || !rec["cost_usd"].is_number())
      throw ParseError(cells_path + ":" + std::to_string(lineno) +
                       ": missing numeric field \"cost_usd\"");
    cell.correct = rec["correct"].get<double>();
    cell.cost_usd = rec["cost_usd"].get<double>();
    if (cell.correct < 0.0 || cell.correct > 1.0)
      throw ParseError(cells_path + ":" + std::to_string(lineno) +
                       ": correct must be in [0,1]");
    if (cell.cost_usd < 0.0)
      throw ParseError(cells_path + ":" + std::to_string(lineno) +
                       ": negative cost_usd");
    cells.push_back(std::move(cell));
  });

  return ProfilingTrace(std::move(queries), std::move(configs), std::move(cells));
}

StatsResult compute_stats(const ProfilingTrace& trace, std::size_t min_cells) {
  if (min_cells < 1) throw IntegrityError("min_cells must be >= 1");
  StatsResult result;
  for (const auto& config : trace.configs()) {
    const auto cells = trace.cells_for_config(config.config_id);
    if (cells.size() < min_cells) {
      result.below_min_cells.push_back(config.config_id);
      continue;
    }
    ConfigStats s;
    s.config_id = config.config_id;
    s.n_observed = cells.size();
    double acc_sum = 0.0, cost_sum = 0.0;
    for (const auto* cell : cells) {
      acc_sum += cell->correct;
      cost_sum += cell->cost_usd;
    }
    s.mean_accuracy = acc_sum / static_cast<double>(cells.size());
    s.mean_cost = cost_sum / static_cast<double>(cells.size());
    result.stats.push_back(std::move(s));
  }
  if (result.stats.empty())
    throw IntegrityError("every config has fewer than " +
                         std::to_string(min_cells) + " observed cells");
  return result;
}

std::vector<std::vector<std::string>> split_folds(const ProfilingTrace& trace,
                                                  std::size_t k,
                                                  std::uint64_t seed) {
  if (k < 2) throw IntegrityError("fold count must be >= 2");
  if (k > trace.n_queries())
    throw IntegrityError("fold count " + std::to_string(k) + " exceeds " +
                         std::to_string(trace.n_queries()) + " queries");

  std::vector<std::string> ids;
  ids.reserve(trace.n_queries());
  for (const auto& q : trace.queries()) ids.push_back(q.query_id);

  Rng rng(seed);
  rng.shuffle(ids);

  std::vector<std::vector<std::string>> folds(k);
  for (std::size_t i = 0; i < ids.size(); ++i)
    folds[i % k].push_back(std::move(ids[i]));
  return folds;
}

}  // namespace q2c
