#pragma once

#include <span>
#include <string>
#include <vector>

#include "q2c/llm.hpp"
#include "q2c/trace.hpp"

namespace q2c {

struct Characteristic {
  std::string id;
  std::string question;  // yes/no-answerable from the query text alone
};

struct CharacteristicSchema {
  std::string version;
  std::vector<Characteristic> characteristics;

  std::size_t dim() const { return characteristics.size(); }
  // Stable digest over the characteristic list; banks record it so a policy
  // can refuse feature vectors produced under a different schema.
  std::string digest() const;
};

struct FeatureVector {
  std::string query_id;
  std::vector<double> values;
};

enum class FeatureMode { kBinary, kReal };

struct DedupReport {
  std::vector<std::string> dropped_constant;
  struct CorrDrop {
    std::string kept_id;
    std::string dropped_id;
    double correlation;
  };
  std::vector<CorrDrop> dropped_correlated;
  std::vector<std::string> retained;  // subsequence of schema order
};

struct DedupOutput {
  CharacteristicSchema schema;
  std::vector<FeatureVector> vectors;
  DedupReport report;
};

// Non-owning handle pairing a transport with a model id.
struct LlmEndpoint {
  LlmClient* client = nullptr;
  std::string model;
};

// Asks the LLM to propose exactly d binary characteristics that distinguish
// the sample queries. At most 40 sample queries are included in the prompt.
// A malformed response (wrong count, unparsable) is retried once with the
// cache bypassed, then fails.
CharacteristicSchema propose_characteristics(
    std::span<const QueryRecord> sample_queries, std::size_t d,
    const LlmEndpoint& llm);

// Labels one query against all d characteristics in a single LLM call.
FeatureVector label_query(const QueryRecord& query,
                          const CharacteristicSchema& schema,
                          const LlmEndpoint& llm);

struct LabelAllResult {
  std::vector<FeatureVector> vectors;  // successes, in input query order
  std::vector<std::pair<std::string, std::string>> failures;  // (id, message)
  bool ok() const { return failures.empty(); }
  // Joined failure ids, for aggregate error messages.
  std::string failed_ids() const;
};

LabelAllResult label_all(std::span<const QueryRecord> queries,
                         const CharacteristicSchema& schema,
                         const LlmEndpoint& llm, std::size_t parallelism);
LabelAllResult label_all(const ProfilingTrace& trace,
                         const CharacteristicSchema& schema,
                         const LlmEndpoint& llm, std::size_t parallelism);

// Drops constant columns, then for each pair with |Pearson correlation|
// above the threshold drops the later column (schema order). Vectors are
// projected onto the retained columns. Throws when nothing survives.
DedupOutput dedup_features(const std::vector<FeatureVector>& vectors,
                           const CharacteristicSchema& schema,
                           double corr_threshold = 0.99);

// Line-delimited {"query_id", "values": [...]}. Binary mode rejects values
// outside {0, 1}; all vectors must share one dimension.
std::vector<FeatureVector> load_feature_vectors(const std::string& path,
                                                FeatureMode mode);
void save_feature_vectors(const std::string& path,
                          const std::vector<FeatureVector>& vectors);

CharacteristicSchema load_schema(const std::string& path);
void save_schema(const std::string& path, const CharacteristicSchema& schema);

}  // namespace q2c
