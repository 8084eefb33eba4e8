#include "q2c/featurize.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "q2c/digest.hpp"
#include "q2c/errors.hpp"

namespace q2c {

namespace {

// Extracts the first top-level JSON array from a model reply, tolerating
// markdown fences and prose around it.
nlohmann::json extract_json_array(const std::string& text) {
  const auto start = text.find('[');
  if (start == std::string::npos)
    throw ParseError("no JSON array in LLM response");
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[') ++depth;
    else if (c == ']') {
      --depth;
      if (depth == 0)
        return nlohmann::json::parse(text.substr(start, i - start + 1));
    }
  }
  throw ParseError("unterminated JSON array in LLM response");
}

std::string slugify(const std::string& question) {
  std::string s;
  for (char c : question) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else if (!s.empty() && s.back() != '_')
      s.push_back('_');
    if (s.size() >= 48) break;
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s.empty() ? "characteristic" : s;
}

std::string build_proposal_prompt(std::span<const QueryRecord> samples,
                                  std::size_t d) {
  std::ostringstream out;
  out << "You are designing a per-query routing signal for a query workload.\n"
      << "Below are sample queries from the workload. Propose exactly " << d
      << " binary characteristics that distinguish these queries from one "
         "another.\n"
      << "Each characteristic must be phrased as a yes/no question answerable "
         "from the query text alone (no external knowledge, no retrieval).\n"
      << "Respond with only a JSON array of exactly " << d
      << " objects, each {\"id\": \"snake_case_id\", \"question\": \"...\"}, "
         "with unique ids.\n\nSample queries:\n";
  const std::size_t n = std::min<std::size_t>(samples.size(), 40);
  for (std::size_t i = 0; i < n; ++i)
    out << (i + 1) << ". " << samples[i].text << "\n";
  return out.str();
}

std::string build_label_prompt(const QueryRecord& query,
                               const CharacteristicSchema& schema) {
  std::ostringstream out;
  out << "Answer each yes/no question about the query below, from the query "
         "text alone.\n"
      << "Query: " << query.text << "\n\nQuestions:\n";
  for (std::size_t i = 0; i < schema.characteristics.size(); ++i)
    out << (i + 1) << ". " << schema.characteristics[i].question << "\n";
  out << "\nRespond with only a JSON array of exactly "
      << schema.characteristics.size()
      << " boolean values, one per question, in order.\n";
  return out.str();
}

CharacteristicSchema parse_proposal(const std::string& response, std::size_t d) {
  const auto arr = extract_json_array(response);
  if (!arr.is_array() || arr.size() != d)
    throw ParseError("expected " + std::to_string(d) + " characteristics, got " +
                     std::to_string(arr.is_array() ? arr.size() : 0));
  CharacteristicSchema schema;
  for (const auto& item : arr) {
    Characteristic c;
    if (item.is_object() && item.contains("question")) {
      c.question = item["question"].get<std::string>();
      c.id = item.contains("id") && item["id"].is_string()
                 ? item["id"].get<std::string>()
                 : slugify(c.question);
    } else if (item.is_string()) {
      c.question = item.get<std::string>();
      c.id = slugify(c.question);
    } else {
      throw ParseError("characteristic entry is neither object nor string");
    }
    if (c.question.empty()) throw ParseError("empty characteristic question");
    schema.characteristics.push_back(std::move(c));
  }
  // Uniquify ids deterministically if the model repeated one.
  for (std::size_t i = 0; i < schema.characteristics.size(); ++i) {
    auto& id = schema.characteristics[i].id;
    for (std::size_t j = 0; j < i; ++j) {
      if (schema.characteristics[j].id == id) {
        id += "_" + std::to_string(i + 1);
        break;
      }
    }
  }
  schema.version = schema.digest().substr(0, 12);
  return schema;
}

std::vector<double> parse_label_response(const std::string& response,
                                         std::size_t d) {
  const auto arr = extract_json_array(response);
  if (!arr.is_array() || arr.size() != d)
    throw ParseError("expected " + std::to_string(d) + " answers, got " +
                     std::to_string(arr.is_array() ? arr.size() : 0));
  std::vector<double> values;
  values.reserve(d);
  for (const auto& item : arr) {
    if (item.is_boolean()) {
      values.push_back(item.get<bool>() ? 1.0 : 0.0);
    } else if (item.is_number()) {
      const double v = item.get<double>();
      if (v != 0.0 && v != 1.0)
        throw ParseError("answer value must be 0 or 1");
      values.push_back(v);
    } else if (item.is_string()) {
      std::string s = item.get<std::string>();
      std::transform(s.begin(), s.end(), s.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (s == "yes" || s == "true")
        values.push_back(1.0);
      else if (s == "no" || s == "false")
        values.push_back(0.0);
      else
        throw ParseError("unrecognized answer \"" + s + "\"");
    } else {
      throw ParseError("answer entry is not a boolean");
    }
  }
  return values;
}

// Issues the request and parses with fn; one parse-failure retry that
// bypasses any response cache so a fresh completion is fetched.
template <typename Parser>
auto complete_and_parse(const LlmEndpoint& llm, const LlmRequest& req,
                        Parser&& parse) {
  if (!llm.client) throw LlmError("no LLM client configured");
  std::string response = llm.client->complete(req);
  try {
    return parse(response);
  } catch (const ParseError& first) {
    std::string retried = llm.client->complete(req, /*bypass_cache=*/true);
    try {
      return parse(retried);
    } catch (const ParseError& second) {
      throw LlmError(std::string("malformed LLM output after retry: ") +
                     second.what());
    }
  }
}

}  // namespace

std::string CharacteristicSchema::digest() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : characteristics)
    j.push_back({{"id", c.id}, {"question", c.question}});
  return sha256_hex(j.dump());
}

std::string LabelAllResult::failed_ids() const {
  std::string out;
  for (const auto& [id, msg] : failures) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

CharacteristicSchema propose_characteristics(
    std::span<const QueryRecord> sample_queries, std::size_t d,
    const LlmEndpoint& llm) {
  if (sample_queries.empty())
    throw IntegrityError("propose_characteristics: no sample queries");
  if (d < 1 || d > 200)
    throw IntegrityError("propose_characteristics: d must be in [1, 200]");

  LlmRequest req{llm.model, build_proposal_prompt(sample_queries, d), 0.0};
  return complete_and_parse(llm, req, [d](const std::string& response) {
    return parse_proposal(response, d);
  });
}

FeatureVector label_query(const QueryRecord& query,
                          const CharacteristicSchema& schema,
                          const LlmEndpoint& llm) {
  if (schema.characteristics.empty())
    throw IntegrityError("label_query: empty schema");
  LlmRequest req{llm.model, build_label_prompt(query, schema), 0.0};
  const std::size_t d = schema.dim();
  auto values = complete_and_parse(llm, req, [d](const std::string& response) {
    return parse_label_response(response, d);
  });
  return FeatureVector{query.query_id, std::move(values)};
}

LabelAllResult label_all(std::span<const QueryRecord> queries,
                         const CharacteristicSchema& schema,
                         const LlmEndpoint& llm, std::size_t parallelism) {
  if (parallelism < 1)
    throw IntegrityError("label_all: parallelism must be >= 1");

  struct Slot {
    bool ok = false;
    FeatureVector vector;
    std::string error;
  };
  std::vector<Slot> slots(queries.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= queries.size()) return;
      try {
        slots[i].vector = label_query(queries[i], schema, llm);
        slots[i].ok = true;
      } catch (const std::exception& e) {
        slots[i].error = e.what();
      }
    }
  };

  const std::size_t n_workers = std::min(parallelism, queries.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  LabelAllResult result;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (slots[i].ok)
      result.vectors.push_back(std::move(slots[i].vector));
    else
      result.failures.emplace_back(queries[i].query_id, slots[i].error);
  }
  return result;
}

LabelAllResult label_all(const ProfilingTrace& trace,
                         const CharacteristicSchema& schema,
                         const LlmEndpoint& llm, std::size_t parallelism) {
  return label_all(std::span(trace.queries()), schema, llm, parallelism);
}

DedupOutput dedup_features(const std::vector<FeatureVector>& vectors,
                           const CharacteristicSchema& schema,
                           double corr_threshold) {
  if (vectors.size() < 2)
    throw IntegrityError("dedup_features: need at least 2 vectors");
  if (!(corr_threshold > 0.0 && corr_threshold <= 1.0))
    throw IntegrityError("dedup_features: threshold must be in (0, 1]");
  const std::size_t d = schema.dim();
  for (const auto& v : vectors)
    if (v.values.size() != d)
      throw IntegrityError("dedup_features: vector for \"" + v.query_id +
                           "\" has dimension " + std::to_string(v.values.size()) +
                           ", schema has " + std::to_string(d));

  const std::size_t n = vectors.size();
  std::vector<double> mean(d, 0.0);
  for (const auto& v : vectors)
    for (std::size_t j = 0; j < d; ++j) mean[j] += v.values[j];
  for (auto& m : mean) m /= static_cast<double>(n);

  DedupOutput out;
  std::vector<bool> dropped(d, false);

  for (std::size_t j = 0; j < d; ++j) {
    bool constant = true;
    for (const auto& v : vectors)
      if (v.values[j] != vectors[0].values[j]) {
        constant = false;
        break;
      }
    if (constant) {
      dropped[j] = true;
      out.report.dropped_constant.push_back(schema.characteristics[j].id);
    }
  }

  auto correlation = [&](std::size_t a, std::size_t b) {
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (const auto& v : vectors) {
      const double da = v.values[a] - mean[a];
      const double db = v.values[b] - mean[b];
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
    return sab / std::sqrt(saa * sbb);  // columns here are non-constant
  };

  // Later column of a correlated pair loses; survivors keep schema order.
  for (std::size_t k = 1; k < d; ++k) {
    if (dropped[k]) continue;
    for (std::size_t j = 0; j < k; ++j) {
      if (dropped[j]) continue;
      const double corr = correlation(j, k);
      if (std::abs(corr) > corr_threshold) {
        dropped[k] = true;
        out.report.dropped_correlated.push_back(
            {schema.characteristics[j].id, schema.characteristics[k].id, corr});
        break;
      }
    }
  }

  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < d; ++j)
    if (!dropped[j]) {
      kept.push_back(j);
      out.report.retained.push_back(schema.characteristics[j].id);
    }
  if (kept.empty())
    throw IntegrityError("dedup_features: every column was dropped");

  for (std::size_t j : kept)
    out.schema.characteristics.push_back(schema.characteristics[j]);
  out.schema.version = out.schema.digest().substr(0, 12);

  out.vectors.reserve(n);
  for (const auto& v : vectors) {
    FeatureVector pv;
    pv.query_id = v.query_id;
    pv.values.reserve(kept.size());
    for (std::size_t j : kept) pv.values.push_back(v.values[j]);
    out.vectors.push_back(std::move(pv));
  }
  return out;
}

std::vector<FeatureVector> load_feature_vectors(const std::string& path,
                                                FeatureMode mode) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<FeatureVector> vectors;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.contains("query_id") || !rec["query_id"].is_string() ||
        !rec.contains("values") || !rec["values"].is_array())
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected {query_id, values}");
    FeatureVector fv;
    fv.query_id = rec["query_id"].get<std::string>();
    for (const auto& v : rec["values"]) {
      if (!v.is_number())
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": non-numeric value");
      const double x = v.get<double>();
      if (mode == FeatureMode::kBinary && x != 0.0 && x != 1.0)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": value " + std::to_string(x) +
                         " not allowed in binary mode");
      fv.values.push_back(x);
    }
    if (vectors.empty()) {
      dim = fv.values.size();
    } else if (fv.values.size() != dim) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": dimension " + std::to_string(fv.values.size()) +
                       " differs from " + std::to_string(dim));
    }
    vectors.push_back(std::move(fv));
  }
  return vectors;
}

void save_feature_vectors(const std::string& path,
                          const std::vector<FeatureVector>& vectors) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path);
  for (const auto& v : vectors) {
    nlohmann::json rec = {{"query_id", v.query_id}, {"values", v.values}};
    out << rec.dump() << "\n";
  }
}

CharacteristicSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  CharacteristicSchema schema;
  schema.version = j.value("version", "");
  if (!j.contains("characteristics") || !j["characteristics"].is_array())
    throw ParseError(path + ": missing characteristics array");
  for (const auto& item : j["characteristics"]) {
    Characteristic c;
    c.id = item.at("id").get<std::string>();
    c.question = item.at("question").get<std::string>();
    schema.characteristics.push_back(std::move(c));
  }
  if (schema.characteristics.empty() || schema.characteristics.size() > 200)
    throw IntegrityError(path + ": schema must have 1..200 characteristics");
  if (schema.version.empty()) schema.version = schema.digest().substr(0, 12);
  return schema;
}

void save_schema(const std::string& path, const CharacteristicSchema& schema) {
  nlohmann::json chars = nlohmann::json::array();
  for (const auto& c : schema.characteristics)
    chars.push_back({{"id", c.id}, {"question", c.question}});
  nlohmann::json j = {{"version", schema.version}, {"characteristics", chars}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace q2c
