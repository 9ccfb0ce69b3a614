#pragma once

// LETOR-format ranking datasets and their preprocessing.
//
// Documents are addressed internally by (query index, position within the
// query). `Document::doc_id` is the document's identity and is what every
// serialized artifact carries; after truncation it need not equal the
// position.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "towerlab/io.hpp"

namespace towerlab {

enum class Split { train, validation, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

struct Document {
  int doc_id = 0;
  std::vector<double> features;
  int label = 0;

  bool operator==(const Document&) const = default;
};

struct Query {
  std::string id;
  std::vector<Document> docs;

  bool operator==(const Query&) const = default;
};

struct Dataset {
  std::vector<Query> queries;
  std::size_t feature_dim = 0;
  Split split = Split::train;

  std::size_t num_docs() const {
    std::size_t n = 0;
    for (const auto& q : queries) n += q.docs.size();
    return n;
  }

  std::size_t max_docs_per_query() const {
    std::size_t n = 0;
    for (const auto& q : queries) n = std::max(n, q.docs.size());
    return n;
  }

  /// offsets[qi] is the flat index of the first document of query qi;
  /// offsets.back() == num_docs().
  std::vector<std::size_t> doc_offsets() const {
    std::vector<std::size_t> off(queries.size() + 1, 0);
    for (std::size_t i = 0; i < queries.size(); ++i) off[i + 1] = off[i] + queries[i].docs.size();
    return off;
  }

  bool operator==(const Dataset&) const = default;
};

/// Resolves serialized (query_id, doc_id) pairs back to internal positions.
class DocLookup {
 public:
  explicit DocLookup(const Dataset& ds) {
    for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
      query_index_.emplace(ds.queries[qi].id, qi);
      auto& m = positions_.emplace_back();
      for (std::size_t p = 0; p < ds.queries[qi].docs.size(); ++p) m.emplace(ds.queries[qi].docs[p].doc_id, p);
    }
  }

  std::size_t query(std::string_view id) const {
    auto it = query_index_.find(std::string(id));
    if (it == query_index_.end()) throw std::runtime_error("unknown query id '" + std::string(id) + "'");
    return it->second;
  }

  std::size_t position(std::size_t qi, int doc_id) const {
    auto it = positions_.at(qi).find(doc_id);
    if (it == positions_.at(qi).end()) {
      throw std::runtime_error("unknown doc id " + std::to_string(doc_id) + " in query index " + std::to_string(qi));
    }
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::size_t> query_index_;
  std::vector<std::unordered_map<int, std::size_t>> positions_;
};

class LetorParseError : public std::runtime_error {
 public:
  LetorParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " at line " + std::to_string(line)), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Parses `<label> qid:<id> <fid>:<val> ... [# comment]` lines. Documents are
/// grouped by query in order of first appearance; doc ids are ordinals within
/// their query; absent feature ids are zero.
inline Dataset parse_letor_text(std::string_view text, Split split = Split::train) {
  struct Row {
    std::size_t query;
    int label;
    std::vector<std::pair<std::size_t, double>> values;
  };
  std::vector<Row> rows;
  std::vector<std::string> query_ids;
  std::unordered_map<std::string, std::size_t> query_index;
  std::size_t max_fid = 0;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto tokens = split_ws(line);
    if (tokens.size() < 2) throw LetorParseError("malformed line (expected label and qid)", line_no);
    const auto label = parse_double(tokens[0]);
    if (!label) throw LetorParseError("non-numeric label", line_no);
    if (*label != std::floor(*label) || *label < 0.0 || *label > 4.0) {
      throw LetorParseError("label must be an integer grade in [0,4]", line_no);
    }
    if (tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4) {
      throw LetorParseError("malformed qid token", line_no);
    }
    const std::string qid(tokens[1].substr(4));
    auto [it, inserted] = query_index.emplace(qid, query_ids.size());
    if (inserted) query_ids.push_back(qid);

    Row row{it->second, static_cast<int>(*label), {}};
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) throw LetorParseError("malformed feature token", line_no);
      const auto fid = parse_int<std::size_t>(tokens[t].substr(0, colon));
      if (!fid || *fid == 0) throw LetorParseError("malformed feature id", line_no);
      const auto val = parse_double(tokens[t].substr(colon + 1));
      if (!val) throw LetorParseError("non-numeric feature value", line_no);
      for (const auto& [f, v] : row.values) {
        if (f == *fid) throw LetorParseError("duplicate feature id", line_no);
      }
      row.values.emplace_back(*fid, *val);
      max_fid = std::max(max_fid, *fid);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty LETOR file");

  Dataset ds;
  ds.split = split;
  ds.feature_dim = max_fid;
  ds.queries.resize(query_ids.size());
  for (std::size_t i = 0; i < query_ids.size(); ++i) ds.queries[i].id = query_ids[i];
  for (auto& row : rows) {
    auto& q = ds.queries[row.query];
    Document doc;
    doc.doc_id = static_cast<int>(q.docs.size());
    doc.label = row.label;
    doc.features.assign(max_fid, 0.0);
    for (const auto& [f, v] : row.values) doc.features[f - 1] = v;
    q.docs.push_back(std::move(doc));
  }
  return ds;
}

inline Dataset parse_letor(const std::filesystem::path& path, Split split = Split::train) {
  return parse_letor_text(read_file(path), split);
}

/// Dense LETOR text, one line per document in dataset order.
inline std::string serialize_letor(const Dataset& ds) {
  std::string out;
  for (const auto& q : ds.queries) {
    for (const auto& d : q.docs) {
      out += std::to_string(d.label);
      out += " qid:";
      out += q.id;
      for (std::size_t f = 0; f < d.features.size(); ++f) {
        out += ' ';
        out += std::to_string(f + 1);
        out += ':';
        out += format_double(d.features[f]);
      }
      out += '\n';
    }
  }
  return out;
}

inline double log1p_signed(double x) { return std::copysign(std::log1p(std::fabs(x)), x); }

inline Dataset normalize_log1p(Dataset ds) {
  for (auto& q : ds.queries) {
    for (auto& d : q.docs) {
      for (auto& x : d.features) x = log1p_signed(x);
    }
  }
  return ds;
}

/// Keeps the k highest-labelled documents per query (ties: ascending doc_id).
/// Kept documents retain their relative order.
inline Dataset truncate_top_k(Dataset ds, std::size_t k = 25) {
  if (k == 0) throw std::invalid_argument("truncate_top_k: k must be >= 1");
  for (auto& q : ds.queries) {
    if (q.docs.size() <= k) continue;
    std::vector<std::size_t> order(q.docs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (q.docs[a].label != q.docs[b].label) return q.docs[a].label > q.docs[b].label;
      return q.docs[a].doc_id < q.docs[b].doc_id;
    });
    order.resize(k);
    std::sort(order.begin(), order.end());
    std::vector<Document> kept;
    kept.reserve(k);
    for (auto i : order) kept.push_back(std::move(q.docs[i]));
    q.docs = std::move(kept);
  }
  return ds;
}

struct FilterResult {
  Dataset dataset;
  double fraction_removed = 0.0;
};

/// Drops queries without a relevant document (label >= 1).
inline FilterResult drop_irrelevant_queries(Dataset ds) {
  const std::size_t before = ds.queries.size();
  std::erase_if(ds.queries, [](const Query& q) {
    return std::none_of(q.docs.begin(), q.docs.end(), [](const Document& d) { return d.label >= 1; });
  });
  const double removed = before == 0 ? 0.0 : static_cast<double>(before - ds.queries.size()) / before;
  return {std::move(ds), removed};
}

struct PreprocessOptions {
  std::size_t truncate = 25;  // 0 disables
  bool drop_irrelevant = true;
  bool normalize = true;
};

/// parse -> truncate -> drop -> normalize, in that order.
inline FilterResult preprocess(Dataset ds, const PreprocessOptions& opt) {
  if (opt.truncate > 0) ds = truncate_top_k(std::move(ds), opt.truncate);
  FilterResult r{std::move(ds), 0.0};
  if (opt.drop_irrelevant) r = drop_irrelevant_queries(std::move(r.dataset));
  if (opt.normalize) r.dataset = normalize_log1p(std::move(r.dataset));
  return r;
}

}  // namespace towerlab
