#pragma once

// Per-document value tables (labels, policy scores) aligned with a Dataset.

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "towerlab/data.hpp"
#include "towerlab/io.hpp"

namespace towerlab {

struct DocValues {
  std::vector<std::vector<double>> values;  // [query index][position]

  double at(std::size_t qi, std::size_t pos) const { return values[qi][pos]; }
  double& at(std::size_t qi, std::size_t pos) { return values[qi][pos]; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& v : values) n += v.size();
    return n;
  }

  bool matches(const Dataset& ds) const {
    if (values.size() != ds.queries.size()) return false;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].size() != ds.queries[i].docs.size()) return false;
    }
    return true;
  }

  template <class F>
  void for_each(F&& f) const {
    for (std::size_t qi = 0; qi < values.size(); ++qi) {
      for (std::size_t p = 0; p < values[qi].size(); ++p) f(qi, p, values[qi][p]);
    }
  }

  bool operator==(const DocValues&) const = default;
};

inline DocValues zeros_like(const Dataset& ds) {
  DocValues t;
  t.values.resize(ds.queries.size());
  for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) t.values[qi].assign(ds.queries[qi].docs.size(), 0.0);
  return t;
}

/// Real-valued relevance per document, in [0,4] once scaled.
struct LabelTable : DocValues {};

/// Logging-policy scores per document.
struct ScoreTable : DocValues {};

inline LabelTable expert_labels(const Dataset& ds) {
  LabelTable t{zeros_like(ds)};
  for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
    for (std::size_t p = 0; p < ds.queries[qi].docs.size(); ++p) t.at(qi, p) = ds.queries[qi].docs[p].label;
  }
  return t;
}

/// `query_id,doc_id,<value_name>` rows in dataset order.
inline std::string write_doc_values_csv(const Dataset& ds, const DocValues& t, std::string_view value_name) {
  if (!t.matches(ds)) throw std::invalid_argument("table does not match dataset layout");
  std::string out = "query_id,doc_id,";
  out += value_name;
  out += '\n';
  for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
    for (std::size_t p = 0; p < ds.queries[qi].docs.size(); ++p) {
      out += ds.queries[qi].id;
      out += ',';
      out += std::to_string(ds.queries[qi].docs[p].doc_id);
      out += ',';
      out += format_double(t.at(qi, p));
      out += '\n';
    }
  }
  return out;
}

/// Reads a table written by write_doc_values_csv; every document must be covered.
inline DocValues read_doc_values_csv(const Dataset& ds, std::string_view text, std::string_view value_name) {
  DocValues t = zeros_like(ds);
  std::vector<std::vector<char>> seen(ds.queries.size());
  for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) seen[qi].assign(ds.queries[qi].docs.size(), 0);
  const DocLookup lookup(ds);
  const auto rows = csv_rows(text, "query_id,doc_id," + std::string(value_name));
  for (const auto& row : rows) {
    if (row.size() != 3) throw std::runtime_error("malformed table row");
    const auto qi = lookup.query(row[0]);
    const auto doc = parse_int<int>(row[1]);
    const auto v = parse_double(row[2]);
    if (!doc || !v) throw std::runtime_error("non-numeric table row");
    const auto p = lookup.position(qi, *doc);
    t.at(qi, p) = *v;
    seen[qi][p] = 1;
  }
  for (const auto& s : seen) {
    for (char c : s) {
      if (!c) throw std::runtime_error("table does not cover every document");
    }
  }
  return t;
}

}  // namespace towerlab
