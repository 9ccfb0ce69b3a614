#pragma once

// Click logs and counted display propensities.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "towerlab/data.hpp"
#include "towerlab/io.hpp"

namespace towerlab {

struct Impression {
  std::uint64_t session_id = 0;
  std::uint32_t query = 0;  // query index in the dataset
  std::uint32_t doc = 0;    // position within the query
  std::uint16_t rank = 1;   // 1-based
  std::uint8_t click = 0;

  bool operator==(const Impression&) const = default;
};

/// Columnar click log. Impressions of one session are contiguous and in rank order.
struct SessionLog {
  std::vector<std::uint64_t> session_id;
  std::vector<std::uint32_t> query;
  std::vector<std::uint32_t> doc;
  std::vector<std::uint16_t> rank;
  std::vector<std::uint8_t> click;
  std::uint64_t n_sessions = 0;
  std::size_t max_rank = 0;  // K

  std::size_t size() const { return click.size(); }
  bool empty() const { return click.empty(); }

  void push(const Impression& imp) {
    session_id.push_back(imp.session_id);
    query.push_back(imp.query);
    doc.push_back(imp.doc);
    rank.push_back(imp.rank);
    click.push_back(imp.click);
  }

  Impression operator[](std::size_t i) const { return {session_id[i], query[i], doc[i], rank[i], click[i]}; }

  void reserve(std::size_t n) {
    session_id.reserve(n);
    query.reserve(n);
    doc.reserve(n);
    rank.reserve(n);
    click.reserve(n);
  }

  bool operator==(const SessionLog&) const = default;
};

inline constexpr std::string_view kLogHeader = "session_id,query_id,doc_id,rank,click";

inline std::string write_log_csv(const Dataset& ds, const SessionLog& log) {
  std::string out(kLogHeader);
  out += '\n';
  out.reserve(log.size() * 20);
  for (std::size_t i = 0; i < log.size(); ++i) {
    out += std::to_string(log.session_id[i]);
    out += ',';
    out += ds.queries[log.query[i]].id;
    out += ',';
    out += std::to_string(ds.queries[log.query[i]].docs[log.doc[i]].doc_id);
    out += ',';
    out += std::to_string(log.rank[i]);
    out += ',';
    out += log.click[i] ? '1' : '0';
    out += '\n';
  }
  return out;
}

inline SessionLog read_log_csv(const Dataset& ds, std::string_view text) {
  const DocLookup lookup(ds);
  SessionLog log;
  const auto rows = csv_rows(text, kLogHeader);
  log.reserve(rows.size());
  std::uint64_t last_session = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5) throw std::runtime_error("malformed log row " + std::to_string(i + 2));
    const auto sid = parse_int<std::uint64_t>(r[0]);
    const auto doc_id = parse_int<int>(r[2]);
    const auto rank = parse_int<std::uint16_t>(r[3]);
    const auto click = parse_int<int>(r[4]);
    if (!sid || !doc_id || !rank || !click || *rank == 0 || (*click != 0 && *click != 1)) {
      throw std::runtime_error("malformed log row " + std::to_string(i + 2));
    }
    const auto qi = lookup.query(r[1]);
    const auto pos = lookup.position(qi, *doc_id);
    if (i == 0 || *sid != last_session) ++log.n_sessions;
    last_session = *sid;
    log.max_rank = std::max<std::size_t>(log.max_rank, *rank);
    log.push({*sid, static_cast<std::uint32_t>(qi), static_cast<std::uint32_t>(pos), *rank,
              static_cast<std::uint8_t>(*click)});
  }
  return log;
}

/// pi(d,k|q) estimated by counting displays over the sessions of each query.
class PropensityTable {
 public:
  PropensityTable() = default;

  PropensityTable(const Dataset& ds, const SessionLog& log) {
    const auto nq = ds.queries.size();
    docs_.resize(nq);
    offsets_.assign(nq + 1, 0);
    for (std::size_t qi = 0; qi < nq; ++qi) {
      docs_[qi] = ds.queries[qi].docs.size();
      offsets_[qi + 1] = offsets_[qi] + docs_[qi] * docs_[qi];
    }
    counts_.assign(offsets_.back(), 0);
    sessions_.assign(nq, 0);
    for (std::size_t i = 0; i < log.size(); ++i) {
      const auto q = log.query[i];
      const auto k = log.rank[i];
      if (k > docs_[q] || log.doc[i] >= docs_[q]) throw std::runtime_error("log does not match dataset layout");
      ++counts_[index(q, log.doc[i], k)];
      if (i == 0 || log.session_id[i] != log.session_id[i - 1]) ++sessions_[q];
    }
  }

  std::size_t num_queries() const { return docs_.size(); }
  std::size_t num_docs(std::size_t qi) const { return docs_[qi]; }
  std::uint64_t sessions(std::size_t qi) const { return sessions_[qi]; }

  std::uint64_t count(std::size_t qi, std::size_t pos, std::size_t rank) const {
    if (rank == 0 || rank > docs_[qi] || pos >= docs_[qi]) return 0;
    return counts_[index(qi, pos, rank)];
  }

  /// 0 for unobserved cells.
  double propensity(std::size_t qi, std::size_t pos, std::size_t rank) const {
    if (sessions_[qi] == 0) return 0.0;
    return static_cast<double>(count(qi, pos, rank)) / static_cast<double>(sessions_[qi]);
  }

  bool operator==(const PropensityTable&) const = default;

 private:
  std::size_t index(std::size_t qi, std::size_t pos, std::size_t rank) const {
    return offsets_[qi] + pos * docs_[qi] + (rank - 1);
  }

  std::vector<std::size_t> docs_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> sessions_;
};

inline PropensityTable estimate_propensities(const Dataset& ds, const SessionLog& log) {
  if (log.empty()) throw std::invalid_argument("estimate_propensities: empty log");
  return PropensityTable(ds, log);
}

/// `query_id,doc_id,rank,propensity` for every observed cell.
inline std::string write_propensities_csv(const Dataset& ds, const PropensityTable& t) {
  std::string out = "query_id,doc_id,rank,propensity\n";
  for (std::size_t qi = 0; qi < t.num_queries(); ++qi) {
    for (std::size_t p = 0; p < t.num_docs(qi); ++p) {
      for (std::size_t k = 1; k <= t.num_docs(qi); ++k) {
        if (t.count(qi, p, k) == 0) continue;
        out += ds.queries[qi].id;
        out += ',';
        out += std::to_string(ds.queries[qi].docs[p].doc_id);
        out += ',';
        out += std::to_string(k);
        out += ',';
        out += format_double(t.propensity(qi, p, k));
        out += '\n';
      }
    }
  }
  return out;
}

}  // namespace towerlab
