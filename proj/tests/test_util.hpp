#pragma once

// Small fixtures shared by the unit and property suites.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "towerlab/data.hpp"
#include "towerlab/log.hpp"
#include "towerlab/rng.hpp"
#include "towerlab/tables.hpp"

namespace towerlab::testing {

inline std::filesystem::path data_dir() { return TOWERLAB_DATA_DIR; }

/// One query per entry of `labels`; features are drawn uniformly in [-1, 1].
inline Dataset random_dataset(const std::vector<std::vector<int>>& labels, std::size_t dim, std::uint64_t seed) {
  Dataset ds;
  ds.feature_dim = dim;
  auto rng = Stream::make(seed, StreamTag::corpus, 0x7e57);
  for (std::size_t qi = 0; qi < labels.size(); ++qi) {
    Query q;
    q.id = "q" + std::to_string(qi);
    for (std::size_t p = 0; p < labels[qi].size(); ++p) {
      Document d;
      d.doc_id = static_cast<int>(p);
      d.label = labels[qi][p];
      for (std::size_t j = 0; j < dim; ++j) d.features.push_back(rng.uniform(-1.0, 1.0));
      q.docs.push_back(std::move(d));
    }
    ds.queries.push_back(std::move(q));
  }
  return ds;
}

/// `n_queries` queries of `n_docs` documents with labels cycling through 0..4.
inline Dataset random_dataset(std::size_t n_queries, std::size_t n_docs, std::size_t dim, std::uint64_t seed) {
  std::vector<std::vector<int>> labels(n_queries);
  for (std::size_t qi = 0; qi < n_queries; ++qi) {
    for (std::size_t p = 0; p < n_docs; ++p) labels[qi].push_back(static_cast<int>((qi + p) % 5));
  }
  return random_dataset(labels, dim, seed);
}

inline LabelTable constant_labels(const Dataset& ds, double v) {
  LabelTable t{zeros_like(ds)};
  for (auto& q : t.values) {
    for (auto& x : q) x = v;
  }
  return t;
}

/// Appends one session showing `docs` (positions) at ranks 1.. with the given clicks.
inline void push_session(SessionLog& log, std::uint64_t sid, std::uint32_t query, const std::vector<std::uint32_t>& docs,
                         const std::vector<int>& clicks = {}) {
  for (std::size_t r = 0; r < docs.size(); ++r) {
    log.push({sid, query, docs[r], static_cast<std::uint16_t>(r + 1),
              static_cast<std::uint8_t>(clicks.empty() ? 0 : clicks[r])});
  }
  log.n_sessions += 1;
  log.max_rank = std::max(log.max_rank, docs.size());
}

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("towerlab-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace towerlab::testing
