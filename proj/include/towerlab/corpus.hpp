#pragma once

// Generator for the small bundled LETOR corpus.
//
// Each document has a latent relevance a ~ N(0,1). With
// z = s * (mu_j + load_j * a + c_q + noise) and a per-query offset c_q, a raw
// feature is either a signed score sign(z) (exp|z| - 1) or a count
// max(0, exp z - 1), so the signed log1p transform recovers z. The last two
// features carry no signal. Expert labels are graded from a plus an extra
// component no feature sees, so no feature-based model reproduces them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "towerlab/data.hpp"
#include "towerlab/rng.hpp"

namespace towerlab {

struct CorpusSpec {
  std::size_t queries = 100;
  std::size_t docs_per_query = 10;
  std::size_t features = 10;
  std::uint64_t seed = 2024;
  std::string query_prefix = "q";
  double log_scale = 3.0;      // spread of log-features
  double query_spread = 2.0;   // sd of the per-query feature offset
  std::size_t signed_features = 10;  // leading score-like features centred near 0
};

inline Dataset make_synthetic_corpus(const CorpusSpec& spec, Split split) {
  Dataset ds;
  ds.split = split;
  ds.feature_dim = spec.features;
  const auto split_key = static_cast<std::uint64_t>(split);
  auto loads_rng = Stream::make(spec.seed, StreamTag::corpus, 0xfeed);
  std::vector<double> load(spec.features), mu(spec.features);
  for (std::size_t j = 0; j < spec.features; ++j) {
    // The last two features are pure noise.
    load[j] = j + 2 < spec.features ? loads_rng.uniform(0.4, 1.2) * (loads_rng.uniform() < 0.3 ? -1.0 : 1.0) : 0.0;
    mu[j] = j < spec.signed_features ? loads_rng.uniform(-0.5, 0.5) : loads_rng.uniform(0.5, 2.5);
  }
  for (std::size_t qi = 0; qi < spec.queries; ++qi) {
    Query q;
    q.id = spec.query_prefix + std::to_string(split_key) + "_" + std::to_string(qi);
    auto qrng = Stream::make(spec.seed, StreamTag::corpus, split_key, qi);
    const double offset = spec.query_spread * qrng.normal();
    for (std::size_t d = 0; d < spec.docs_per_query; ++d) {
      Document doc;
      doc.doc_id = static_cast<int>(d);
      const double latent = qrng.normal();
      const double hidden = qrng.normal();
      doc.features.resize(spec.features);
      for (std::size_t j = 0; j < spec.features; ++j) {
        const double z = spec.log_scale * (mu[j] + load[j] * latent + offset + 0.6 * qrng.normal());
        // Counts are clipped at zero, scores keep their sign; 4 decimals like
        // typical LETOR dumps.
        const double v = j < spec.signed_features ? std::copysign(std::expm1(std::fabs(z)), z)
                                                  : std::max(0.0, std::expm1(z));
        doc.features[j] = std::round(v * 1e4) / 1e4;
      }
      const double grade = 1.6 + 1.1 * latent + 0.7 * hidden;
      doc.label = static_cast<int>(std::clamp(std::round(grade), 0.0, 4.0));
      q.docs.push_back(std::move(doc));
    }
    ds.queries.push_back(std::move(q));
  }
  return ds;
}

}  // namespace towerlab
