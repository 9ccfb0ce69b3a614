#pragma once

// Relevance towers of the additive two-tower model.
//
// Each tower owns a flat parameter vector and exposes
//   forward(doc, x)                     -> relevance logit
//   backward(doc, x, dlogit, grad)      -> grad += dlogit * d(logit)/d(params)
// where `doc` is the flat document index and `x` its feature row.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "towerlab/data.hpp"
#include "towerlab/rng.hpp"

namespace towerlab {

/// Row-major copy of every document's features, indexed by flat doc index.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  explicit FeatureMatrix(const Dataset& ds) : dim_(ds.feature_dim), offsets_(ds.doc_offsets()) {
    data_.reserve(offsets_.back() * dim_);
    for (const auto& q : ds.queries) {
      for (const auto& d : q.docs) {
        if (d.features.size() != dim_) throw std::invalid_argument("document feature dimension mismatch");
        data_.insert(data_.end(), d.features.begin(), d.features.end());
      }
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t num_docs() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t num_queries() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t docs_in(std::size_t qi) const { return offsets_[qi + 1] - offsets_[qi]; }
  std::size_t flat(std::size_t qi, std::size_t pos) const { return offsets_[qi] + pos; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  std::span<const double> row(std::size_t flat_index) const {
    return {data_.data() + flat_index * dim_, dim_};
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<double> data_;
};

enum class TowerKind { embedding, linear, mlp };

inline std::string_view to_string(TowerKind k) {
  switch (k) {
    case TowerKind::embedding: return "embedding";
    case TowerKind::linear: return "linear";
    case TowerKind::mlp: return "mlp";
  }
  return "linear";
}

inline TowerKind parse_tower_kind(std::string_view s) {
  if (s == "embedding") return TowerKind::embedding;
  if (s == "linear") return TowerKind::linear;
  if (s == "mlp") return TowerKind::mlp;
  throw std::invalid_argument("unknown relevance tower '" + std::string(s) + "'");
}

/// One free relevance logit per (query, document) of the construction dataset.
struct EmbeddingTower {
  std::vector<std::size_t> offsets;  // per-query layout, offsets.back() == params.size()
  std::vector<double> params;

  static EmbeddingTower zeros(const std::vector<std::size_t>& layout) {
    return {layout, std::vector<double>(layout.back(), 0.0)};
  }

  bool contains(std::size_t qi, std::size_t pos) const {
    return qi + 1 < offsets.size() && pos < offsets[qi + 1] - offsets[qi];
  }

  double forward(std::size_t doc, std::span<const double>) const { return params[doc]; }

  void backward(std::size_t doc, std::span<const double>, double dlogit, std::span<double> grad) const {
    grad[doc] += dlogit;
  }

  bool operator==(const EmbeddingTower&) const = default;
};

/// w.x + b.
struct LinearTower {
  std::size_t dim = 0;
  std::vector<double> params;  // dim weights, then intercept

  static LinearTower random(std::size_t dim, std::uint64_t seed) {
    LinearTower t{dim, std::vector<double>(dim + 1, 0.0)};
    auto rng = Stream::make(seed, StreamTag::tower_init, 1);
    const double a = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dim, 1)));
    for (std::size_t i = 0; i < dim; ++i) t.params[i] = rng.uniform(-a, a);
    return t;
  }

  double forward(std::size_t, std::span<const double> x) const {
    double s = params[dim];
    for (std::size_t i = 0; i < dim; ++i) s += params[i] * x[i];
    return s;
  }

  void backward(std::size_t, std::span<const double> x, double dlogit, std::span<double> grad) const {
    for (std::size_t i = 0; i < dim; ++i) grad[i] += dlogit * x[i];
    grad[dim] += dlogit;
  }

  bool operator==(const LinearTower&) const = default;
};

/// Two hidden ELU layers of `hidden` units and a scalar output.
/// Parameter layout: W1 (hidden x dim), b1, W2 (hidden x hidden), b2, w3 (hidden), b3.
struct MlpTower {
  std::size_t dim = 0;
  std::size_t hidden = 32;
  std::vector<double> params;

  static std::size_t param_count(std::size_t dim, std::size_t hidden) {
    return hidden * dim + hidden + hidden * hidden + hidden + hidden + 1;
  }

  static MlpTower random(std::size_t dim, std::uint64_t seed, std::size_t hidden = 32) {
    if (hidden == 0 || hidden > 256) throw std::invalid_argument("mlp hidden width must be in [1,256]");
    MlpTower t{dim, hidden, std::vector<double>(param_count(dim, hidden), 0.0)};
    auto rng = Stream::make(seed, StreamTag::tower_init, 2);
    const double a_in = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dim, 1)));
    const double a_h = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto fill = [&](std::size_t off, std::size_t n, double a) {
      for (std::size_t i = 0; i < n; ++i) t.params[off + i] = rng.uniform(-a, a);
    };
    fill(t.w1(), hidden * dim, a_in);
    fill(t.w2(), hidden * hidden, a_h);
    fill(t.w3(), hidden, a_h);
    return t;
  }

  std::size_t w1() const { return 0; }
  std::size_t b1() const { return hidden * dim; }
  std::size_t w2() const { return b1() + hidden; }
  std::size_t b2() const { return w2() + hidden * hidden; }
  std::size_t w3() const { return b2() + hidden; }
  std::size_t b3() const { return w3() + hidden; }

  // Activations and their derivatives per hidden layer: a1, a1', a2, a2'.
  std::size_t cache_size() const { return 4 * hidden; }

  double forward(std::size_t, std::span<const double> x, std::span<double> cache) const {
    const double* p = params.data();
    double* a1 = cache.data();
    double* g1 = a1 + hidden;
    double* a2 = g1 + hidden;
    double* g2 = a2 + hidden;
    auto elu = [](double z, double& a, double& g) {
      if (z > 0.0) {
        a = z;
        g = 1.0;
      } else {
        a = std::expm1(z);
        g = a + 1.0;
      }
    };
    // Unit index innermost: independent accumulators, same summation order.
    double z[256];
    for (std::size_t h = 0; h < hidden; ++h) z[h] = p[b1() + h];
    for (std::size_t i = 0; i < dim; ++i) {
      const double xi = x[i];
      for (std::size_t h = 0; h < hidden; ++h) z[h] += p[w1() + h * dim + i] * xi;
    }
    for (std::size_t h = 0; h < hidden; ++h) elu(z[h], a1[h], g1[h]);
    for (std::size_t h = 0; h < hidden; ++h) z[h] = p[b2() + h];
    for (std::size_t j = 0; j < hidden; ++j) {
      const double aj = a1[j];
      for (std::size_t h = 0; h < hidden; ++h) z[h] += p[w2() + h * hidden + j] * aj;
    }
    double out = p[b3()];
    for (std::size_t h = 0; h < hidden; ++h) {
      elu(z[h], a2[h], g2[h]);
      out += p[w3() + h] * a2[h];
    }
    return out;
  }

  /// Gradient from activations cached by the forward pass on the same x.
  void backward(std::size_t, std::span<const double> x, std::span<const double> cache, double dlogit,
                std::span<double> grad) const {
    const double* p = params.data();
    const double* a1 = cache.data();
    const double* g1 = a1 + hidden;
    const double* a2 = g1 + hidden;
    const double* g2 = a2 + hidden;
    double d2[256], d1[256];
    grad[b3()] += dlogit;
    for (std::size_t h = 0; h < hidden; ++h) {
      grad[w3() + h] += dlogit * a2[h];
      d2[h] = dlogit * p[w3() + h] * g2[h];
    }
    std::fill(d1, d1 + hidden, 0.0);
    for (std::size_t h = 0; h < hidden; ++h) {
      grad[b2() + h] += d2[h];
      double* grow = grad.data() + w2() + h * hidden;
      const double* prow = p + w2() + h * hidden;
      for (std::size_t j = 0; j < hidden; ++j) {
        grow[j] += d2[h] * a1[j];
        d1[j] += d2[h] * prow[j];
      }
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      const double g = d1[j] * g1[j];
      grad[b1() + j] += g;
      double* grow = grad.data() + w1() + j * dim;
      for (std::size_t i = 0; i < dim; ++i) grow[i] += g * x[i];
    }
  }

  double forward(std::size_t doc, std::span<const double> x) const {
    double cache[1024];
    return forward(doc, x, {cache, cache_size()});
  }

  void backward(std::size_t doc, std::span<const double> x, double dlogit, std::span<double> grad) const {
    double cache[1024];
    forward(doc, x, {cache, cache_size()});
    backward(doc, x, {cache, cache_size()}, dlogit, grad);
  }

  bool operator==(const MlpTower&) const = default;
};

/// Closed set of relevance-tower variants.
class RelevanceTower {
 public:
  using Variant = std::variant<EmbeddingTower, LinearTower, MlpTower>;

  RelevanceTower() : tower_(LinearTower{}) {}
  RelevanceTower(EmbeddingTower t) : tower_(std::move(t)) {}
  RelevanceTower(LinearTower t) : tower_(std::move(t)) {}
  RelevanceTower(MlpTower t) : tower_(std::move(t)) {}

  /// Fresh tower for a dataset; embedding layout follows `features`.
  static RelevanceTower make(TowerKind kind, const FeatureMatrix& features, std::uint64_t seed) {
    switch (kind) {
      case TowerKind::embedding: return EmbeddingTower::zeros(features.offsets());
      case TowerKind::linear: return LinearTower::random(features.dim(), seed);
      case TowerKind::mlp: return MlpTower::random(features.dim(), seed);
    }
    throw std::invalid_argument("unknown tower kind");
  }

  TowerKind kind() const { return static_cast<TowerKind>(tower_.index()); }

  std::vector<double>& params() {
    return std::visit([](auto& t) -> std::vector<double>& { return t.params; }, tower_);
  }
  const std::vector<double>& params() const {
    return std::visit([](const auto& t) -> const std::vector<double>& { return t.params; }, tower_);
  }

  double forward(std::size_t doc, std::span<const double> x) const {
    return std::visit([&](const auto& t) { return t.forward(doc, x); }, tower_);
  }

  void backward(std::size_t doc, std::span<const double> x, double dlogit, std::span<double> grad) const {
    std::visit([&](const auto& t) { t.backward(doc, x, dlogit, grad); }, tower_);
  }

  /// Scratch doubles a cached forward pass needs (0 for towers without one).
  std::size_t cache_size() const {
    const auto* m = std::get_if<MlpTower>(&tower_);
    return m ? m->cache_size() : 0;
  }

  /// forward/backward pair sharing `cache` (cache_size() doubles).
  double forward(std::size_t doc, std::span<const double> x, std::span<double> cache) const {
    if (const auto* m = std::get_if<MlpTower>(&tower_)) return m->forward(doc, x, cache);
    return forward(doc, x);
  }

  void backward(std::size_t doc, std::span<const double> x, std::span<const double> cache, double dlogit,
                std::span<double> grad) const {
    if (const auto* m = std::get_if<MlpTower>(&tower_)) return m->backward(doc, x, cache, dlogit, grad);
    backward(doc, x, dlogit, grad);
  }

  /// Checks that this tower can score every document of `features`.
  void check_compatible(const FeatureMatrix& features) const {
    std::visit(
        [&](const auto& t) {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, EmbeddingTower>) {
            if (t.offsets != features.offsets()) {
              throw std::invalid_argument("embedding tower layout does not match the dataset");
            }
          } else {
            if (t.dim != features.dim()) {
              throw std::invalid_argument("tower input dimension " + std::to_string(t.dim) +
                                          " does not match feature_dim " + std::to_string(features.dim()));
            }
          }
        },
        tower_);
  }

  const Variant& variant() const { return tower_; }
  Variant& variant() { return tower_; }

  bool operator==(const RelevanceTower& o) const = default;

 private:
  Variant tower_;
};

/// Scores every document with the tower.
inline std::vector<double> score_all(const RelevanceTower& tower, const FeatureMatrix& features) {
  tower.check_compatible(features);
  std::vector<double> out(features.num_docs());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = tower.forward(i, features.row(i));
  return out;
}

}  // namespace towerlab
