#pragma once

// Synthetic relevance labels of known functional form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "towerlab/data.hpp"
#include "towerlab/rng.hpp"
#include "towerlab/tables.hpp"

namespace towerlab {

enum class LabelKind { linear, nonlinear };

/// Generates raw scores w.x + noise (linear) or
/// w2 . tanh(W1 x + b1) + b2 + noise (nonlinear, 16 tanh units).
struct SyntheticLabeler {
  static constexpr std::size_t kHidden = 16;

  LabelKind kind = LabelKind::linear;
  std::size_t input_dim = 0;
  std::vector<double> w;   // linear: input_dim
  std::vector<double> w1;  // nonlinear: kHidden x input_dim, row-major
  std::vector<double> b1;  // kHidden
  std::vector<double> w2;  // kHidden
  double b2 = 0.0;
  double noise_sigma = 0.2;
  std::uint64_t seed = 0;

  /// Weights drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer.
  static SyntheticLabeler random(LabelKind kind, std::size_t input_dim, std::uint64_t seed,
                                 double noise_sigma = 0.2) {
    if (input_dim == 0) throw std::invalid_argument("labeler input dimension must be positive");
    SyntheticLabeler g;
    g.kind = kind;
    g.input_dim = input_dim;
    g.noise_sigma = noise_sigma;
    g.seed = seed;
    auto rng = Stream::make(seed, StreamTag::generator_weights);
    const double a_in = 1.0 / std::sqrt(static_cast<double>(input_dim));
    if (kind == LabelKind::linear) {
      g.w.resize(input_dim);
      for (auto& v : g.w) v = rng.uniform(-a_in, a_in);
    } else {
      const double a_h = 1.0 / std::sqrt(static_cast<double>(kHidden));
      g.w1.resize(kHidden * input_dim);
      for (auto& v : g.w1) v = rng.uniform(-a_in, a_in);
      g.b1.resize(kHidden);
      for (auto& v : g.b1) v = rng.uniform(-a_in, a_in);
      g.w2.resize(kHidden);
      for (auto& v : g.w2) v = rng.uniform(-a_h, a_h);
      g.b2 = rng.uniform(-a_h, a_h);
    }
    return g;
  }

  double noiseless(std::span<const double> x) const {
    if (x.size() != input_dim) throw std::invalid_argument("feature dimension does not match labeler");
    if (kind == LabelKind::linear) {
      double s = 0.0;
      for (std::size_t i = 0; i < input_dim; ++i) s += w[i] * x[i];
      return s;
    }
    double out = b2;
    for (std::size_t h = 0; h < kHidden; ++h) {
      double a = b1[h];
      for (std::size_t i = 0; i < input_dim; ++i) a += w1[h * input_dim + i] * x[i];
      out += w2[h] * std::tanh(a);
    }
    return out;
  }

  /// The per-document noise draw, fixed by (seed, query id, doc id).
  double noise(std::string_view query_id, int doc_id) const {
    if (noise_sigma == 0.0) return 0.0;
    auto rng = Stream::make(seed, StreamTag::label_noise, fnv1a(query_id), static_cast<std::uint64_t>(doc_id));
    return noise_sigma * rng.normal();
  }
};

/// Unscaled generator output per document.
inline LabelTable generate_raw_labels(const Dataset& ds, const SyntheticLabeler& gen) {
  if (gen.input_dim != ds.feature_dim) {
    throw std::invalid_argument("labeler dimension " + std::to_string(gen.input_dim) +
                                " does not match dataset feature_dim " + std::to_string(ds.feature_dim));
  }
  LabelTable t{zeros_like(ds)};
  for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
    const auto& q = ds.queries[qi];
    for (std::size_t p = 0; p < q.docs.size(); ++p) {
      t.at(qi, p) = gen.noiseless(q.docs[p].features) + gen.noise(q.id, q.docs[p].doc_id);
    }
  }
  return t;
}

/// Linear-interpolation percentile of a sorted sample, p in [0,1].
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Affine map sending the 5th percentile to 0 and the 95th to 4, clipped to [0,4].
struct PercentileScaler {
  double p5 = 0.0;
  double p95 = 1.0;

  static PercentileScaler fit(const DocValues& raw) {
    std::vector<double> v;
    v.reserve(raw.size());
    raw.for_each([&](std::size_t, std::size_t, double x) { v.push_back(x); });
    if (v.size() < 2) throw std::invalid_argument("percentile scaling needs at least two values");
    std::sort(v.begin(), v.end());
    PercentileScaler s{percentile_sorted(v, 0.05), percentile_sorted(v, 0.95)};
    if (!(s.p95 > s.p5)) throw std::invalid_argument("degenerate raw labels: 5th and 95th percentiles coincide");
    return s;
  }

  double apply(double x) const { return std::clamp((x - p5) / (p95 - p5) * 4.0, 0.0, 4.0); }

  LabelTable apply(const DocValues& raw) const {
    LabelTable out{raw};
    for (auto& q : out.values) {
      for (auto& x : q) x = apply(x);
    }
    return out;
  }
};

inline LabelTable minmax_percentile_scale(const DocValues& raw) { return PercentileScaler::fit(raw).apply(raw); }

/// Raw generation followed by percentile scaling fit on the same table.
inline LabelTable generate_labels(const Dataset& ds, const SyntheticLabeler& gen) {
  return minmax_percentile_scale(generate_raw_labels(ds, gen));
}

}  // namespace towerlab
