#pragma once

// Reference implementations written directly from the formulas, sharing no
// code with the library, plus small seeded generators for property tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ptal/ndiff.hpp"
#include "ptal/sequence.hpp"

namespace oracle {

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }
  std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
  bool coin() { return index(0, 1) == 1; }

  ptal::nd::Matrix matrix(std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    ptal::nd::Matrix m(r, c);
    for (double& v : m.values()) v = uniform(lo, hi);
    return m;
  }
  std::vector<double> probs(std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(0.01, 0.99);
    return v;
  }
  // k distinct sorted values from [1, n].
  std::vector<std::size_t> distinct(std::size_t k, std::size_t n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i + 1;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  }
};

// y[o][t] = b[o] + sum_i sum_j w[o][i][j] * x[i][t + j - pad], zero outside.
inline ptal::nd::Matrix direct_conv(const ptal::nd::Matrix& x, const ptal::nd::ConvParams& p) {
  const std::size_t out = p.weight.rows(), in = x.rows(), T = x.cols(), k = p.kernel;
  const long pad = static_cast<long>((k - 1) / 2);
  ptal::nd::Matrix y(out, T);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t t = 0; t < T; ++t) {
      double acc = p.bias(o, 0);
      for (std::size_t i = 0; i < in; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(t) + static_cast<long>(j) - pad;
          if (src < 0 || src >= static_cast<long>(T)) continue;
          acc += p.weight(o, i * k + j) * x(i, static_cast<std::size_t>(src));
        }
      }
      y(o, t) = acc;
    }
  }
  return y;
}

struct Span {
  std::size_t s, e;
  int z;
};

// Literal transcription of the completeness score: mean over spans of
// (mean of u inside) - (mean of u over the clipped outer window), where the
// window is ceil(d*l) segments before s and floor(d*l) after e.
inline double completeness(const std::vector<double>& p, const std::vector<Span>& spans, double d) {
  const long T = static_cast<long>(p.size());
  double total = 0.0;
  for (const Span& sp : spans) {
    auto u = [&](long t) { return sp.z == 1 ? p[t - 1] : 1.0 - p[t - 1]; };
    const long s = static_cast<long>(sp.s), e = static_cast<long>(sp.e), l = e - s + 1;
    double in = 0.0;
    for (long t = s; t <= e; ++t) in += u(t);
    in /= static_cast<double>(l);
    const long left = static_cast<long>(std::ceil(d * static_cast<double>(l)));
    const long right = static_cast<long>(std::floor(d * static_cast<double>(l)));
    double out = 0.0;
    long n = 0;
    for (long t = s - left; t <= s - 1; ++t) {
      if (t >= 1) out += u(t), ++n;
    }
    for (long t = e + 1; t <= e + right; ++t) {
      if (t <= T) out += u(t), ++n;
    }
    total += in - (n > 0 ? out / static_cast<double>(n) : 0.0);
  }
  return total / static_cast<double>(spans.size());
}

inline std::vector<Span> spans_of(const std::vector<int>& z) {
  std::vector<Span> out;
  std::size_t s = 1;
  for (std::size_t t = 1; t <= z.size(); ++t) {
    if (t == z.size() || z[t] != z[t - 1]) {
      out.push_back({s, t, z[t - 1]});
      s = t + 1;
    }
  }
  return out;
}

inline std::vector<Span> spans_of(const ptal::sequence::LabelSequence& seq) {
  std::vector<Span> out;
  for (const auto& s : seq.spans) out.push_back({s.start, s.end, s.action ? 1 : 0});
  return out;
}

// Brute force over all 2^T per-segment labelings: keeps labelings that put
// points in spans of their type, with exactly one type change between
// consecutive points of different type, none between points of the same
// type, and at most `edge` changes before the first / after the last point.
inline double best_consistent(const std::vector<double>& p, const std::vector<std::size_t>& act,
                              const std::vector<std::size_t>& bkg, double d, int edge, std::size_t* count = nullptr) {
  const std::size_t T = p.size();
  std::vector<std::pair<std::size_t, int>> pts;
  for (auto t : act) pts.push_back({t, 1});
  for (auto t : bkg) pts.push_back({t, 0});
  std::sort(pts.begin(), pts.end());
  double best = -1e300;
  std::size_t n = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << T); ++mask) {
    std::vector<int> z(T);
    for (std::size_t t = 0; t < T; ++t) z[t] = (mask >> t) & 1U;
    bool ok = true;
    for (auto [t, ty] : pts) ok = ok && z[t - 1] == ty;
    auto changes = [&](std::size_t a, std::size_t b) {  // changes between segments a..b
      int c = 0;
      for (std::size_t t = a; t < b; ++t) c += z[t - 1] != z[t];
      return c;
    };
    if (ok) ok = changes(1, pts.front().first) <= edge && changes(pts.back().first, T) <= edge;
    for (std::size_t i = 0; ok && i + 1 < pts.size(); ++i) {
      ok = changes(pts[i].first, pts[i + 1].first) == (pts[i].second == pts[i + 1].second ? 0 : 1);
    }
    if (!ok) continue;
    ++n;
    best = std::max(best, completeness(p, spans_of(z), d));
  }
  if (count) *count = n;
  return best;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace oracle
