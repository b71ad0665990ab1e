#include "ptal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include "ptal/error.hpp"

namespace ptal::losses {

void LossConfig::validate() const {
  if (!(beta >= 0.0)) throw InvalidArgument("focal beta must be non-negative");
  if (!(tau > 0.0)) throw InvalidArgument("temperature tau must be positive");
  if (!(delta > 0.0)) throw InvalidArgument("outer range delta must be positive");
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw InvalidArgument("loss weights must be non-negative");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("mining threshold gamma must lie in (0, 1)");
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
bool in_range(double p) { return p > kProbClamp && p < 1.0 - kProbClamp; }

// d/dx x^beta, with the beta = 0 and x = 0 corners defined as 0.
double pow_deriv(double x, double beta) {
  if (beta == 0.0 || (x == 0.0 && beta < 1.0)) return 0.0;
  return beta * std::pow(x, beta - 1.0);
}

// (1 - p)^beta log p and its derivative.
double focal_pos(double p, double beta) { return std::pow(1.0 - p, beta) * std::log(clamp_prob(p)); }
double focal_pos_grad(double p, double beta) {
  double g = -pow_deriv(1.0 - p, beta) * std::log(clamp_prob(p));
  if (in_range(p)) g += std::pow(1.0 - p, beta) / p;
  return g;
}

// p^beta log(1 - p) and its derivative.
double focal_neg(double p, double beta) { return std::pow(p, beta) * std::log(1.0 - clamp_prob(p)); }
double focal_neg_grad(double p, double beta) {
  double g = pow_deriv(p, beta) * std::log(1.0 - clamp_prob(p));
  if (in_range(p)) g -= std::pow(p, beta) / (1.0 - p);
  return g;
}

void check_scores(const nd::Matrix& fused, const nd::Matrix& background) {
  if (background.rows() != 1 || background.cols() != fused.cols()) {
    throw DimensionError("background scores " + background.shape_string() +
                         " do not match fused scores " + fused.shape_string());
  }
}

}  // namespace

nd::Var video_loss(nd::Var video_scores, std::span<const int> video_label) {
  const nd::Matrix p = video_scores.value();
  if (p.cols() != 1 || p.rows() != video_label.size()) {
    throw DimensionError("video loss: scores " + p.shape_string() + " vs " +
                         std::to_string(video_label.size()) + " labels");
  }
  std::vector<int> y(video_label.begin(), video_label.end());
  double loss = 0.0;
  for (std::size_t c = 0; c < y.size(); ++c) {
    const double pc = clamp_prob(p[c]);
    loss -= y[c] ? std::log(pc) : std::log(1.0 - pc);
  }
  return video_scores.tape().record(
      nd::Matrix::scalar(loss), {video_scores},
      [p, y](const nd::Matrix& g, std::span<nd::Matrix* const> grads) {
        if (!grads[0]) return;
        for (std::size_t c = 0; c < y.size(); ++c) {
          if (!in_range(p[c])) continue;
          (*grads[0])[c] += g[0] * (y[c] ? -1.0 / p[c] : 1.0 / (1.0 - p[c]));
        }
      });
}

nd::Var point_action_loss(nd::Var fused, nd::Var background,
                          std::span<const mining::PointAnnotation> action, double beta) {
  const nd::Matrix p = fused.value();
  const nd::Matrix q = background.value();
  check_scores(p, q);
  if (action.empty()) throw InvalidArgument("action point loss needs at least one point");
  std::vector<mining::PointAnnotation> pts(action.begin(), action.end());
  for (const auto& pt : pts) {
    if (pt.t < 1 || pt.t > p.cols()) {
      throw InvalidArgument("action point t=" + std::to_string(pt.t) + " outside [1, " +
                            std::to_string(p.cols()) + "]");
    }
    if (pt.label < 0 || static_cast<std::size_t>(pt.label) >= p.rows()) {
      throw InvalidArgument("action point label " + std::to_string(pt.label) + " outside " +
                            std::to_string(p.rows()) + " classes");
    }
  }
  const double m = static_cast<double>(pts.size());
  double total = 0.0;
  for (const auto& pt : pts) {
    const std::size_t t = pt.t - 1;
    for (std::size_t c = 0; c < p.rows(); ++c) {
      total += static_cast<int>(c) == pt.label ? focal_pos(p(c, t), beta) : focal_neg(p(c, t), beta);
    }
    total += focal_neg(q[t], beta);
  }
  return fused.tape().record(
      nd::Matrix::scalar(-total / m), {fused, background},
      [p, q, pts, beta, m](const nd::Matrix& g, std::span<nd::Matrix* const> grads) {
        const double scale = -g[0] / m;
        for (const auto& pt : pts) {
          const std::size_t t = pt.t - 1;
          if (grads[0]) {
            for (std::size_t c = 0; c < p.rows(); ++c) {
              const double d = static_cast<int>(c) == pt.label ? focal_pos_grad(p(c, t), beta)
                                                                : focal_neg_grad(p(c, t), beta);
              (*grads[0])(c, t) += scale * d;
            }
          }
          if (grads[1]) (*grads[1])[t] += scale * focal_neg_grad(q[t], beta);
        }
      });
}

nd::Var point_background_loss(nd::Var fused, nd::Var background,
                              std::span<const std::size_t> points, double beta) {
  const nd::Matrix p = fused.value();
  const nd::Matrix q = background.value();
  check_scores(p, q);
  if (points.empty()) return fused.tape().constant(nd::Matrix::scalar(0.0));
  std::vector<std::size_t> pts(points.begin(), points.end());
  for (std::size_t t : pts) {
    if (t < 1 || t > p.cols()) {
      throw InvalidArgument("background point t=" + std::to_string(t) + " outside [1, " +
                            std::to_string(p.cols()) + "]");
    }
  }
  const double m = static_cast<double>(pts.size());
  double total = 0.0;
  for (std::size_t t1 : pts) {
    const std::size_t t = t1 - 1;
    for (std::size_t c = 0; c < p.rows(); ++c) total += focal_neg(p(c, t), beta);
    total += focal_pos(q[t], beta);
  }
  return fused.tape().record(
      nd::Matrix::scalar(-total / m), {fused, background},
      [p, q, pts, beta, m](const nd::Matrix& g, std::span<nd::Matrix* const> grads) {
        const double scale = -g[0] / m;
        for (std::size_t t1 : pts) {
          const std::size_t t = t1 - 1;
          if (grads[0]) {
            for (std::size_t c = 0; c < p.rows(); ++c) (*grads[0])(c, t) += scale * focal_neg_grad(p(c, t), beta);
          }
          if (grads[1]) (*grads[1])[t] += scale * focal_pos_grad(q[t], beta);
        }
      });
}

nd::Var completeness_score(nd::Var fused, std::size_t class_row, const sequence::LabelSequence& seq,
                           double delta, sequence::ScoringVariant variant) {
  const nd::Matrix& p = fused.value();
  if (class_row >= p.rows()) {
    throw DimensionError("class row " + std::to_string(class_row) + " of " + p.shape_string());
  }
  const double value = sequence::completeness_score(p.row(class_row), seq, delta, variant);
  const sequence::LinearForm form = sequence::completeness_linear(p.cols(), seq, delta, variant);
  return fused.tape().record(
      nd::Matrix::scalar(value), {fused},
      [coef = form.coef, class_row](const nd::Matrix& g, std::span<nd::Matrix* const> grads) {
        if (!grads[0]) return;
        for (std::size_t t = 0; t < coef.size(); ++t) (*grads[0])(class_row, t) += g[0] * coef[t];
      });
}

nd::Var score_contrastive_loss(std::span<const nd::Var> completeness, double beta) {
  if (completeness.empty()) throw InvalidArgument("score contrastive loss needs a present class");
  std::vector<double> r;
  for (const nd::Var& v : completeness) {
    if (v.value().size() != 1) throw DimensionError("completeness score must be a scalar");
    r.push_back(v.value()[0]);
  }
  const double n = static_cast<double>(r.size());
  double total = 0.0;
  for (double x : r) total += std::pow(1.0 - x, beta);
  return completeness[0].tape().record(
      nd::Matrix::scalar(total / n), std::vector<nd::Var>(completeness.begin(), completeness.end()),
      [r, beta, n](const nd::Matrix& g, std::span<nd::Matrix* const> grads) {
        for (std::size_t i = 0; i < r.size(); ++i) {
          if (grads[i]) (*grads[i])[0] -= g[0] * pow_deriv(1.0 - r[i], beta) / n;
        }
      });
}

std::array<std::size_t, 3> soi_sample(const sequence::InstanceSpan& span, std::uint64_t seed) {
  if (span.end < span.start || span.start < 1) throw InvalidArgument("invalid span for pooling");
  std::mt19937_64 rng(seed);
  const std::size_t len = span.length();
  std::array<std::size_t, 3> picks{};
  if (len < 3) {
    std::uniform_int_distribution<std::size_t> any(span.start, span.end);
    for (auto& p : picks) p = any(rng);
    return picks;
  }
  const std::size_t base = len / 3;
  const std::size_t extra = len % 3;
  std::size_t begin = span.start;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t size = base + (i < extra ? 1 : 0);
    std::uniform_int_distribution<std::size_t> within(begin, begin + size - 1);
    picks[i] = within(rng);
    begin += size;
  }
  return picks;
}

InstanceFeature soi_pool(nd::Var embedded, const sequence::InstanceSpan& span,
                         std::span<const std::size_t, 3> picks, int class_id) {
  const nd::Matrix& f = embedded.value();
  if (span.end > f.cols()) {
    throw DimensionError("span end " + std::to_string(span.end) + " beyond " + f.shape_string());
  }
  std::array<std::size_t, 3> cols{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (picks[i] < span.start || picks[i] > span.end) {
      throw InvalidArgument("pooling sample outside its span");
    }
    cols[i] = picks[i] - 1;
  }
  const std::size_t d = f.rows();
  nd::Matrix mean(d, 1);
  for (std::size_t r = 0; r < d; ++r) {
    mean[r] = (f(r, cols[0]) + f(r, cols[1]) + f(r, cols[2])) / 3.0;
  }
  double norm = 0.0;
  for (double v : mean.values()) norm += v * v;
  norm = std::sqrt(norm);
  const double denom = std::max(norm, 1e-12);
  nd::Matrix unit = mean;
  for (double& v : unit.values()) v /= denom;
  const bool scaled = norm > 1e-12;
  nd::Var out = embedded.tape().record(
      unit, {embedded},
      [unit, cols, denom, scaled](const nd::Matrix& g, std::span<nd::Matrix* const> grads) {
        if (!grads[0]) return;
        double dot = 0.0;
        if (scaled) {
          for (std::size_t r = 0; r < g.size(); ++r) dot += unit[r] * g[r];
        }
        for (std::size_t r = 0; r < g.size(); ++r) {
          const double dmean = (g[r] - unit[r] * dot) / denom;
          for (std::size_t c : cols) (*grads[0])(r, c) += dmean / 3.0;
        }
      });
  return InstanceFeature{out, true, span.action, class_id};
}

InstanceFeature soi_pool(nd::Var embedded, const sequence::InstanceSpan& span, std::uint64_t seed,
                         int class_id) {
  const auto picks = soi_sample(span, seed);
  return soi_pool(embedded, span, std::span<const std::size_t, 3>(picks), class_id);
}

namespace {

double log_sum_exp(const std::vector<double>& xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

nd::Var feature_contrastive_loss(nd::Tape& tape, std::span<const InstanceFeature> features,
                                 double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature tau must be positive");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const InstanceFeature& f = features[i];
    if (!f.normalized) throw InvalidArgument("feature contrastive loss needs normalized features");
    double norm2 = 0.0;
    for (double v : f.feature.value().values()) norm2 += v * v;
    if (norm2 != 0.0 && std::abs(std::sqrt(norm2) - 1.0) > 1e-9) {
      throw InvalidArgument("feature flagged normalized has norm " + std::to_string(std::sqrt(norm2)));
    }
    by_class[f.class_id].push_back(i);
  }

  std::vector<std::vector<std::size_t>> groups;
  for (auto& [cls, idx] : by_class) {
    std::size_t actions = 0;
    for (std::size_t i : idx) actions += features[i].action ? 1 : 0;
    if (actions > 1) groups.push_back(idx);
  }
  if (groups.empty()) return tape.constant(nd::Matrix::scalar(0.0));

  std::vector<nd::Var> parents;
  std::vector<nd::Matrix> vals;
  std::vector<bool> is_action;
  for (const InstanceFeature& f : features) {
    parents.push_back(f.feature);
    vals.push_back(f.feature.value());
    is_action.push_back(f.action);
  }
  if (!vals.empty()) {
    for (const auto& v : vals) {
      if (!v.same_shape(vals.front()) || v.cols() != 1) {
        throw DimensionError("instance features must share one D x 1 shape");
      }
    }
  }
  auto dot = [&vals](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t r = 0; r < vals[a].size(); ++r) s += vals[a][r] * vals[b][r];
    return s;
  };

  // coeff[a][b]: d loss / d sim(a, b) for anchor a.
  const double class_w = 1.0 / static_cast<double>(groups.size());
  double total = 0.0;
  std::vector<std::tuple<std::size_t, std::size_t, double>> sim_grads;
  for (const auto& idx : groups) {
    std::size_t anchors = 0;
    for (std::size_t i : idx) anchors += is_action[i] ? 1 : 0;
    const double anchor_w = class_w / static_cast<double>(anchors);
    for (std::size_t n : idx) {
      if (!is_action[n]) continue;
      std::vector<double> all_logits, pos_logits;
      std::vector<std::size_t> others;
      for (std::size_t m : idx) {
        if (m == n) continue;
        const double s = dot(n, m) / tau;
        others.push_back(m);
        all_logits.push_back(s);
        if (is_action[m]) pos_logits.push_back(s);
      }
      const double lse_all = log_sum_exp(all_logits);
      const double lse_pos = log_sum_exp(pos_logits);
      total += anchor_w * (lse_all - lse_pos);
      for (std::size_t k = 0; k < others.size(); ++k) {
        double d = std::exp(all_logits[k] - lse_all);
        if (is_action[others[k]]) d -= std::exp(all_logits[k] - lse_pos);
        sim_grads.emplace_back(n, others[k], anchor_w * d / tau);
      }
    }
  }

  return tape.record(nd::Matrix::scalar(total), parents,
                     [vals, sim_grads](const nd::Matrix& g, std::span<nd::Matrix* const> grads) {
                       for (const auto& [a, b, w] : sim_grads) {
                         const double scale = g[0] * w;
                         if (grads[a]) {
                           for (std::size_t r = 0; r < vals[b].size(); ++r) (*grads[a])[r] += scale * vals[b][r];
                         }
                         if (grads[b]) {
                           for (std::size_t r = 0; r < vals[a].size(); ++r) (*grads[b])[r] += scale * vals[a][r];
                         }
                       }
                     });
}

nd::Var total_loss(const LossComponents& parts, const std::array<double, 4>& lambdas) {
  const std::array<nd::Var, 4> terms{parts.video, parts.point, parts.score, parts.feature};
  return nd::weighted_sum(terms, lambdas);
}

}  // namespace ptal::losses
