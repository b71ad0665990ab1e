#pragma once

// Training objectives, each recorded on the tape with an analytic backward.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ptal/mining.hpp"
#include "ptal/ndiff.hpp"
#include "ptal/sequence.hpp"

namespace ptal::losses {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside logs.
inline constexpr double kProbClamp = 1e-7;

struct LossConfig {
  double beta = 2.0;
  double tau = 0.1;
  double delta = sequence::kDefaultDelta;
  std::array<double, 4> lambdas{1.0, 1.0, 1.0, 1.0};  // video, point, score, feature
  double gamma = 0.95;

  void validate() const;
  bool completeness_enabled() const { return lambdas[2] != 0.0 || lambdas[3] != 0.0; }
};

// Summed binary cross-entropy between C x 1 video scores and a 0/1 label.
nd::Var video_loss(nd::Var video_scores, std::span<const int> video_label);

// Focal BCE at labeled action points plus background suppression q^beta log(1-q).
nd::Var point_action_loss(nd::Var fused, nd::Var background,
                          std::span<const mining::PointAnnotation> action, double beta);

// Focal BCE at background points; 0 for an empty set.
nd::Var point_background_loss(nd::Var fused, nd::Var background,
                              std::span<const std::size_t> points, double beta);

// Completeness score of a fixed sequence on row `class_row` of the fused
// scores. The sequence is a constant; gradients flow into the scores only.
nd::Var completeness_score(nd::Var fused, std::size_t class_row,
                           const sequence::LabelSequence& seq, double delta,
                           sequence::ScoringVariant variant = sequence::ScoringVariant::contrast_both);

// Mean over present classes of (1 - R)^beta.
nd::Var score_contrastive_loss(std::span<const nd::Var> completeness, double beta);

struct InstanceFeature {
  nd::Var feature;  // D x 1
  bool normalized = false;
  bool action = false;
  int class_id = 0;
};

// One segment drawn from each of three near-equal thirds of the span; spans
// shorter than three segments draw all three with replacement.
std::array<std::size_t, 3> soi_sample(const sequence::InstanceSpan& span, std::uint64_t seed);

// Mean of the sampled embedded columns, L2-normalized (a zero mean stays zero).
InstanceFeature soi_pool(nd::Var embedded, const sequence::InstanceSpan& span,
                         std::span<const std::size_t, 3> picks, int class_id);
InstanceFeature soi_pool(nd::Var embedded, const sequence::InstanceSpan& span, std::uint64_t seed,
                         int class_id);

// Per class with at least two action instances, every action anchor is
// pulled toward the other action instances against all other instances with
// temperature tau. Averaged over anchors, then over qualifying classes;
// 0 when no class qualifies.
nd::Var feature_contrastive_loss(nd::Tape& tape, std::span<const InstanceFeature> features,
                                 double tau);

struct LossComponents {
  nd::Var video;
  nd::Var point;
  nd::Var score;
  nd::Var feature;
};

nd::Var total_loss(const LossComponents& parts, const std::array<double, 4>& lambdas);

}  // namespace ptal::losses
