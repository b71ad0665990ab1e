#pragma once

// Class-specific label sequences: completeness scoring, budgeted greedy
// search, an exhaustive reference search, and frame accuracy.
//
// A sequence tiles [1, T] with alternating action (z = 1) and background
// (z = 0) spans. Each span is scored by the mean of u over its inner segments
// minus the mean of u over an outer window of ceil(delta * l) segments on the
// left and floor(delta * l) on the right, clipped to the video, where
// u = p for action spans and u = 1 - p for background spans. An outer window
// that is clipped away entirely scores 0.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace ptal::sequence {

struct InstanceSpan {
  std::size_t start = 1;  // 1-based, inclusive
  std::size_t end = 1;    // 1-based, inclusive
  bool action = false;

  std::size_t length() const { return end - start + 1; }
  bool operator==(const InstanceSpan&) const = default;
};

struct LabelSequence {
  int class_id = 0;
  std::vector<InstanceSpan> spans;

  std::size_t length() const { return spans.empty() ? 0 : spans.back().end; }
  std::size_t action_count() const;
  // Per-segment z, index t - 1.
  std::vector<int> frame_labels() const;
  bool operator==(const LabelSequence&) const = default;
};

struct ScoredSequence {
  LabelSequence sequence;
  double score = 0.0;
};

// contrast_both: inner - outer over every span.
// contrast_action: inner - outer over action spans only.
// inner_only: inner mean of u over every span.
enum class ScoringVariant { contrast_both, contrast_action, inner_only };

// relaxed: the span type before the first point and after the last point may
// switch once. strict: the first span takes the type of the earliest point
// and the last span keeps the type of the latest point.
enum class BoundaryMode { relaxed, strict };

inline constexpr double kDefaultDelta = 0.25;
inline constexpr std::size_t kDefaultBudget = 25;
inline constexpr std::size_t kDefaultExhaustiveCap = 16;

struct SpanScore {
  double inner = 0.0;
  double outer = 0.0;
  std::size_t outer_count = 0;

  double contrast() const { return inner - outer; }
};

// Clipped outer window of [start, end] in a video of `length` segments:
// [left_begin, start - 1] and [end + 1, right_end]; either side may be empty.
struct OuterWindow {
  std::size_t left_begin = 1;
  std::size_t left_count = 0;
  std::size_t right_end = 0;
  std::size_t right_count = 0;
};
OuterWindow outer_window(std::size_t length, std::size_t start, std::size_t end, double delta);

SpanScore span_score(std::span<const double> row, std::size_t start, std::size_t end, bool action,
                     double delta);
// Outer-inner contrast of a single action span.
double outer_inner_contrast(std::span<const double> row, std::size_t start, std::size_t end,
                            double delta);

// Throws InvalidArgument unless the spans tile [1, length] and alternate.
void validate_sequence(const LabelSequence& seq, std::size_t length);

double completeness_score(std::span<const double> row, const LabelSequence& seq, double delta,
                          ScoringVariant variant = ScoringVariant::contrast_both);

// The score is affine in the row: score = dot(coef, row) + bias.
struct LinearForm {
  std::vector<double> coef;
  double bias = 0.0;
};
LinearForm completeness_linear(std::size_t length, const LabelSequence& seq, double delta,
                               ScoringVariant variant = ScoringVariant::contrast_both);

struct SearchOptions {
  std::size_t budget = kDefaultBudget;
  double delta = kDefaultDelta;
  ScoringVariant variant = ScoringVariant::contrast_both;
  BoundaryMode boundary = BoundaryMode::relaxed;
  std::size_t exhaustive_cap = kDefaultExhaustiveCap;
};

// Candidates are tilings that put every action point in an action span and
// every background point in a background span, with exactly one boundary
// between consecutive points of different type, none between consecutive
// points of the same type, and at most one (relaxed) or none (strict) before
// the first point and after the last.
bool is_point_consistent(const LabelSequence& seq, std::span<const std::size_t> action_points,
                         std::span<const std::size_t> background_points, BoundaryMode boundary);
std::size_t count_candidates(std::size_t length, std::span<const std::size_t> action_points,
                             std::span<const std::size_t> background_points,
                             BoundaryMode boundary);

// Beam search over the candidates, one segment per step, keeping the
// `budget` best partial sequences ranked by the mean term of their completed
// spans. The result is rescored in full with completeness_score.
ScoredSequence greedy_search(std::span<const double> row,
                             std::span<const std::size_t> action_points,
                             std::span<const std::size_t> background_points,
                             const SearchOptions& options, int class_id = 0);

// Enumerates all 2^T typed boundary placements and keeps the best
// point-consistent one. Ties prefer fewer spans, then the lexicographically
// smaller boundary list.
ScoredSequence exhaustive_search(std::span<const double> row,
                                 std::span<const std::size_t> action_points,
                                 std::span<const std::size_t> background_points,
                                 const SearchOptions& options, int class_id = 0);

double sequence_accuracy(const LabelSequence& seq, std::span<const int> truth);

}  // namespace ptal::sequence
