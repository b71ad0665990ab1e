#include "ptal/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "ptal/error.hpp"

namespace ptal::sequence {

std::size_t LabelSequence::action_count() const {
  return static_cast<std::size_t>(
      std::count_if(spans.begin(), spans.end(), [](const InstanceSpan& s) { return s.action; }));
}

std::vector<int> LabelSequence::frame_labels() const {
  std::vector<int> z(length(), 0);
  for (const auto& s : spans) {
    for (std::size_t t = s.start; t <= s.end; ++t) z[t - 1] = s.action ? 1 : 0;
  }
  return z;
}

OuterWindow outer_window(std::size_t length, std::size_t start, std::size_t end, double delta) {
  const double reach = delta * static_cast<double>(end - start + 1);
  // The tolerance keeps products such as 0.1 * 30 from landing one past an
  // integer.
  const auto left = static_cast<std::size_t>(std::ceil(reach - 1e-9));
  const auto right = static_cast<std::size_t>(std::floor(reach + 1e-9));
  OuterWindow w;
  w.left_count = std::min(left, start - 1);
  w.left_begin = start - w.left_count;
  w.right_count = std::min(right, length - end);
  w.right_end = end + w.right_count;
  return w;
}

SpanScore span_score(std::span<const double> row, std::size_t start, std::size_t end, bool action,
                     double delta) {
  if (start < 1 || end < start || end > row.size()) {
    throw InvalidArgument("span [" + std::to_string(start) + ", " + std::to_string(end) +
                          "] outside a row of " + std::to_string(row.size()) + " segments");
  }
  auto u = [&](std::size_t t) { return action ? row[t - 1] : 1.0 - row[t - 1]; };
  SpanScore s;
  double inner = 0.0;
  for (std::size_t t = start; t <= end; ++t) inner += u(t);
  s.inner = inner / static_cast<double>(end - start + 1);

  const OuterWindow w = outer_window(row.size(), start, end, delta);
  double outer = 0.0;
  for (std::size_t t = w.left_begin; t < start; ++t) outer += u(t);
  for (std::size_t t = end + 1; t <= w.right_end; ++t) outer += u(t);
  s.outer_count = w.left_count + w.right_count;
  s.outer = s.outer_count == 0 ? 0.0 : outer / static_cast<double>(s.outer_count);
  return s;
}

double outer_inner_contrast(std::span<const double> row, std::size_t start, std::size_t end,
                            double delta) {
  return span_score(row, start, end, true, delta).contrast();
}

void validate_sequence(const LabelSequence& seq, std::size_t length) {
  if (seq.spans.empty()) throw InvalidArgument("sequence has no spans");
  std::size_t expected = 1;
  for (std::size_t n = 0; n < seq.spans.size(); ++n) {
    const auto& s = seq.spans[n];
    if (s.start != expected || s.end < s.start) {
      throw InvalidArgument("sequence spans do not tile the video at span " + std::to_string(n));
    }
    if (n > 0 && s.action == seq.spans[n - 1].action) {
      throw InvalidArgument("sequence spans do not alternate at span " + std::to_string(n));
    }
    expected = s.end + 1;
  }
  if (expected != length + 1) {
    throw InvalidArgument("sequence covers " + std::to_string(expected - 1) + " of " +
                          std::to_string(length) + " segments");
  }
}

namespace {

// Term a span contributes under `variant`, or nothing if it is not counted.
bool span_term(std::span<const double> row, const InstanceSpan& s, double delta,
               ScoringVariant variant, double& term) {
  if (variant == ScoringVariant::contrast_action && !s.action) return false;
  const SpanScore sc = span_score(row, s.start, s.end, s.action, delta);
  term = variant == ScoringVariant::inner_only ? sc.inner : sc.contrast();
  return true;
}

void check_delta(double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("outer range delta must be positive");
}

}  // namespace

double completeness_score(std::span<const double> row, const LabelSequence& seq, double delta,
                          ScoringVariant variant) {
  check_delta(delta);
  validate_sequence(seq, row.size());
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& s : seq.spans) {
    double term = 0.0;
    if (span_term(row, s, delta, variant, term)) {
      total += term;
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

LinearForm completeness_linear(std::size_t length, const LabelSequence& seq, double delta,
                               ScoringVariant variant) {
  check_delta(delta);
  validate_sequence(seq, length);
  LinearForm form{std::vector<double>(length, 0.0), 0.0};
  std::size_t counted = 0;
  for (const auto& s : seq.spans) {
    if (variant != ScoringVariant::contrast_action || s.action) ++counted;
  }
  if (counted == 0) return form;
  const double w = 1.0 / static_cast<double>(counted);
  for (const auto& s : seq.spans) {
    if (variant == ScoringVariant::contrast_action && !s.action) continue;
    // u = sign * p + offset
    const double sign = s.action ? 1.0 : -1.0;
    const double offset = s.action ? 0.0 : 1.0;
    const double inner_w = w / static_cast<double>(s.length());
    for (std::size_t t = s.start; t <= s.end; ++t) form.coef[t - 1] += sign * inner_w;
    form.bias += w * offset;
    if (variant == ScoringVariant::inner_only) continue;
    const OuterWindow ow = outer_window(length, s.start, s.end, delta);
    const std::size_t n_out = ow.left_count + ow.right_count;
    if (n_out == 0) continue;
    const double outer_w = w / static_cast<double>(n_out);
    for (std::size_t t = ow.left_begin; t < s.start; ++t) form.coef[t - 1] -= sign * outer_w;
    for (std::size_t t = s.end + 1; t <= ow.right_end; ++t) form.coef[t - 1] -= sign * outer_w;
    form.bias -= w * offset;
  }
  return form;
}

// --- Point structure --------------------------------------------------------

namespace {

struct TypedPoint {
  std::size_t t;
  int type;  // 1 action, 0 background
};

std::vector<TypedPoint> merge_points(std::size_t length, std::span<const std::size_t> action,
                                     std::span<const std::size_t> background) {
  std::vector<TypedPoint> pts;
  for (std::size_t t : action) pts.push_back({t, 1});
  for (std::size_t t : background) pts.push_back({t, 0});
  std::sort(pts.begin(), pts.end(), [](const TypedPoint& a, const TypedPoint& b) { return a.t < b.t; });
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].t < 1 || pts[i].t > length) {
      throw InvalidArgument("point at t=" + std::to_string(pts[i].t) + " outside [1, " +
                            std::to_string(length) + "]");
    }
    if (i > 0 && pts[i].t == pts[i - 1].t) {
      throw InvalidArgument("duplicate or overlapping point at t=" + std::to_string(pts[i].t));
    }
  }
  return pts;
}

std::vector<std::size_t> boundaries_of(const LabelSequence& seq) {
  std::vector<std::size_t> b;
  for (std::size_t n = 1; n < seq.spans.size(); ++n) b.push_back(seq.spans[n].start);
  return b;
}

// Final ranking: higher score, then fewer spans, then lexicographically
// smaller boundary list, then background-first.
bool final_better(double sa, const LabelSequence& a, double sb, const LabelSequence& b) {
  if (sa != sb) return sa > sb;
  if (a.spans.size() != b.spans.size()) return a.spans.size() < b.spans.size();
  const auto ba = boundaries_of(a);
  const auto bb = boundaries_of(b);
  if (ba != bb) return ba < bb;
  return !a.spans.front().action && b.spans.front().action;
}

}  // namespace

bool is_point_consistent(const LabelSequence& seq, std::span<const std::size_t> action_points,
                         std::span<const std::size_t> background_points, BoundaryMode boundary) {
  const std::size_t length = seq.length();
  validate_sequence(seq, length);
  const auto pts = merge_points(length, action_points, background_points);
  const std::vector<int> z = seq.frame_labels();
  for (const auto& p : pts) {
    if (z[p.t - 1] != p.type) return false;
  }
  if (pts.empty()) return true;
  // is_boundary[t] means a new span starts at t + 1.
  std::vector<int> is_boundary(length + 1, 0);
  for (std::size_t b : boundaries_of(seq)) is_boundary[b - 1] = 1;
  auto boundaries_between = [&](std::size_t from, std::size_t to) {
    int n = 0;
    for (std::size_t t = from; t < to; ++t) n += is_boundary[t];
    return n;
  };
  const int edge_allowance = boundary == BoundaryMode::relaxed ? 1 : 0;
  if (boundaries_between(1, pts.front().t) > edge_allowance) return false;
  if (boundaries_between(pts.back().t, length) > edge_allowance) return false;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const int expected = pts[i].type == pts[i + 1].type ? 0 : 1;
    if (boundaries_between(pts[i].t, pts[i + 1].t) != expected) return false;
  }
  return true;
}

std::size_t count_candidates(std::size_t length, std::span<const std::size_t> action_points,
                             std::span<const std::size_t> background_points,
                             BoundaryMode boundary) {
  const auto pts = merge_points(length, action_points, background_points);
  if (pts.empty()) throw InvalidArgument("candidate count needs at least one point");
  std::size_t count = 1;
  if (boundary == BoundaryMode::relaxed) {
    count *= pts.front().t;
    count *= length - pts.back().t + 1;
  }
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (pts[i].type != pts[i + 1].type) count *= pts[i + 1].t - pts[i].t;
  }
  return count;
}

// --- Greedy search ----------------------------------------------------------

namespace {

struct Candidate {
  std::vector<InstanceSpan> spans;  // last span is still open
  double term_sum = 0.0;
  std::size_t counted = 0;

  double score() const {
    return counted == 0 ? std::numeric_limits<double>::infinity()
                        : term_sum / static_cast<double>(counted);
  }
};

// Beam order: higher running score, fewer spans, earlier last boundary, then
// the full boundary list and background-first for a total order.
bool beam_better(const Candidate& a, const Candidate& b) {
  const double sa = a.score();
  const double sb = b.score();
  if (sa != sb) return sa > sb;
  if (a.spans.size() != b.spans.size()) return a.spans.size() < b.spans.size();
  if (a.spans.back().start != b.spans.back().start) return a.spans.back().start < b.spans.back().start;
  for (std::size_t n = 1; n < a.spans.size(); ++n) {
    if (a.spans[n].start != b.spans[n].start) return a.spans[n].start < b.spans[n].start;
  }
  return !a.spans.front().action && b.spans.front().action;
}

}  // namespace

ScoredSequence greedy_search(std::span<const double> row,
                             std::span<const std::size_t> action_points,
                             std::span<const std::size_t> background_points,
                             const SearchOptions& options, int class_id) {
  if (options.budget == 0) throw InvalidArgument("search budget alpha must be at least 1");
  check_delta(options.delta);
  const std::size_t length = row.size();
  if (length == 0) throw InvalidArgument("search over an empty score row");
  const auto pts = merge_points(length, action_points, background_points);
  if (pts.empty()) throw InvalidArgument("sequence search needs at least one point");

  // point_type[t]: -1 if no point at t. upcoming[t]: type of the first point
  // at or after t; past the last point it is the last type (strict) or its
  // opposite (relaxed), which allows exactly one trailing switch.
  std::vector<int> point_type(length + 1, -1);
  for (const auto& p : pts) point_type[p.t] = p.type;
  std::vector<int> upcoming(length + 2, 0);
  {
    const int last = pts.back().type;
    int next = options.boundary == BoundaryMode::relaxed ? 1 - last : last;
    for (std::size_t t = length; t >= 1; --t) {
      if (point_type[t] >= 0) next = point_type[t];
      upcoming[t] = next;
    }
  }

  std::vector<Candidate> beam;
  if (point_type[1] >= 0 || options.boundary == BoundaryMode::strict) {
    const bool first = pts.front().type == 1;
    beam.push_back({{InstanceSpan{1, 1, first}}, 0.0, 0});
  } else {
    beam.push_back({{InstanceSpan{1, 1, false}}, 0.0, 0});
    beam.push_back({{InstanceSpan{1, 1, true}}, 0.0, 0});
  }

  std::vector<Candidate> next;
  for (std::size_t t = 2; t <= length; ++t) {
    const bool want_action = upcoming[t] == 1;
    const bool at_point = point_type[t] >= 0;
    next.clear();
    for (Candidate& cand : beam) {
      const InstanceSpan last = cand.spans.back();
      const bool matches = last.action == want_action;
      if (!matches) {
        Candidate term = cand;
        double value = 0.0;
        if (span_term(row, last, options.delta, options.variant, value)) {
          term.term_sum += value;
          ++term.counted;
        }
        term.spans.push_back(InstanceSpan{t, t, want_action});
        next.push_back(std::move(term));
      }
      if (matches || !at_point) {
        cand.spans.back().end = t;
        next.push_back(std::move(cand));
      }
    }
    if (next.size() > options.budget) {
      std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(options.budget),
                        next.end(), beam_better);
      next.resize(options.budget);
    }
    std::swap(beam, next);
  }

  ScoredSequence best;
  bool found = false;
  for (const Candidate& cand : beam) {
    LabelSequence seq{class_id, cand.spans};
    const double score = completeness_score(row, seq, options.delta, options.variant);
    if (!found || final_better(score, seq, best.score, best.sequence)) {
      best = ScoredSequence{std::move(seq), score};
      found = true;
    }
  }
  if (!found) throw Error("sequence search produced no candidate");
  return best;
}

// --- Exhaustive reference ---------------------------------------------------

ScoredSequence exhaustive_search(std::span<const double> row,
                                 std::span<const std::size_t> action_points,
                                 std::span<const std::size_t> background_points,
                                 const SearchOptions& options, int class_id) {
  check_delta(options.delta);
  const std::size_t length = row.size();
  if (length == 0) throw InvalidArgument("search over an empty score row");
  if (length > options.exhaustive_cap || length > 30) {
    throw InvalidArgument("exhaustive search is capped at T=" +
                          std::to_string(std::min<std::size_t>(options.exhaustive_cap, 30)) +
                          ", got T=" + std::to_string(length));
  }
  if (action_points.empty() && background_points.empty()) {
    throw InvalidArgument("sequence search needs at least one point");
  }
  ScoredSequence best;
  bool found = false;
  const std::uint64_t placements = std::uint64_t{1} << (length - 1);
  for (int first = 0; first <= 1; ++first) {
    for (std::uint64_t mask = 0; mask < placements; ++mask) {
      LabelSequence seq{class_id, {}};
      bool action = first == 1;
      std::size_t start = 1;
      for (std::size_t t = 1; t <= length; ++t) {
        const bool cut = t == length || ((mask >> (t - 1)) & 1U);
        if (cut) {
          seq.spans.push_back(InstanceSpan{start, t, action});
          action = !action;
          start = t + 1;
        }
      }
      if (!is_point_consistent(seq, action_points, background_points, options.boundary)) continue;
      const double score = completeness_score(row, seq, options.delta, options.variant);
      if (!found || final_better(score, seq, best.score, best.sequence)) {
        best = ScoredSequence{std::move(seq), score};
        found = true;
      }
    }
  }
  if (!found) throw InvalidArgument("no sequence is consistent with the points");
  return best;
}

double sequence_accuracy(const LabelSequence& seq, std::span<const int> truth) {
  const std::vector<int> z = seq.frame_labels();
  if (z.size() != truth.size() || z.empty()) {
    throw DimensionError("sequence covers " + std::to_string(z.size()) +
                         " segments but the reference has " + std::to_string(truth.size()));
  }
  std::size_t hits = 0;
  for (std::size_t t = 0; t < z.size(); ++t) hits += (z[t] == (truth[t] != 0 ? 1 : 0)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(z.size());
}

}  // namespace ptal::sequence
