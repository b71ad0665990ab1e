#pragma once

// Point annotations and pseudo-background point selection from the
// class-agnostic background scores Q.

#include <cstddef>
#include <span>
#include <vector>

namespace ptal::mining {

inline constexpr int kBackground = -1;

// Segment indices are 1-based throughout the public types.
struct PointAnnotation {
  std::size_t t = 1;
  int label = kBackground;

  bool operator==(const PointAnnotation&) const = default;
};

struct PointSet {
  std::vector<PointAnnotation> action;      // strictly increasing t
  std::vector<PointAnnotation> background;  // strictly increasing t

  // Throws InvalidArgument when an invariant is broken for a video of
  // length `length`.
  void validate(std::size_t length) const;
  std::vector<std::size_t> action_times() const;
  std::vector<std::size_t> background_times() const;
  // Class indices present in the video, ascending.
  std::vector<int> present_classes() const;

  bool operator==(const PointSet&) const = default;
};

// y_vid[c] = 1 iff some action point carries class c.
std::vector<int> video_label(std::span<const PointAnnotation> action, std::size_t num_classes);

enum class MiningMode { sectional_fill, sectional, global };

inline constexpr std::size_t kDefaultEta = 5;

// Q is indexed by segment (q[t - 1] is segment t). Returns sorted 1-based
// segment indices disjoint from `action_times`.
std::vector<std::size_t> mine_pseudo_background(std::span<const double> q,
                                                std::span<const std::size_t> action_times,
                                                double gamma, MiningMode mode,
                                                std::size_t eta = kDefaultEta);

}  // namespace ptal::mining
