#include "ptal/mining.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "ptal/error.hpp"

namespace ptal::mining {

namespace {

void check_increasing(std::span<const PointAnnotation> pts, std::size_t length, const char* what) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].t < 1 || pts[i].t > length) {
      throw InvalidArgument(std::string(what) + " point at t=" + std::to_string(pts[i].t) +
                            " outside [1, " + std::to_string(length) + "]");
    }
    if (i > 0 && pts[i].t <= pts[i - 1].t) {
      throw InvalidArgument(std::string(what) + " points not strictly increasing at t=" +
                            std::to_string(pts[i].t));
    }
  }
}

}  // namespace

void PointSet::validate(std::size_t length) const {
  check_increasing(action, length, "action");
  check_increasing(background, length, "background");
  for (const auto& a : action) {
    if (a.label < 0) throw InvalidArgument("action point without a class at t=" + std::to_string(a.t));
  }
  std::set<std::size_t> act;
  for (const auto& a : action) act.insert(a.t);
  for (const auto& b : background) {
    if (act.count(b.t)) {
      throw InvalidArgument("segment " + std::to_string(b.t) + " is both action and background");
    }
  }
}

std::vector<std::size_t> PointSet::action_times() const {
  std::vector<std::size_t> out;
  for (const auto& a : action) out.push_back(a.t);
  return out;
}

std::vector<std::size_t> PointSet::background_times() const {
  std::vector<std::size_t> out;
  for (const auto& b : background) out.push_back(b.t);
  return out;
}

std::vector<int> PointSet::present_classes() const {
  std::set<int> s;
  for (const auto& a : action) s.insert(a.label);
  return {s.begin(), s.end()};
}

std::vector<int> video_label(std::span<const PointAnnotation> action, std::size_t num_classes) {
  std::vector<int> y(num_classes, 0);
  for (const auto& a : action) {
    if (a.label < 0 || static_cast<std::size_t>(a.label) >= num_classes) {
      throw InvalidArgument("action label " + std::to_string(a.label) + " outside " +
                            std::to_string(num_classes) + " classes");
    }
    y[static_cast<std::size_t>(a.label)] = 1;
  }
  return y;
}

std::vector<std::size_t> mine_pseudo_background(std::span<const double> q,
                                                std::span<const std::size_t> action_times,
                                                double gamma, MiningMode mode, std::size_t eta) {
  const std::size_t length = q.size();
  if (action_times.empty()) throw InvalidArgument("background mining needs at least one action point");
  for (std::size_t i = 0; i < action_times.size(); ++i) {
    if (action_times[i] < 1 || action_times[i] > length ||
        (i > 0 && action_times[i] <= action_times[i - 1])) {
      throw InvalidArgument("action points must be strictly increasing within [1, T]");
    }
  }

  std::vector<std::size_t> out;
  if (mode == MiningMode::global) {
    if (eta < 1) throw InvalidArgument("global mining needs eta >= 1");
    std::vector<bool> is_action(length + 1, false);
    for (std::size_t t : action_times) is_action[t] = true;
    std::vector<std::size_t> candidates;
    for (std::size_t t = 1; t <= length; ++t) {
      if (!is_action[t]) candidates.push_back(t);
    }
    const std::size_t want = std::min(eta * action_times.size(), candidates.size());
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return q[a - 1] > q[b - 1]; });
    out.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(want));
    std::sort(out.begin(), out.end());
    return out;
  }

  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("mining threshold gamma must lie in (0, 1)");
  for (std::size_t i = 0; i + 1 < action_times.size(); ++i) {
    const std::size_t first = action_times[i] + 1;
    const std::size_t last = action_times[i + 1] - 1;
    if (first > last) continue;
    std::vector<std::size_t> picked;
    for (std::size_t t = first; t <= last; ++t) {
      if (q[t - 1] > gamma) picked.push_back(t);
    }
    if (picked.empty()) {
      std::size_t best = first;
      for (std::size_t t = first + 1; t <= last; ++t) {
        if (q[t - 1] > q[best - 1]) best = t;
      }
      picked.push_back(best);
    }
    if (mode == MiningMode::sectional_fill) {
      for (std::size_t t = picked.front(); t <= picked.back(); ++t) out.push_back(t);
    } else {
      out.insert(out.end(), picked.begin(), picked.end());
    }
  }
  return out;
}

}  // namespace ptal::mining
