#include "ptal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ptal/error.hpp"
#include "ptal/sequence.hpp"

namespace ptal::metrics {

double tiou(std::size_t a_start, std::size_t a_end, std::size_t b_start, std::size_t b_end) {
  if (a_end < a_start || b_end < b_start) throw InvalidArgument("tiou: span end precedes start");
  const std::size_t lo = std::max(a_start, b_start);
  const std::size_t hi = std::min(a_end, b_end);
  if (hi < lo) return 0.0;
  const double inter = static_cast<double>(hi - lo + 1);
  const double uni = static_cast<double>(a_end - a_start + 1 + b_end - b_start + 1) - inter;
  return inter / uni;
}

std::optional<double> average_precision(std::vector<inference::Proposal> proposals,
                                        const std::vector<GroundTruthInstance>& gts,
                                        double iou_threshold) {
  if (gts.empty()) return std::nullopt;
  std::stable_sort(proposals.begin(), proposals.end(),
                   [](const inference::Proposal& a, const inference::Proposal& b) {
                     if (a.confidence != b.confidence) return a.confidence > b.confidence;
                     return a.start < b.start;
                   });
  std::vector<bool> matched(gts.size(), false);
  std::size_t tp = 0;
  double precision_sum = 0.0;
  for (std::size_t rank = 0; rank < proposals.size(); ++rank) {
    const auto& p = proposals[rank];
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (matched[j] || gts[j].video_id != p.video_id) continue;
      const double iou = tiou(p.start, p.end, gts[j].start, gts[j].end);
      if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best >= iou_threshold) {
      matched[best_j] = true;
      ++tp;
      precision_sum += static_cast<double>(tp) / static_cast<double>(rank + 1);
    }
  }
  return precision_sum / static_cast<double>(gts.size());
}

EvalReport evaluate(const std::vector<inference::Proposal>& proposals,
                    const std::vector<GroundTruthInstance>& ground_truth, const EvalOptions& options) {
  if (options.thresholds.empty()) throw InvalidArgument("evaluate: no IoU thresholds");
  std::set<std::string> videos;
  int max_class = -1;
  for (const auto& g : ground_truth) {
    if (g.end < g.start) throw InvalidArgument("evaluate: ground truth span end precedes start");
    if (g.class_id < 0) throw InvalidArgument("evaluate: negative ground truth class");
    videos.insert(g.video_id);
    max_class = std::max(max_class, g.class_id);
  }
  for (const auto& p : proposals) {
    if (!videos.contains(p.video_id)) {
      throw InvalidArgument("evaluate: proposal for unknown video id '" + p.video_id + "'");
    }
    if (p.class_id < 0) throw InvalidArgument("evaluate: negative proposal class");
    max_class = std::max(max_class, p.class_id);
  }
  const std::size_t n_classes =
      options.num_classes > 0 ? options.num_classes : static_cast<std::size_t>(max_class + 1);

  std::vector<std::vector<inference::Proposal>> by_class_p(n_classes);
  std::vector<std::vector<GroundTruthInstance>> by_class_g(n_classes);
  for (const auto& p : proposals) {
    if (static_cast<std::size_t>(p.class_id) >= n_classes) throw InvalidArgument("evaluate: class id out of range");
    by_class_p[p.class_id].push_back(p);
  }
  for (const auto& g : ground_truth) {
    if (static_cast<std::size_t>(g.class_id) >= n_classes) throw InvalidArgument("evaluate: class id out of range");
    by_class_g[g.class_id].push_back(g);
  }

  EvalReport report;
  report.thresholds = options.thresholds;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (by_class_g[c].empty()) report.classes_without_gt.push_back(static_cast<int>(c));
  }
  for (double thr : options.thresholds) {
    std::vector<std::optional<double>> row(n_classes);
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      row[c] = average_precision(by_class_p[c], by_class_g[c], thr);
      if (row[c]) {
        total += *row[c];
        ++counted;
      }
    }
    report.ap.push_back(std::move(row));
    report.map.push_back(counted == 0 ? 0.0 : total / static_cast<double>(counted));
  }
  for (const AverageRange& r : options.ranges) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < options.thresholds.size(); ++i) {
      const double t = options.thresholds[i];
      if (t >= r.low - 1e-9 && t <= r.high + 1e-9) {
        total += report.map[i];
        ++n;
      }
    }
    if (n == 0) continue;
    report.average_map.emplace_back(r, total / static_cast<double>(n));
  }
  return report;
}

double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DimensionError("pearson_r: length mismatch");
  if (xs.size() < 2) throw InvalidArgument("pearson_r: need at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // Spread at rounding level (e.g. means of a constant row) counts as zero.
  const auto flat = [n](double ss, double mean) {
    return std::sqrt(ss / n) <= 1e-12 * std::max(1.0, std::abs(mean));
  };
  if (flat(sxx, mx) || flat(syy, my)) throw InvalidArgument("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

ContrastAnalysis contrast_iou_analysis(const std::vector<AnalysisVideo>& videos, std::size_t n_samples,
                                       std::uint64_t seed, double delta, IntervalSampling sampling) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (!videos[i].gt.empty()) eligible.push_back(i);
  }
  if (eligible.empty()) throw InvalidArgument("contrast_iou_analysis: no video has ground truth");
  if (n_samples == 0) throw InvalidArgument("contrast_iou_analysis: n_samples must be positive");

  std::mt19937_64 rng(seed);
  ContrastAnalysis out;
  out.samples.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const AnalysisVideo& v = videos[eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)]];
    std::vector<int> classes;
    for (const auto& g : v.gt) classes.push_back(g.class_id);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    const int c = classes[std::uniform_int_distribution<std::size_t>(0, classes.size() - 1)(rng)];
    if (static_cast<std::size_t>(c) >= v.fused.rows()) throw DimensionError("contrast_iou_analysis: class outside score rows");
    const std::size_t T = v.fused.cols();
    std::size_t a = 1, b = 1;
    if (sampling == IntervalSampling::uniform) {
      a = std::uniform_int_distribution<std::size_t>(1, T)(rng);
      b = std::uniform_int_distribution<std::size_t>(1, T)(rng);
      if (a > b) std::swap(a, b);
    } else {
      std::vector<const GroundTruthInstance*> pool;
      for (const auto& g : v.gt) {
        if (g.class_id == c) pool.push_back(&g);
      }
      const GroundTruthInstance& g = *pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      const auto l = static_cast<std::ptrdiff_t>(g.end - g.start + 1);
      std::uniform_int_distribution<std::ptrdiff_t> jitter(-l, l);
      const auto clip = [T](std::ptrdiff_t x) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x, 1, static_cast<std::ptrdiff_t>(T)));
      };
      do {
        a = clip(static_cast<std::ptrdiff_t>(g.start) + jitter(rng));
        b = clip(static_cast<std::ptrdiff_t>(g.end) + jitter(rng));
      } while (a > b);
    }

    const auto row = v.fused.row(static_cast<std::size_t>(c));
    const sequence::SpanScore sc = sequence::span_score(row, a, b, true, delta);
    double iou = 0.0;
    for (const auto& g : v.gt) {
      if (g.class_id == c) iou = std::max(iou, tiou(a, b, g.start, g.end));
    }
    out.samples.push_back(IntervalSample{v.video_id, c, a, b, sc.inner,
                                         sequence::outer_inner_contrast(row, a, b, delta), iou});
  }

  std::vector<double> inner, contrast, ious;
  for (const auto& s : out.samples) {
    inner.push_back(s.inner);
    contrast.push_back(s.contrast);
    ious.push_back(s.iou);
  }
  auto safe_r = [](const std::vector<double>& x, const std::vector<double>& y) -> std::optional<double> {
    try {
      return pearson_r(x, y);
    } catch (const InvalidArgument&) {
      return std::nullopt;
    }
  };
  out.r_inner = safe_r(inner, ious);
  out.r_contrast = safe_r(contrast, ious);
  return out;
}

std::string to_string(IntervalSampling s) { return s == IntervalSampling::anchored ? "anchored" : "uniform"; }

IntervalSampling interval_sampling_from_string(const std::string& s) {
  if (s == "anchored") return IntervalSampling::anchored;
  if (s == "uniform") return IntervalSampling::uniform;
  throw InvalidArgument("unknown interval sampling '" + s + "' (expected anchored or uniform)");
}

void write_scatter_csv(const std::string& path, const ContrastAnalysis& analysis) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open scatter CSV for writing: " + path);
  out << std::setprecision(17);
  out << "video_id,class_id,start,end,inner,contrast,iou\n";
  for (const auto& s : analysis.samples) {
    out << s.video_id << ',' << s.class_id << ',' << s.start << ',' << s.end << ',' << s.inner << ','
        << s.contrast << ',' << s.iou << '\n';
  }
  if (!out) throw IoError("failed writing scatter CSV: " + path);
}

namespace {

void svg_panel(std::ostream& out, double x0, const std::string& title,
               const std::vector<IntervalSample>& samples, bool use_contrast,
               std::optional<double> r) {
  constexpr double kW = 360.0, kH = 300.0, kPad = 40.0;
  double lo = use_contrast ? -1.0 : 0.0;
  const double hi = 1.0;
  out << "<g transform=\"translate(" << x0 << ",0)\">\n";
  out << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kW << "\" height=\"" << kH
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kPad + kW / 2 << "\" y=\"24\" text-anchor=\"middle\">" << title;
  if (r) out << " (r = " << std::fixed << std::setprecision(3) << *r << std::defaultfloat << ")";
  out << "</text>\n";
  out << "<text x=\"" << kPad + kW / 2 << "\" y=\"" << kPad + kH + 30
      << "\" text-anchor=\"middle\">IoU</text>\n";
  out << std::setprecision(6);
  for (const auto& s : samples) {
    const double v = use_contrast ? s.contrast : s.inner;
    const double px = kPad + s.iou * kW;
    const double py = kPad + kH - (std::clamp(v, lo, hi) - lo) / (hi - lo) * kH;
    out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"1.5\" fill=\"steelblue\" fill-opacity=\"0.5\"/>\n";
  }
  out << "</g>\n";
}

}  // namespace

void write_scatter_svg(const std::string& path, const ContrastAnalysis& analysis) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open scatter SVG for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"840\" height=\"380\" font-family=\"sans-serif\" font-size=\"13\">\n";
  svg_panel(out, 0.0, "inner score", analysis.samples, false, analysis.r_inner);
  svg_panel(out, 420.0, "outer-inner contrast", analysis.samples, true, analysis.r_contrast);
  out << "</svg>\n";
  if (!out) throw IoError("failed writing scatter SVG: " + path);
}

}  // namespace ptal::metrics
