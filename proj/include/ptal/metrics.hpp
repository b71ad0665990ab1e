#pragma once

// tIoU, average precision and mAP tables, Pearson correlation, and the
// inner-score versus contrast analysis over sampled intervals.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ptal/inference.hpp"
#include "ptal/model.hpp"

namespace ptal::metrics {

struct GroundTruthInstance {
  std::string video_id;
  int class_id = 0;
  std::size_t start = 1;  // 1-based, inclusive
  std::size_t end = 1;

  bool operator==(const GroundTruthInstance&) const = default;
};

// Intersection over union of inclusive segment spans.
double tiou(std::size_t a_start, std::size_t a_end, std::size_t b_start, std::size_t b_end);

// Non-interpolated AP over the ranked list. A proposal is a true positive
// when its best-IoU unmatched ground truth reaches the threshold (>=).
// Proposals are ranked by descending confidence, ties by earlier start.
// Returns nullopt when `gts` is empty.
std::optional<double> average_precision(std::vector<inference::Proposal> proposals,
                                        const std::vector<GroundTruthInstance>& gts,
                                        double iou_threshold);

struct AverageRange {
  double low = 0.1;
  double high = 0.5;
};

struct EvalOptions {
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<AverageRange> ranges{{0.1, 0.5}, {0.3, 0.7}, {0.1, 0.7}};
  std::size_t num_classes = 0;  // 0: infer from the data
};

struct EvalReport {
  std::vector<double> thresholds;
  // ap[threshold index][class]; nullopt for classes without ground truth.
  std::vector<std::vector<std::optional<double>>> ap;
  std::vector<double> map;
  std::vector<std::pair<AverageRange, double>> average_map;
  std::vector<int> classes_without_gt;
};

// Throws InvalidArgument when a proposal names a video absent from the
// ground truth.
EvalReport evaluate(const std::vector<inference::Proposal>& proposals,
                    const std::vector<GroundTruthInstance>& ground_truth,
                    const EvalOptions& options = {});

// Sample Pearson correlation; throws InvalidArgument for fewer than two
// points or zero variance (spread below 1e-12 of the data's magnitude).
double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys);

struct IntervalSample {
  std::string video_id;
  int class_id = 0;
  std::size_t start = 1;
  std::size_t end = 1;
  double inner = 0.0;
  double contrast = 0.0;
  double iou = 0.0;
};

struct AnalysisVideo {
  std::string video_id;
  nd::Matrix fused;  // C x T
  std::vector<GroundTruthInstance> gt;
};

struct ContrastAnalysis {
  std::vector<IntervalSample> samples;
  std::optional<double> r_inner;  // nullopt when degenerate
  std::optional<double> r_contrast;
};

// anchored: pick a ground-truth instance of length l and move each end by
// an offset uniform in [-l, l], clipped to the video; inverted draws are
// redrawn. uniform: two endpoints uniform over the video.
enum class IntervalSampling { anchored, uniform };

// Draws `n_samples` intervals, each from a uniformly chosen video with ground
// truth and one of its classes. IoU is the best against that class's ground
// truth in the video.
ContrastAnalysis contrast_iou_analysis(const std::vector<AnalysisVideo>& videos,
                                       std::size_t n_samples, std::uint64_t seed,
                                       double delta = 0.25,
                                       IntervalSampling sampling = IntervalSampling::anchored);

std::string to_string(IntervalSampling s);
IntervalSampling interval_sampling_from_string(const std::string& s);

void write_scatter_csv(const std::string& path, const ContrastAnalysis& analysis);
// Two side-by-side panels: inner score vs IoU and contrast vs IoU.
void write_scatter_svg(const std::string& path, const ContrastAnalysis& analysis);

}  // namespace ptal::metrics
