#pragma once

// Test-time localization: video-level class gating, multi-threshold segment
// selection, run merging, outer-inner-contrast confidence and temporal NMS.

#include <string>
#include <vector>

#include "ptal/model.hpp"
#include "ptal/ndiff.hpp"

namespace ptal::inference {

struct Proposal {
  std::string video_id;
  int class_id = 0;
  std::size_t start = 1;  // 1-based, inclusive
  std::size_t end = 1;
  double confidence = 0.0;

  bool operator==(const Proposal&) const = default;
};

struct InferenceConfig {
  double theta_vid = 0.5;
  std::vector<double> theta_seg{0.0, 0.05, 0.10, 0.15, 0.20, 0.25};
  double nms_threshold = 0.6;
  double delta = 0.25;

  void validate() const;
};

// Proposals of one video before NMS, ordered by class, then start, then end.
std::vector<Proposal> generate_proposals(const nd::Matrix& fused, const std::vector<double>& video_scores,
                                         const InferenceConfig& config,
                                         const std::string& video_id = {});

// Per-class greedy NMS. Output is ordered by descending confidence, ties by
// earlier start, then smaller class id.
std::vector<Proposal> temporal_nms(std::vector<Proposal> proposals, double iou_threshold);

std::vector<Proposal> localize(const nd::Matrix& features, const model::HeadParams& params,
                               const InferenceConfig& config, const std::string& video_id);

// One record per line: video_id, class_id, start, end, confidence separated
// by tabs. Confidences are printed with 17 significant digits.
void write_proposals_tsv(const std::string& path, const std::vector<Proposal>& proposals);
std::vector<Proposal> read_proposals_tsv(const std::string& path);

}  // namespace ptal::inference
