#include "ptal/inference.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

#include "ptal/error.hpp"
#include "ptal/metrics.hpp"
#include "ptal/sequence.hpp"

namespace ptal::inference {

void InferenceConfig::validate() const {
  if (!(theta_vid >= 0.0 && theta_vid < 1.0)) throw InvalidArgument("theta_vid must lie in [0, 1)");
  if (theta_seg.empty()) throw InvalidArgument("theta_seg list is empty");
  for (std::size_t i = 0; i < theta_seg.size(); ++i) {
    if (!(theta_seg[i] >= 0.0 && theta_seg[i] < 1.0)) throw InvalidArgument("theta_seg values must lie in [0, 1)");
    if (i > 0 && theta_seg[i] <= theta_seg[i - 1]) throw InvalidArgument("theta_seg must be strictly increasing");
  }
  if (!(nms_threshold > 0.0 && nms_threshold <= 1.0)) throw InvalidArgument("NMS threshold must lie in (0, 1]");
  if (!(delta > 0.0)) throw InvalidArgument("outer range delta must be positive");
}

std::vector<Proposal> generate_proposals(const nd::Matrix& fused, const std::vector<double>& video_scores,
                                         const InferenceConfig& config, const std::string& video_id) {
  config.validate();
  if (video_scores.size() != fused.rows()) {
    throw DimensionError("generate_proposals: " + std::to_string(video_scores.size()) +
                         " video scores for " + std::to_string(fused.rows()) + " classes");
  }
  std::vector<Proposal> out;
  for (std::size_t c = 0; c < fused.rows(); ++c) {
    if (video_scores[c] < config.theta_vid) continue;
    const auto row = fused.row(c);
    std::set<std::pair<std::size_t, std::size_t>> spans;
    for (double theta : config.theta_seg) {
      std::size_t t = 0;
      while (t < row.size()) {
        if (row[t] > theta) {
          std::size_t u = t;
          while (u + 1 < row.size() && row[u + 1] > theta) ++u;
          spans.emplace(t + 1, u + 1);
          t = u + 1;
        } else {
          ++t;
        }
      }
    }
    for (const auto& [s, e] : spans) {
      out.push_back(Proposal{video_id, static_cast<int>(c), s, e,
                             sequence::outer_inner_contrast(row, s, e, config.delta)});
    }
  }
  return out;
}

std::vector<Proposal> temporal_nms(std::vector<Proposal> proposals, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw InvalidArgument("NMS threshold must lie in (0, 1]");
  std::stable_sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    return std::tie(b.confidence, a.start, a.class_id, a.end) <
           std::tie(a.confidence, b.start, b.class_id, b.end);
  });
  std::vector<Proposal> kept;
  for (const Proposal& p : proposals) {
    bool suppressed = false;
    for (const Proposal& k : kept) {
      if (k.class_id == p.class_id && k.video_id == p.video_id &&
          metrics::tiou(k.start, k.end, p.start, p.end) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

std::vector<Proposal> localize(const nd::Matrix& features, const model::HeadParams& params,
                               const InferenceConfig& config, const std::string& video_id) {
  const model::Scores s = model::evaluate(features, params);
  return temporal_nms(generate_proposals(s.fused, s.video, config, video_id), config.nms_threshold);
}

void write_proposals_tsv(const std::string& path, const std::vector<Proposal>& proposals) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open proposals file for writing: " + path);
  out << std::setprecision(17);
  for (const Proposal& p : proposals) {
    out << p.video_id << '\t' << p.class_id << '\t' << p.start << '\t' << p.end << '\t'
        << p.confidence << '\n';
  }
  if (!out) throw IoError("failed writing proposals: " + path);
}

std::vector<Proposal> read_proposals_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open proposals file: " + path);
  std::vector<Proposal> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    Proposal p;
    std::string conf;
    if (!std::getline(fields, p.video_id, '\t') || !(fields >> p.class_id >> p.start >> p.end)) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed proposal record");
    }
    std::string rest;
    if (fields >> rest) {
      std::size_t used = 0;
      try {
        p.confidence = std::stod(rest, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      std::string extra;
      if (used != rest.size() || (fields >> extra)) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": malformed confidence");
      }
    } else {
      p.confidence = 1.0;
    }
    if (p.start < 1 || p.end < p.start) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": invalid span");
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ptal::inference
