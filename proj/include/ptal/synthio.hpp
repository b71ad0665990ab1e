#pragma once

// Synthetic point-annotated datasets and the file codecs: PTAL feature
// binaries and JSON manifests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ptal/metrics.hpp"
#include "ptal/mining.hpp"
#include "ptal/ndiff.hpp"

namespace ptal::synthio {

enum class PointDistribution { uniform, gaussian };

struct SyntheticSpec {
  std::size_t n_classes = 3;
  std::size_t n_videos = 60;  // training split
  std::size_t n_test_videos = 20;
  std::size_t min_length = 80;
  std::size_t max_length = 120;
  std::size_t feature_dim = 32;
  std::size_t min_instances = 2;
  std::size_t max_instances = 4;
  std::size_t min_instance_length = 8;
  std::size_t max_instance_length = 24;
  double noise = 0.4;   // sigma_f
  double margin = 1.0;  // class prototype = normalize(background + margin * direction)
  // Fraction of each instance, at either end, whose class signal ramps
  // linearly from the background prototype; 0 gives flat instances.
  double edge_fade = 0.0;
  PointDistribution points = PointDistribution::gaussian;
  std::uint64_t seed = 0;

  void validate() const;
};

struct VideoRecord {
  std::string video_id;
  nd::Matrix features;  // D x T
  std::vector<metrics::GroundTruthInstance> gt;  // sorted by start
  mining::PointSet points;

  std::size_t length() const { return features.cols(); }
  // Per-segment 0/1 ground truth for one class, index t - 1.
  std::vector<int> frame_truth(int class_id) const;
  bool operator==(const VideoRecord&) const = default;
};

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<VideoRecord> train;
  std::vector<VideoRecord> test;
};

// Throws InvalidArgument when instances cannot be packed into a video.
Dataset generate_dataset(const SyntheticSpec& spec);

// One action point per instance, carrying its class, sorted by time.
mining::PointSet sample_points(const std::vector<metrics::GroundTruthInstance>& gts,
                               PointDistribution distribution, std::uint64_t seed);

// "PTAL", u32 version, u32 T, u32 D, then T * D little-endian f32, time-major.
inline constexpr std::uint32_t kFeatureVersion = 1;
void write_features(const std::filesystem::path& path, const nd::Matrix& features);
nd::Matrix read_features(const std::filesystem::path& path);

struct Manifest {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<VideoRecord> videos;
};

// Feature files go to `feature_dir` (created if missing) and the manifest
// records paths relative to the manifest's own directory.
void write_manifest(const std::filesystem::path& manifest_path, const std::filesystem::path& feature_dir,
                    const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& manifest_path);

// Writes features/, train.json and test.json under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

// Ground truth of every video, flattened.
std::vector<metrics::GroundTruthInstance> ground_truth(const std::vector<VideoRecord>& videos);

std::string to_string(PointDistribution d);
PointDistribution point_distribution_from_string(const std::string& s);

}  // namespace ptal::synthio
