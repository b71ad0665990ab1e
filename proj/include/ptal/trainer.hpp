#pragma once

// Training loop: forward, pseudo-background mining, per-class sequence
// search, loss assembly and Adam updates.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ptal/losses.hpp"
#include "ptal/mining.hpp"
#include "ptal/model.hpp"
#include "ptal/sequence.hpp"
#include "ptal/synthio.hpp"

namespace ptal::trainer {

enum class SearchFrequency { per_step, per_epoch };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;
  std::size_t alpha = sequence::kDefaultBudget;
  std::uint64_t seed = 0;
  losses::LossConfig loss;
  SearchFrequency search_frequency = SearchFrequency::per_step;
  sequence::ScoringVariant variant = sequence::ScoringVariant::contrast_both;
  sequence::BoundaryMode boundary = sequence::BoundaryMode::relaxed;
  mining::MiningMode mining = mining::MiningMode::sectional_fill;
  std::size_t eta = mining::kDefaultEta;
  std::size_t workers = 1;

  void validate() const;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, nd::Matrix> m;
  std::map<std::string, nd::Matrix> v;

  void apply(model::HeadParams& params, const std::map<std::string, nd::Matrix>& grads, double lr);
};

// Per-video search results that stay fixed across the steps of an epoch.
struct Guidance {
  std::vector<std::size_t> background;  // mined pseudo-background points
  std::vector<sequence::LabelSequence> sequences;  // one per present class, ascending class
};

struct VideoLoss {
  double total = 0.0;
  double video = 0.0;
  double point = 0.0;
  double score = 0.0;
  double feature = 0.0;
  std::size_t searches = 0;
  double search_seconds = 0.0;
  Guidance guidance;
  std::map<std::string, nd::Matrix> grads;
};

// Background points of class c: mined points plus action points of other
// classes.
std::vector<std::size_t> class_background(const mining::PointSet& points,
                                          const std::vector<std::size_t>& mined, int class_id);

// Mines and searches on the current scores without recording gradients.
Guidance compute_guidance(const synthio::VideoRecord& video, const model::HeadParams& params,
                          const TrainConfig& config, std::size_t* searches = nullptr);

// Loss and parameter gradients for one video. With `cached` the mined points
// and sequences are reused; otherwise they are recomputed from the current
// scores (skipping the search when completeness losses are disabled).
// `sample_seed` drives SOI sampling. Throws NumericalError on a non-finite
// loss.
VideoLoss video_loss(const synthio::VideoRecord& video, const model::HeadParams& params,
                     const TrainConfig& config, std::uint64_t sample_seed,
                     const Guidance* cached = nullptr);

struct StepMetrics {
  double total = 0.0;
  double video = 0.0;
  double point = 0.0;
  double score = 0.0;
  double feature = 0.0;
  std::size_t searches = 0;
  double search_seconds = 0.0;
};

// One Adam update from the mean of per-video gradients. Per-video work fans
// out over `config.workers` threads; reduction follows video id order.
StepMetrics train_step(const std::vector<const synthio::VideoRecord*>& batch, model::HeadParams& params,
                       AdamState& optimizer, const TrainConfig& config, std::uint64_t step_seed,
                       const std::map<std::string, Guidance>* cached = nullptr,
                       std::map<std::string, Guidance>* produced = nullptr);

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double total = 0.0;
  double video = 0.0;
  double point = 0.0;
  double score = 0.0;
  double feature = 0.0;
  std::size_t searches = 0;
  std::optional<double> sequence_accuracy;  // nullopt when no search ran
  double search_seconds = 0.0;
  double epoch_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
};

struct TrainResult {
  model::HeadParams params;
  TrainReport report;
};

// Frame accuracy of searched sequences against ground truth, pooled over
// every (video, present class) pair.
double sequence_accuracy(const std::vector<synthio::VideoRecord>& videos, const model::HeadParams& params,
                         const TrainConfig& config);

struct BudgetPoint {
  std::size_t alpha = 0;
  double mean_sequence_score = 0.0;  // completeness of the searched sequences
  double mean_frame_accuracy = 0.0;  // pooled over every (video, present class)
  double seconds = 0.0;
};

// Mines and searches every video once per budget in `alphas`, with the
// scores of fixed parameters.
std::vector<BudgetPoint> budget_sweep(const std::vector<synthio::VideoRecord>& videos,
                                      const model::HeadParams& params, const TrainConfig& config,
                                      const std::vector<std::size_t>& alphas);

TrainResult run_training(const std::vector<synthio::VideoRecord>& videos, std::size_t num_classes,
                         const TrainConfig& config,
                         const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

std::string to_string(SearchFrequency f);
SearchFrequency search_frequency_from_string(const std::string& s);
std::string to_string(sequence::ScoringVariant v);
sequence::ScoringVariant scoring_variant_from_string(const std::string& s);
std::string to_string(mining::MiningMode m);
mining::MiningMode mining_mode_from_string(const std::string& s);
std::string to_string(sequence::BoundaryMode m);
sequence::BoundaryMode boundary_mode_from_string(const std::string& s);

}  // namespace ptal::trainer
