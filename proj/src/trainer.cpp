#include "ptal/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include <spdlog/spdlog.h>

#include "ptal/error.hpp"
#include "ptal/rng.hpp"

namespace ptal::trainer {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void add_into(std::map<std::string, nd::Matrix>& acc, const std::map<std::string, nd::Matrix>& g,
              double weight) {
  for (const auto& [name, m] : g) {
    auto it = acc.find(name);
    if (it == acc.end()) it = acc.emplace(name, nd::Matrix(m.rows(), m.cols())).first;
    auto dst = it->second.values();
    auto src = m.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += weight * src[i];
  }
}

sequence::SearchOptions search_options(const TrainConfig& config) {
  sequence::SearchOptions o;
  o.budget = config.alpha;
  o.delta = config.loss.delta;
  o.variant = config.variant;
  o.boundary = config.boundary;
  return o;
}

std::vector<std::size_t> mine(const synthio::VideoRecord& video, const nd::Matrix& background,
                              const TrainConfig& config) {
  const auto action = video.points.action_times();
  return mining::mine_pseudo_background(background.row(0), action, config.loss.gamma, config.mining,
                                        config.eta);
}

std::vector<sequence::LabelSequence> search_all(const synthio::VideoRecord& video, const nd::Matrix& fused,
                                                const std::vector<std::size_t>& mined,
                                                const TrainConfig& config) {
  std::vector<sequence::LabelSequence> out;
  const auto opts = search_options(config);
  for (int c : video.points.present_classes()) {
    std::vector<std::size_t> act;
    for (const auto& p : video.points.action) {
      if (p.label == c) act.push_back(p.t);
    }
    const auto bkg = class_background(video.points, mined, c);
    out.push_back(sequence::greedy_search(fused.row(static_cast<std::size_t>(c)), act, bkg, opts, c).sequence);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be positive");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (alpha == 0) throw InvalidArgument("alpha must be positive");
  if (workers == 0) throw InvalidArgument("workers must be positive");
  if (eta == 0) throw InvalidArgument("eta must be positive");
  loss.validate();
}

void AdamState::apply(model::HeadParams& params, const std::map<std::string, nd::Matrix>& grads, double lr) {
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  params.for_each([&](const std::string& name, nd::Matrix& p) {
    auto git = grads.find(name);
    if (git == grads.end()) return;
    auto& mm = m.try_emplace(name, p.rows(), p.cols()).first->second;
    auto& vv = v.try_emplace(name, p.rows(), p.cols()).first->second;
    auto g = git->second.values();
    if (g.size() != p.size()) throw DimensionError("Adam: gradient shape mismatch for " + name);
    auto pv = p.values();
    auto mv = mm.values();
    auto vvv = vv.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = beta1 * mv[i] + (1.0 - beta1) * g[i];
      vvv[i] = beta2 * vvv[i] + (1.0 - beta2) * g[i] * g[i];
      pv[i] -= lr * (mv[i] / c1) / (std::sqrt(vvv[i] / c2) + eps);
    }
  });
}

std::vector<std::size_t> class_background(const mining::PointSet& points, const std::vector<std::size_t>& mined,
                                          int class_id) {
  std::vector<std::size_t> out = mined;
  for (const auto& p : points.action) {
    if (p.label != class_id) out.push_back(p.t);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Guidance compute_guidance(const synthio::VideoRecord& video, const model::HeadParams& params,
                          const TrainConfig& config, std::size_t* searches) {
  const model::Scores s = model::evaluate(video.features, params);
  Guidance g;
  g.background = mine(video, s.background, config);
  g.sequences = search_all(video, s.fused, g.background, config);
  if (searches) *searches += g.sequences.size();
  return g;
}

VideoLoss video_loss(const synthio::VideoRecord& video, const model::HeadParams& params,
                     const TrainConfig& config, std::uint64_t sample_seed, const Guidance* cached) {
  if (video.points.action.empty()) throw InvalidArgument("video " + video.video_id + " has no action point");
  const losses::LossConfig& lc = config.loss;
  nd::Tape tape;
  const model::ModelOutput out = model::forward(tape, video.features, params);
  VideoLoss r;

  const bool completeness = lc.completeness_enabled();
  if (cached) {
    r.guidance = *cached;
  } else {
    r.guidance.background = mine(video, out.background.value(), config);
    if (completeness) {
      const auto t0 = Clock::now();
      r.guidance.sequences = search_all(video, out.fused.value(), r.guidance.background, config);
      r.search_seconds = seconds_since(t0);
      r.searches = r.guidance.sequences.size();
    }
  }

  const auto label = mining::video_label(video.points.action, params.num_classes());
  const nd::Var l_video = losses::video_loss(model::video_scores(out.fused), label);
  const nd::Var l_point =
      nd::add(losses::point_action_loss(out.fused, out.background, video.points.action, lc.beta),
              losses::point_background_loss(out.fused, out.background, r.guidance.background, lc.beta));

  nd::Var l_score = tape.constant(nd::Matrix::scalar(0.0));
  nd::Var l_feat = tape.constant(nd::Matrix::scalar(0.0));
  if (completeness) {
    const auto classes = video.points.present_classes();
    if (r.guidance.sequences.size() != classes.size()) {
      throw InvalidArgument("video " + video.video_id + ": cached guidance lacks sequences");
    }
    std::vector<nd::Var> scores;
    std::vector<losses::InstanceFeature> feats;
    for (const auto& seq : r.guidance.sequences) {
      scores.push_back(losses::completeness_score(out.fused, static_cast<std::size_t>(seq.class_id), seq, lc.delta));
      for (std::size_t i = 0; i < seq.spans.size(); ++i) {
        feats.push_back(losses::soi_pool(out.embedded, seq.spans[i],
                                         derive_seed({sample_seed, static_cast<std::uint64_t>(seq.class_id), i}),
                                         seq.class_id));
      }
    }
    l_score = losses::score_contrastive_loss(scores, lc.beta);
    l_feat = losses::feature_contrastive_loss(tape, feats, lc.tau);
  }

  const nd::Var total = losses::total_loss({l_video, l_point, l_score, l_feat}, lc.lambdas);
  r.video = l_video.value()[0];
  r.point = l_point.value()[0];
  r.score = l_score.value()[0];
  r.feature = l_feat.value()[0];
  r.total = total.value()[0];
  if (!std::isfinite(r.total)) {
    spdlog::error("non-finite loss on video {}: video={} point={} score={} feature={}", video.video_id, r.video,
                  r.point, r.score, r.feature);
    throw NumericalError("non-finite loss on video " + video.video_id + " (video=" + std::to_string(r.video) +
                         ", point=" + std::to_string(r.point) + ", score=" + std::to_string(r.score) +
                         ", feature=" + std::to_string(r.feature) + ")");
  }
  tape.backward(total);
  r.grads = tape.parameter_grads();
  return r;
}

StepMetrics train_step(const std::vector<const synthio::VideoRecord*>& batch, model::HeadParams& params,
                       AdamState& optimizer, const TrainConfig& config, std::uint64_t step_seed,
                       const std::map<std::string, Guidance>* cached, std::map<std::string, Guidance>* produced) {
  if (batch.empty()) throw InvalidArgument("train_step: empty batch");
  std::vector<VideoLoss> results(batch.size());
  parallel_for(batch.size(), config.workers, [&](std::size_t i) {
    const synthio::VideoRecord& v = *batch[i];
    const Guidance* g = nullptr;
    if (cached) {
      auto it = cached->find(v.video_id);
      if (it != cached->end()) g = &it->second;
    }
    results[i] = video_loss(v, params, config, derive_seed({step_seed, hash_string(v.video_id)}), g);
  });

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return batch[a]->video_id < batch[b]->video_id; });
  const double w = 1.0 / static_cast<double>(batch.size());
  std::map<std::string, nd::Matrix> grads;
  StepMetrics m;
  for (std::size_t i : order) {
    const VideoLoss& r = results[i];
    add_into(grads, r.grads, w);
    m.total += w * r.total;
    m.video += w * r.video;
    m.point += w * r.point;
    m.score += w * r.score;
    m.feature += w * r.feature;
    m.searches += r.searches;
    m.search_seconds += r.search_seconds;
    if (produced) (*produced)[batch[i]->video_id] = r.guidance;
  }
  optimizer.apply(params, grads, config.learning_rate);
  return m;
}

namespace {

// Pooled frame accuracy of the sequences in `guidance` against ground truth.
std::optional<double> pooled_accuracy(const std::vector<synthio::VideoRecord>& videos,
                                      const std::map<std::string, Guidance>& guidance) {
  double correct = 0.0;
  double frames = 0.0;
  for (const auto& v : videos) {
    auto it = guidance.find(v.video_id);
    if (it == guidance.end()) continue;
    for (const auto& seq : it->second.sequences) {
      const auto truth = v.frame_truth(seq.class_id);
      correct += sequence::sequence_accuracy(seq, truth) * static_cast<double>(truth.size());
      frames += static_cast<double>(truth.size());
    }
  }
  if (frames == 0.0) return std::nullopt;
  return correct / frames;
}

}  // namespace

double sequence_accuracy(const std::vector<synthio::VideoRecord>& videos, const model::HeadParams& params,
                         const TrainConfig& config) {
  std::vector<Guidance> g(videos.size());
  parallel_for(videos.size(), config.workers,
               [&](std::size_t i) { g[i] = compute_guidance(videos[i], params, config); });
  std::map<std::string, Guidance> by_id;
  for (std::size_t i = 0; i < videos.size(); ++i) by_id[videos[i].video_id] = std::move(g[i]);
  const auto acc = pooled_accuracy(videos, by_id);
  if (!acc) throw InvalidArgument("sequence_accuracy: no video has action points");
  return *acc;
}

std::vector<BudgetPoint> budget_sweep(const std::vector<synthio::VideoRecord>& videos,
                                      const model::HeadParams& params, const TrainConfig& config,
                                      const std::vector<std::size_t>& alphas) {
  std::vector<nd::Matrix> fused(videos.size());
  parallel_for(videos.size(), config.workers,
               [&](std::size_t i) { fused[i] = model::evaluate(videos[i].features, params).fused; });
  std::vector<BudgetPoint> out;
  for (std::size_t alpha : alphas) {
    TrainConfig tc = config;
    tc.alpha = alpha;
    tc.validate();
    const auto t0 = Clock::now();
    std::vector<Guidance> g(videos.size());
    parallel_for(videos.size(), tc.workers, [&](std::size_t i) { g[i] = compute_guidance(videos[i], params, tc); });
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    double score = 0.0;
    std::size_t n = 0;
    std::map<std::string, Guidance> by_id;
    for (std::size_t i = 0; i < videos.size(); ++i) {
      for (const auto& seq : g[i].sequences) {
        score += sequence::completeness_score(fused[i].row(static_cast<std::size_t>(seq.class_id)), seq,
                                              tc.loss.delta, tc.variant);
        ++n;
      }
      by_id[videos[i].video_id] = std::move(g[i]);
    }
    const auto acc = pooled_accuracy(videos, by_id);
    out.push_back({alpha, n ? score / static_cast<double>(n) : 0.0, acc.value_or(0.0), secs});
  }
  return out;
}

TrainResult run_training(const std::vector<synthio::VideoRecord>& videos, std::size_t num_classes,
                         const TrainConfig& config, const std::optional<std::filesystem::path>& checkpoint) {
  config.validate();
  if (videos.empty()) throw InvalidArgument("run_training: no training videos");
  if (num_classes == 0) throw InvalidArgument("run_training: num_classes must be positive");
  const std::size_t D = videos.front().features.rows();
  for (const auto& v : videos) {
    if (v.features.rows() != D) throw DimensionError("run_training: video " + v.video_id + " has a different feature dim");
    v.points.validate(v.length());
  }

  TrainResult result{model::HeadParams::init(D, num_classes, derive_seed({config.seed, hash_string("init")})), {}};
  AdamState adam;
  const bool completeness = config.loss.completeness_enabled();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t_epoch = Clock::now();
    std::vector<std::size_t> order(videos.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed({config.seed, hash_string("shuffle"), epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochReport rep;
    rep.epoch = epoch;
    std::map<std::string, Guidance> epoch_guidance;
    const bool per_epoch = completeness && config.search_frequency == SearchFrequency::per_epoch;
    if (per_epoch) {
      const auto t0 = Clock::now();
      std::vector<Guidance> g(videos.size());
      std::vector<std::size_t> counts(videos.size(), 0);
      parallel_for(videos.size(), config.workers,
                   [&](std::size_t i) { g[i] = compute_guidance(videos[i], result.params, config, &counts[i]); });
      for (std::size_t i = 0; i < videos.size(); ++i) {
        rep.searches += counts[i];
        epoch_guidance[videos[i].video_id] = std::move(g[i]);
      }
      rep.search_seconds = seconds_since(t0);
    }

    std::map<std::string, Guidance> produced;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<const synthio::VideoRecord*> batch;
      for (std::size_t j = b; j < std::min(order.size(), b + config.batch_size); ++j) batch.push_back(&videos[order[j]]);
      const StepMetrics m = train_step(batch, result.params, adam, config,
                                       derive_seed({config.seed, hash_string("step"), epoch, b}),
                                       per_epoch ? &epoch_guidance : nullptr, per_epoch ? nullptr : &produced);
      const double share = static_cast<double>(batch.size()) / static_cast<double>(videos.size());
      rep.total += share * m.total;
      rep.video += share * m.video;
      rep.point += share * m.point;
      rep.score += share * m.score;
      rep.feature += share * m.feature;
      rep.searches += m.searches;
      rep.search_seconds += m.search_seconds;
    }
    rep.sequence_accuracy = pooled_accuracy(videos, per_epoch ? epoch_guidance : produced);
    rep.epoch_seconds = seconds_since(t_epoch);
    spdlog::debug("epoch {}: loss {:.6f} (video {:.4f} point {:.4f} score {:.4f} feat {:.4f}) searches {}", epoch,
                  rep.total, rep.video, rep.point, rep.score, rep.feature, rep.searches);
    result.report.epochs.push_back(rep);
  }

  if (checkpoint) model::save_checkpoint(*checkpoint, result.params);
  return result;
}

std::string to_string(SearchFrequency f) { return f == SearchFrequency::per_step ? "per_step" : "per_epoch"; }

SearchFrequency search_frequency_from_string(const std::string& s) {
  if (s == "per_step") return SearchFrequency::per_step;
  if (s == "per_epoch") return SearchFrequency::per_epoch;
  throw InvalidArgument("unknown search frequency '" + s + "' (expected per_step or per_epoch)");
}

std::string to_string(sequence::ScoringVariant v) {
  switch (v) {
    case sequence::ScoringVariant::contrast_both: return "contrast_both";
    case sequence::ScoringVariant::contrast_action: return "contrast_action";
    case sequence::ScoringVariant::inner_only: return "inner_only";
  }
  return "contrast_both";
}

sequence::ScoringVariant scoring_variant_from_string(const std::string& s) {
  if (s == "contrast_both") return sequence::ScoringVariant::contrast_both;
  if (s == "contrast_action") return sequence::ScoringVariant::contrast_action;
  if (s == "inner_only") return sequence::ScoringVariant::inner_only;
  throw InvalidArgument("unknown scoring variant '" + s + "'");
}

std::string to_string(mining::MiningMode m) {
  switch (m) {
    case mining::MiningMode::sectional_fill: return "sectional_fill";
    case mining::MiningMode::sectional: return "sectional";
    case mining::MiningMode::global: return "global";
  }
  return "sectional_fill";
}

mining::MiningMode mining_mode_from_string(const std::string& s) {
  if (s == "sectional_fill") return mining::MiningMode::sectional_fill;
  if (s == "sectional") return mining::MiningMode::sectional;
  if (s == "global") return mining::MiningMode::global;
  throw InvalidArgument("unknown mining mode '" + s + "'");
}

std::string to_string(sequence::BoundaryMode m) { return m == sequence::BoundaryMode::relaxed ? "relaxed" : "strict"; }

sequence::BoundaryMode boundary_mode_from_string(const std::string& s) {
  if (s == "relaxed") return sequence::BoundaryMode::relaxed;
  if (s == "strict") return sequence::BoundaryMode::strict;
  throw InvalidArgument("unknown boundary mode '" + s + "'");
}

}  // namespace ptal::trainer
