#include "ptal/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "ptal/config.hpp"
#include "ptal/error.hpp"
#include "ptal/inference.hpp"
#include "ptal/metrics.hpp"
#include "ptal/model.hpp"
#include "ptal/sequence.hpp"
#include "ptal/synthio.hpp"
#include "ptal/trainer.hpp"

namespace ptal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kReportVersion = 1;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void configure_logging() {
  const char* level = std::getenv("PTAL_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

void ensure_parent(const fs::path& p) {
  if (!p.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing: " + path.string());
}

// Timings live in their own section so reruns compare equal elsewhere.
void write_report(const fs::path& path, const std::string& command, const config::RunConfig& cfg,
                  json results, json timings) {
  json doc = {{"report_version", kReportVersion}, {"command", command}, {"seed", cfg.seed},
              {"config", config::to_json(cfg)}, {"results", std::move(results)}, {"timings", std::move(timings)}};
  write_text(path, doc.dump(2) + "\n");
}

json sequence_json(const sequence::LabelSequence& seq) {
  json spans = json::array();
  for (const auto& s : seq.spans) spans.push_back({{"start", s.start}, {"end", s.end}, {"action", s.action}});
  return {{"class_id", seq.class_id}, {"spans", spans}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("malformed number '" + item + "' in list '" + s + "'");
    }
  }
  return out;
}

// Flags shared by every subcommand; applied over the config file.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration");
    app->add_option("--seed", seed, "Seed (overrides the config file)");
    app->add_option("--workers", workers, "Worker threads (default: available cores)");
  }
};

struct TrainOverrides {
  std::optional<std::size_t> epochs, batch_size, alpha;
  std::optional<double> lr;
  std::string lambdas, variant, search_frequency, boundary, mining;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch-size", batch_size, "Videos per step");
    app->add_option("--alpha", alpha, "Search budget");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--lambdas", lambdas, "Loss weights video,point,score,feature");
    app->add_option("--variant", variant, "contrast_both | contrast_action | inner_only");
    app->add_option("--search-frequency", search_frequency, "per_step | per_epoch");
    app->add_option("--boundary", boundary, "relaxed | strict");
    app->add_option("--mining", mining, "sectional_fill | sectional | global");
  }

  void apply(trainer::TrainConfig& t) const {
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (alpha) t.alpha = *alpha;
    if (lr) t.learning_rate = *lr;
    if (!lambdas.empty()) {
      const auto v = parse_list(lambdas);
      if (v.size() != 4) throw InvalidArgument("--lambdas needs exactly four values");
      std::copy(v.begin(), v.end(), t.loss.lambdas.begin());
    }
    if (!variant.empty()) t.variant = trainer::scoring_variant_from_string(variant);
    if (!search_frequency.empty()) t.search_frequency = trainer::search_frequency_from_string(search_frequency);
    if (!boundary.empty()) t.boundary = trainer::boundary_mode_from_string(boundary);
    if (!mining.empty()) t.mining = trainer::mining_mode_from_string(mining);
  }
};

config::RunConfig effective_config(const Common& common, const TrainOverrides* overrides = nullptr) {
  config::RunConfig cfg = common.config_path.empty() ? config::RunConfig{} : config::load(common.config_path);
  if (common.seed) cfg.seed = *common.seed;
  if (common.workers) cfg.workers = *common.workers;
  if (overrides) overrides->apply(cfg.train);
  cfg.finalize();
  return cfg;
}

void write_gt_tsv(const fs::path& path, const std::vector<synthio::VideoRecord>& videos) {
  std::vector<inference::Proposal> rows;
  for (const auto& g : synthio::ground_truth(videos)) rows.push_back({g.video_id, g.class_id, g.start, g.end, 1.0});
  inference::write_proposals_tsv(path.string(), rows);
}

int cmd_gen_data(const Common& common, const std::string& out_dir) {
  const auto t0 = Clock::now();
  const config::RunConfig cfg = effective_config(common);
  const synthio::Dataset ds = synthio::generate_dataset(cfg.data);
  const fs::path dir(out_dir);
  synthio::write_dataset(dir, ds);
  write_gt_tsv(dir / "train_gt.tsv", ds.train);
  write_gt_tsv(dir / "test_gt.tsv", ds.test);
  std::size_t instances = 0;
  for (const auto* split : {&ds.train, &ds.test}) {
    for (const auto& v : *split) instances += v.gt.size();
  }
  write_report(dir / "gen_report.json", "gen-data", cfg,
               {{"train_videos", ds.train.size()}, {"test_videos", ds.test.size()}, {"instances", instances},
                {"train_manifest", "train.json"}, {"test_manifest", "test.json"}},
               {{"total_seconds", seconds_since(t0)}});
  std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test videos to " << dir.string()
            << "\n";
  return 0;
}

int cmd_train(const Common& common, const TrainOverrides& ov, const std::string& manifest_path,
              const std::string& out_dir) {
  const auto t0 = Clock::now();
  const config::RunConfig cfg = effective_config(common, &ov);
  const synthio::Manifest m = synthio::read_manifest(manifest_path);
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const fs::path ckpt = dir / "checkpoint.ptlh";
  const trainer::TrainResult r = trainer::run_training(m.videos, m.num_classes, cfg.train, ckpt);

  json epochs = json::array();
  json epoch_times = json::array();
  std::size_t searches = 0;
  for (const auto& e : r.report.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"total", e.total}, {"video", e.video}, {"point", e.point},
                      {"score", e.score}, {"feature", e.feature}, {"searches", e.searches},
                      {"sequence_accuracy", optional_json(e.sequence_accuracy)}});
    epoch_times.push_back({{"epoch", e.epoch}, {"search_seconds", e.search_seconds}, {"epoch_seconds", e.epoch_seconds}});
    searches += e.searches;
  }
  write_report(dir / "train_report.json", "train", cfg,
               {{"manifest", manifest_path}, {"videos", m.videos.size()}, {"checkpoint", "checkpoint.ptlh"},
                {"searches", searches}, {"epochs", epochs}},
               {{"total_seconds", seconds_since(t0)}, {"epochs", epoch_times}});
  std::cout << "trained " << r.report.epochs.size() << " epochs; checkpoint " << ckpt.string() << "\n";
  return 0;
}

int cmd_search(const Common& common, const TrainOverrides& ov, const std::string& manifest_path,
               const std::string& checkpoint, const std::string& video_filter, const std::string& out) {
  const config::RunConfig cfg = effective_config(common, &ov);
  const synthio::Manifest m = synthio::read_manifest(manifest_path);
  const model::HeadParams params = model::load_checkpoint(checkpoint);
  json videos = json::array();
  json timings = json::array();
  std::size_t matched = 0;
  for (const auto& v : m.videos) {
    if (!video_filter.empty() && v.video_id != video_filter) continue;
    ++matched;
    const auto t0 = Clock::now();
    const trainer::Guidance g = trainer::compute_guidance(v, params, cfg.train);
    const double secs = seconds_since(t0);
    const model::Scores s = model::evaluate(v.features, params);
    json seqs = json::array();
    for (const auto& seq : g.sequences) {
      json j = sequence_json(seq);
      j["score"] = sequence::completeness_score(s.fused.row(static_cast<std::size_t>(seq.class_id)), seq,
                                                cfg.train.loss.delta, cfg.train.variant);
      j["frame_accuracy"] = sequence::sequence_accuracy(seq, v.frame_truth(seq.class_id));
      seqs.push_back(j);
    }
    videos.push_back({{"video_id", v.video_id}, {"background_points", g.background}, {"sequences", seqs}});
    timings.push_back({{"video_id", v.video_id}, {"seconds", secs}});
  }
  if (!video_filter.empty() && matched == 0) throw InvalidArgument("video '" + video_filter + "' not in manifest");
  write_report(out, "search", cfg, {{"manifest", manifest_path}, {"checkpoint", checkpoint}, {"videos", videos}},
               {{"videos", timings}});
  return 0;
}

int cmd_infer(const Common& common, const std::string& manifest_path, const std::string& checkpoint,
              const std::string& out, const std::string& report) {
  const auto t0 = Clock::now();
  const config::RunConfig cfg = effective_config(common);
  const synthio::Manifest m = synthio::read_manifest(manifest_path);
  const model::HeadParams params = model::load_checkpoint(checkpoint);
  if (params.feature_dim() != m.feature_dim) throw DimensionError("checkpoint feature dim differs from manifest");
  std::vector<inference::Proposal> all;
  for (const auto& v : m.videos) {
    const auto p = inference::localize(v.features, params, cfg.inference, v.video_id);
    all.insert(all.end(), p.begin(), p.end());
  }
  inference::write_proposals_tsv(out, all);
  if (!report.empty()) {
    json props = json::array();
    for (const auto& p : all) {
      props.push_back({{"video_id", p.video_id}, {"class_id", p.class_id}, {"start", p.start}, {"end", p.end},
                       {"confidence", p.confidence}});
    }
    write_report(report, "infer", cfg,
                 {{"manifest", manifest_path}, {"checkpoint", checkpoint}, {"proposals_file", out},
                  {"proposals", props}},
                 {{"total_seconds", seconds_since(t0)}});
  }
  std::cout << "wrote " << all.size() << " proposals to " << out << "\n";
  return 0;
}

std::string fmt_ap(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

int cmd_eval(const Common& common, const std::string& proposals_path, const std::string& manifest_path,
             const std::string& gt_path, const std::string& out) {
  const config::RunConfig cfg = effective_config(common);
  std::vector<metrics::GroundTruthInstance> gt;
  std::size_t n_classes = 0;
  if (!manifest_path.empty() && !gt_path.empty()) throw InvalidArgument("eval takes --manifest or --gt, not both");
  if (!manifest_path.empty()) {
    const synthio::Manifest m = synthio::read_manifest(manifest_path);
    gt = synthio::ground_truth(m.videos);
    n_classes = m.num_classes;
  } else if (!gt_path.empty()) {
    for (const auto& p : inference::read_proposals_tsv(gt_path)) gt.push_back({p.video_id, p.class_id, p.start, p.end});
  } else {
    throw InvalidArgument("eval needs --manifest or --gt");
  }
  const auto proposals = inference::read_proposals_tsv(proposals_path);
  metrics::EvalOptions opts;
  opts.thresholds = cfg.eval_thresholds;
  opts.num_classes = n_classes;
  const metrics::EvalReport r = metrics::evaluate(proposals, gt, opts);

  json per_threshold = json::array();
  std::ostringstream csv;
  csv << std::setprecision(17) << "tiou,class_id,ap\n";
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    json aps = json::array();
    for (std::size_t c = 0; c < r.ap[i].size(); ++c) {
      aps.push_back(optional_json(r.ap[i][c]));
      csv << r.thresholds[i] << ',' << c << ',' << fmt_ap(r.ap[i][c]) << '\n';
    }
    per_threshold.push_back({{"tiou", r.thresholds[i]}, {"map", r.map[i]}, {"ap", aps}});
    csv << r.thresholds[i] << ",mAP," << r.map[i] << '\n';
  }
  json averages = json::array();
  for (const auto& [range, v] : r.average_map) averages.push_back({{"low", range.low}, {"high", range.high}, {"map", v}});
  json notes = json::array();
  notes.push_back("AP: non-interpolated over the ranked list; a detection matches at IoU >= threshold");
  for (int c : r.classes_without_gt) notes.push_back("class " + std::to_string(c) + " has no ground truth; excluded from mAP");
  write_report(out, "eval", cfg,
               {{"proposals_file", proposals_path}, {"per_threshold", per_threshold}, {"average_map", averages},
                {"notes", notes}},
               json::object());
  fs::path csv_path(out);
  csv_path.replace_extension(".csv");
  write_text(csv_path, csv.str());
  auto fmt = [](double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(4) << v;
    return o.str();
  };
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    std::cout << "mAP@" << r.thresholds[i] << " = " << fmt(r.map[i]) << "\n";
  }
  for (const auto& [range, v] : r.average_map) {
    std::cout << "mAP@" << range.low << ":" << range.high << " = " << fmt(v) << "\n";
  }
  return 0;
}

int cmd_analyze(const Common& common, const TrainOverrides& ov, const std::string& manifest_path,
                const std::string& checkpoint, const std::string& out_dir, std::size_t samples, bool sweep,
                const std::string& sampling) {
  const auto t0 = Clock::now();
  const config::RunConfig cfg = effective_config(common, &ov);
  const synthio::Manifest m = synthio::read_manifest(manifest_path);
  const model::HeadParams params = model::load_checkpoint(checkpoint);
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<metrics::AnalysisVideo> av;
  for (const auto& v : m.videos) av.push_back({v.video_id, model::evaluate(v.features, params).fused, v.gt});
  const metrics::ContrastAnalysis a = metrics::contrast_iou_analysis(av, samples, cfg.seed, cfg.train.loss.delta,
                                                                metrics::interval_sampling_from_string(sampling));
  metrics::write_scatter_csv((dir / "scatter.csv").string(), a);
  metrics::write_scatter_svg((dir / "scatter.svg").string(), a);
  json results = {{"samples", a.samples.size()},
                  {"sampling", sampling},
                  {"r_inner", optional_json(a.r_inner)},
                  {"r_contrast", optional_json(a.r_contrast)},
                  {"degenerate", !a.r_inner || !a.r_contrast},
                  {"scatter_csv", "scatter.csv"},
                  {"scatter_svg", "scatter.svg"}};
  json timings = {{"analysis_seconds", seconds_since(t0)}};

  if (sweep) {
    std::ostringstream csv;
    csv << std::setprecision(10) << "alpha,mean_sequence_score,mean_frame_accuracy,wall_seconds\n";
    json rows = json::array();
    json times = json::array();
    for (const auto& pt : trainer::budget_sweep(m.videos, params, cfg.train, {1, 5, 10, 25, 50, 100})) {
      csv << pt.alpha << ',' << pt.mean_sequence_score << ',' << pt.mean_frame_accuracy << ',' << pt.seconds << '\n';
      rows.push_back({{"alpha", pt.alpha},
                      {"mean_sequence_score", pt.mean_sequence_score},
                      {"mean_frame_accuracy", pt.mean_frame_accuracy}});
      times.push_back({{"alpha", pt.alpha}, {"seconds", pt.seconds}});
    }
    write_text(dir / "budget_sweep.csv", csv.str());
    results["budget_sweep"] = rows;
    results["budget_sweep_csv"] = "budget_sweep.csv";
    timings["budget_sweep"] = times;
  }
  write_report(dir / "analyze_report.json", "analyze", cfg, results, timings);
  std::cout << "r(inner, IoU) = " << (a.r_inner ? std::to_string(*a.r_inner) : "degenerate")
            << ", r(contrast, IoU) = " << (a.r_contrast ? std::to_string(*a.r_contrast) : "degenerate") << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  configure_logging();
  CLI::App app{"Point-supervised temporal action localization with completeness learning"};
  app.require_subcommand(1);

  Common common;
  TrainOverrides ov;
  std::string out, manifest, checkpoint, proposals, gt, report, video;
  std::size_t samples = 2000;
  bool sweep = false;
  std::string sampling = "anchored";

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  common.add(gen);
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  common.add(train);
  ov.add(train);
  train->add_option("--manifest", manifest, "Training manifest")->required();
  train->add_option("--out", out, "Output directory")->required();

  auto* search = app.add_subcommand("search", "Run the sequence search on a trained model's scores");
  common.add(search);
  ov.add(search);
  search->add_option("--manifest", manifest, "Dataset manifest")->required();
  search->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  search->add_option("--video", video, "Restrict to one video id");
  search->add_option("--out", out, "Report path")->required();

  auto* infer = app.add_subcommand("infer", "Localize actions");
  common.add(infer);
  infer->add_option("--manifest", manifest, "Dataset manifest")->required();
  infer->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  infer->add_option("--out", out, "Proposals TSV")->required();
  infer->add_option("--report", report, "Run report path");

  auto* eval = app.add_subcommand("eval", "Evaluate proposals");
  common.add(eval);
  eval->add_option("--proposals", proposals, "Proposals TSV")->required();
  eval->add_option("--manifest", manifest, "Manifest holding ground truth");
  eval->add_option("--gt", gt, "Ground truth TSV");
  eval->add_option("--out", out, "Report path (a CSV table is written next to it)")->required();

  auto* analyze = app.add_subcommand("analyze", "Contrast-vs-IoU analysis and budget sweep");
  common.add(analyze);
  ov.add(analyze);
  analyze->add_option("--manifest", manifest, "Dataset manifest")->required();
  analyze->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  analyze->add_option("--out", out, "Output directory")->required();
  analyze->add_option("--samples", samples, "Sampled intervals");
  analyze->add_option("--sampling", sampling, "Interval sampler: anchored | uniform");
  analyze->add_flag("--budget-sweep", sweep, "Also sweep the search budget");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; usage errors exit 2.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, out);
    if (train->parsed()) return cmd_train(common, ov, manifest, out);
    if (search->parsed()) return cmd_search(common, ov, manifest, checkpoint, video, out);
    if (infer->parsed()) return cmd_infer(common, manifest, checkpoint, out, report);
    if (eval->parsed()) return cmd_eval(common, proposals, manifest, gt, out);
    if (analyze->parsed()) return cmd_analyze(common, ov, manifest, checkpoint, out, samples, sweep, sampling);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace ptal::cli
