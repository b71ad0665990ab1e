#include "ptal/config.hpp"

#include <fstream>
#include <set>
#include <thread>

#include "ptal/error.hpp"

namespace ptal::config {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw InvalidArgument("config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw InvalidArgument("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config key '" + section + "." + key + "' has the wrong type");
  }
}

}  // namespace

void RunConfig::finalize() {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  data.seed = seed;
  train.seed = seed;
  train.workers = workers;
  data.validate();
  train.validate();
  inference.validate();
  if (eval_thresholds.empty()) throw InvalidArgument("eval thresholds are empty");
  for (double t : eval_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("eval thresholds must lie in (0, 1]");
  }
}

RunConfig from_json(const json& doc) {
  RunConfig c;
  check_keys(doc, "", {"seed", "workers", "data", "train", "loss", "inference", "eval"});
  read(doc, "seed", c.seed, "");
  read(doc, "workers", c.workers, "");

  if (auto it = doc.find("data"); it != doc.end()) {
    const json& d = *it;
    check_keys(d, "data", {"n_classes", "n_videos", "n_test_videos", "min_length", "max_length", "feature_dim",
                           "min_instances", "max_instances", "min_instance_length", "max_instance_length", "noise",
                           "margin", "edge_fade", "points"});
    auto& s = c.data;
    read(d, "n_classes", s.n_classes, "data");
    read(d, "n_videos", s.n_videos, "data");
    read(d, "n_test_videos", s.n_test_videos, "data");
    read(d, "min_length", s.min_length, "data");
    read(d, "max_length", s.max_length, "data");
    read(d, "feature_dim", s.feature_dim, "data");
    read(d, "min_instances", s.min_instances, "data");
    read(d, "max_instances", s.max_instances, "data");
    read(d, "min_instance_length", s.min_instance_length, "data");
    read(d, "max_instance_length", s.max_instance_length, "data");
    read(d, "noise", s.noise, "data");
    read(d, "margin", s.margin, "data");
    read(d, "edge_fade", s.edge_fade, "data");
    std::string points = synthio::to_string(s.points);
    read(d, "points", points, "data");
    s.points = synthio::point_distribution_from_string(points);
  }

  if (auto it = doc.find("train"); it != doc.end()) {
    const json& t = *it;
    check_keys(t, "train", {"learning_rate", "batch_size", "epochs", "alpha", "search_frequency", "variant",
                            "boundary", "mining", "eta"});
    auto& tc = c.train;
    read(t, "learning_rate", tc.learning_rate, "train");
    read(t, "batch_size", tc.batch_size, "train");
    read(t, "epochs", tc.epochs, "train");
    read(t, "alpha", tc.alpha, "train");
    read(t, "eta", tc.eta, "train");
    std::string freq = trainer::to_string(tc.search_frequency);
    std::string variant = trainer::to_string(tc.variant);
    std::string boundary = trainer::to_string(tc.boundary);
    std::string mining = trainer::to_string(tc.mining);
    read(t, "search_frequency", freq, "train");
    read(t, "variant", variant, "train");
    read(t, "boundary", boundary, "train");
    read(t, "mining", mining, "train");
    tc.search_frequency = trainer::search_frequency_from_string(freq);
    tc.variant = trainer::scoring_variant_from_string(variant);
    tc.boundary = trainer::boundary_mode_from_string(boundary);
    tc.mining = trainer::mining_mode_from_string(mining);
  }

  if (auto it = doc.find("loss"); it != doc.end()) {
    const json& l = *it;
    check_keys(l, "loss", {"beta", "tau", "delta", "lambdas", "gamma"});
    auto& lc = c.train.loss;
    read(l, "beta", lc.beta, "loss");
    read(l, "tau", lc.tau, "loss");
    read(l, "delta", lc.delta, "loss");
    read(l, "lambdas", lc.lambdas, "loss");
    read(l, "gamma", lc.gamma, "loss");
  }

  if (auto it = doc.find("inference"); it != doc.end()) {
    const json& i = *it;
    check_keys(i, "inference", {"theta_vid", "theta_seg", "nms_threshold", "delta"});
    read(i, "theta_vid", c.inference.theta_vid, "inference");
    read(i, "theta_seg", c.inference.theta_seg, "inference");
    read(i, "nms_threshold", c.inference.nms_threshold, "inference");
    read(i, "delta", c.inference.delta, "inference");
  }

  if (auto it = doc.find("eval"); it != doc.end()) {
    check_keys(*it, "eval", {"thresholds"});
    read(*it, "thresholds", c.eval_thresholds, "eval");
  }
  return c;
}

json to_json(const RunConfig& c) {
  const auto& s = c.data;
  const auto& t = c.train;
  const auto& l = c.train.loss;
  return {
      {"seed", c.seed},
      {"workers", c.workers},
      {"data",
       {{"n_classes", s.n_classes}, {"n_videos", s.n_videos}, {"n_test_videos", s.n_test_videos},
        {"min_length", s.min_length}, {"max_length", s.max_length}, {"feature_dim", s.feature_dim},
        {"min_instances", s.min_instances}, {"max_instances", s.max_instances},
        {"min_instance_length", s.min_instance_length}, {"max_instance_length", s.max_instance_length},
        {"noise", s.noise}, {"margin", s.margin}, {"edge_fade", s.edge_fade},
        {"points", synthio::to_string(s.points)}}},
      {"train",
       {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size}, {"epochs", t.epochs}, {"alpha", t.alpha},
        {"search_frequency", trainer::to_string(t.search_frequency)}, {"variant", trainer::to_string(t.variant)},
        {"boundary", trainer::to_string(t.boundary)}, {"mining", trainer::to_string(t.mining)}, {"eta", t.eta}}},
      {"loss", {{"beta", l.beta}, {"tau", l.tau}, {"delta", l.delta}, {"lambdas", l.lambdas}, {"gamma", l.gamma}}},
      {"inference",
       {{"theta_vid", c.inference.theta_vid}, {"theta_seg", c.inference.theta_seg},
        {"nms_threshold", c.inference.nms_threshold}, {"delta", c.inference.delta}}},
      {"eval", {{"thresholds", c.eval_thresholds}}},
  };
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

}  // namespace ptal::config
