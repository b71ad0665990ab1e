#include "ptal/synthio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "binio.hpp"
#include "ptal/error.hpp"
#include "ptal/rng.hpp"

namespace ptal::synthio {

namespace fs = std::filesystem;
using nlohmann::json;

void SyntheticSpec::validate() const {
  if (n_classes == 0) throw InvalidArgument("n_classes must be positive");
  if (feature_dim == 0) throw InvalidArgument("feature_dim must be positive");
  if (feature_dim < n_classes + 1) throw InvalidArgument("feature_dim must exceed n_classes");
  if (min_length == 0 || min_length > max_length) throw InvalidArgument("invalid video length range");
  if (min_instances == 0 || min_instances > max_instances) throw InvalidArgument("invalid instance count range");
  if (min_instance_length == 0 || min_instance_length > max_instance_length) {
    throw InvalidArgument("invalid instance length range");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidArgument("noise must be finite and non-negative");
  if (!(margin > 0.0) || !std::isfinite(margin)) throw InvalidArgument("margin must be positive");
  if (!(edge_fade >= 0.0 && edge_fade < 0.5)) throw InvalidArgument("edge_fade must lie in [0, 0.5)");
}

std::vector<int> VideoRecord::frame_truth(int class_id) const {
  std::vector<int> z(length(), 0);
  for (const auto& g : gt) {
    if (g.class_id != class_id) continue;
    for (std::size_t t = g.start; t <= g.end && t <= z.size(); ++t) z[t - 1] = 1;
  }
  return z;
}

namespace {

std::vector<double> gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) throw NumericalError("prototype generation produced a zero vector");
  for (double& x : v) x /= n;
}

struct Prototypes {
  std::vector<double> background;
  std::vector<std::vector<double>> classes;
};

Prototypes make_prototypes(const SyntheticSpec& spec) {
  std::mt19937_64 rng(derive_seed({spec.seed, hash_string("prototypes")}));
  Prototypes p;
  p.background = gaussian_vector(spec.feature_dim, rng);
  normalize(p.background);
  std::vector<std::vector<double>> basis{p.background};
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    std::vector<double> r = gaussian_vector(spec.feature_dim, rng);
    for (const auto& b : basis) {
      const double proj = dot(r, b);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= proj * b[i];
    }
    normalize(r);
    basis.push_back(r);
    std::vector<double> proto(spec.feature_dim);
    for (std::size_t i = 0; i < proto.size(); ++i) proto[i] = p.background[i] + spec.margin * r[i];
    normalize(proto);
    p.classes.push_back(std::move(proto));
  }
  return p;
}

std::vector<metrics::GroundTruthInstance> place_instances(const SyntheticSpec& spec, std::size_t length,
                                                          const std::string& video_id,
                                                          std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int attempt = 0; attempt < 100; ++attempt) {
    const std::size_t k = pick(spec.min_instances, spec.max_instances);
    std::vector<std::size_t> lens(k);
    std::size_t used = k - 1;
    for (auto& l : lens) {
      l = pick(spec.min_instance_length, spec.max_instance_length);
      used += l;
    }
    if (used > length) continue;
    std::vector<std::size_t> gaps(k + 1, 0);
    for (std::size_t u = 0; u < length - used; ++u) ++gaps[pick(0, k)];
    std::vector<metrics::GroundTruthInstance> out;
    std::size_t t = 1 + gaps[0];
    for (std::size_t i = 0; i < k; ++i) {
      const int cls = static_cast<int>(pick(0, spec.n_classes - 1));
      out.push_back(metrics::GroundTruthInstance{video_id, cls, t, t + lens[i] - 1});
      t += lens[i] + 1 + gaps[i + 1];
    }
    return out;
  }
  throw InvalidArgument("cannot pack instances into a video of length " + std::to_string(length) +
                        " after 100 attempts; shorten instances or lengthen videos");
}

VideoRecord make_video(const SyntheticSpec& spec, const Prototypes& protos, const std::string& video_id,
                       std::uint64_t index) {
  std::mt19937_64 rng(derive_seed({spec.seed, hash_string("video"), index}));
  const std::size_t T = std::uniform_int_distribution<std::size_t>(spec.min_length, spec.max_length)(rng);
  VideoRecord v;
  v.video_id = video_id;
  v.gt = place_instances(spec, T, video_id, rng);

  const std::size_t D = spec.feature_dim;
  std::vector<double> strength(T, 0.0);
  std::vector<int> cls(T, -1);
  for (const auto& g : v.gt) {
    const std::size_t L = g.end - g.start + 1;
    const auto ramp = static_cast<std::size_t>(std::floor(spec.edge_fade * static_cast<double>(L)));
    for (std::size_t j = 0; j < L; ++j) {
      const std::size_t d = std::min(j, L - 1 - j);
      strength[g.start - 1 + j] =
          d < ramp ? static_cast<double>(d + 1) / static_cast<double>(ramp + 1) : 1.0;
      cls[g.start - 1 + j] = g.class_id;
    }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  v.features = nd::Matrix(D, T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      double base = protos.background[d];
      if (cls[t] >= 0) base = strength[t] * protos.classes[cls[t]][d] + (1.0 - strength[t]) * base;
      const double x = base + spec.noise * noise(rng);
      v.features(d, t) = static_cast<double>(static_cast<float>(x));
    }
  }
  v.points = sample_points(v.gt, spec.points, derive_seed({spec.seed, hash_string("points"), index}));
  return v;
}

std::string video_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

}  // namespace

Dataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.num_classes = spec.n_classes;
  ds.feature_dim = spec.feature_dim;
  const Prototypes protos = make_prototypes(spec);
  for (std::size_t i = 0; i < spec.n_videos; ++i) {
    ds.train.push_back(make_video(spec, protos, video_name("train", i), i));
  }
  for (std::size_t i = 0; i < spec.n_test_videos; ++i) {
    ds.test.push_back(make_video(spec, protos, video_name("test", i), spec.n_videos + i));
  }
  return ds;
}

mining::PointSet sample_points(const std::vector<metrics::GroundTruthInstance>& gts,
                               PointDistribution distribution, std::uint64_t seed) {
  if (gts.empty()) throw InvalidArgument("sample_points: no ground truth instances");
  std::mt19937_64 rng(seed);
  mining::PointSet ps;
  for (const auto& g : gts) {
    if (g.end < g.start || g.start < 1) throw InvalidArgument("sample_points: invalid instance span");
    std::size_t t = g.start;
    if (distribution == PointDistribution::uniform) {
      t = std::uniform_int_distribution<std::size_t>(g.start, g.end)(rng);
    } else {
      const double mid = 0.5 * static_cast<double>(g.start + g.end);
      const double sigma = static_cast<double>(g.end - g.start + 1) / 6.0;
      const double x = std::round(std::normal_distribution<double>(mid, sigma)(rng));
      t = static_cast<std::size_t>(
          std::clamp(x, static_cast<double>(g.start), static_cast<double>(g.end)));
    }
    ps.action.push_back(mining::PointAnnotation{t, g.class_id});
  }
  std::sort(ps.action.begin(), ps.action.end(),
            [](const auto& a, const auto& b) { return a.t < b.t; });
  for (std::size_t i = 1; i < ps.action.size(); ++i) {
    if (ps.action[i].t == ps.action[i - 1].t) {
      throw InvalidArgument("sample_points: overlapping instances produced a shared point");
    }
  }
  return ps;
}

void write_features(const fs::path& path, const nd::Matrix& features) {
  if (features.rows() == 0 || features.cols() == 0) throw InvalidArgument("write_features: empty matrix");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open feature file for writing: " + path.string());
  out.write("PTAL", 4);
  binio::put_u32(out, kFeatureVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(features.cols()));
  binio::put_u32(out, static_cast<std::uint32_t>(features.rows()));
  for (std::size_t t = 0; t < features.cols(); ++t) {
    for (std::size_t d = 0; d < features.rows(); ++d) binio::put_f32(out, static_cast<float>(features(d, t)));
  }
  if (!out) throw IoError("failed writing feature file: " + path.string());
}

nd::Matrix read_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path.string());
  const std::string what = "feature file " + path.string();
  binio::expect_magic(in, "PTAL", what);
  const std::uint32_t version = binio::get_u32(in, what);
  if (version != kFeatureVersion) throw BadVersionError(what + ": unsupported version " + std::to_string(version));
  const std::uint32_t T = binio::get_u32(in, what);
  const std::uint32_t D = binio::get_u32(in, what);
  if (T == 0 || D == 0) throw FormatError(what + ": zero dimension in header");
  nd::Matrix m(D, T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) m(d, t) = static_cast<double>(binio::get_f32(in, what));
  }
  return m;
}

namespace {

json video_to_json(const VideoRecord& v, const std::string& feature_path) {
  json gt = json::array();
  for (const auto& g : v.gt) gt.push_back({{"class_id", g.class_id}, {"start", g.start}, {"end", g.end}});
  json points = json::array();
  for (const auto& p : v.points.action) points.push_back({{"t", p.t}, {"label", p.label}});
  return {{"video_id", v.video_id}, {"feature_path", feature_path}, {"T", v.length()},
          {"D", v.features.rows()}, {"gt", gt}, {"points", points}};
}

}  // namespace

void write_manifest(const fs::path& manifest_path, const fs::path& feature_dir, const Manifest& manifest) {
  std::error_code ec;
  fs::create_directories(feature_dir, ec);
  if (ec) throw IoError("cannot create feature directory " + feature_dir.string() + ": " + ec.message());
  const fs::path base = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  json doc = {{"format", "ptal-manifest"}, {"version", 1}, {"num_classes", manifest.num_classes},
              {"feature_dim", manifest.feature_dim}, {"videos", json::array()}};
  for (const auto& v : manifest.videos) {
    const fs::path file = feature_dir / (v.video_id + ".ptal");
    write_features(file, v.features);
    doc["videos"].push_back(video_to_json(v, fs::relative(file, base).generic_string()));
  }
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest for writing: " + manifest_path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest: " + manifest_path.string());
}

Manifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  const std::string what = "manifest " + manifest_path.string();
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
  const fs::path base = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  Manifest m;
  try {
    if (doc.at("format").get<std::string>() != "ptal-manifest") throw FormatError(what + ": wrong format tag");
    if (doc.at("version").get<int>() != 1) throw BadVersionError(what + ": unsupported version");
    m.num_classes = doc.at("num_classes").get<std::size_t>();
    m.feature_dim = doc.at("feature_dim").get<std::size_t>();
    for (const auto& jv : doc.at("videos")) {
      VideoRecord v;
      v.video_id = jv.at("video_id").get<std::string>();
      v.features = read_features(base / jv.at("feature_path").get<std::string>());
      if (v.features.cols() != jv.at("T").get<std::size_t>() || v.features.rows() != jv.at("D").get<std::size_t>()) {
        throw FormatError(what + ": shape of " + v.video_id + " disagrees with its feature file");
      }
      if (v.features.rows() != m.feature_dim) throw FormatError(what + ": feature_dim mismatch for " + v.video_id);
      for (const auto& g : jv.at("gt")) {
        v.gt.push_back(metrics::GroundTruthInstance{v.video_id, g.at("class_id").get<int>(),
                                                    g.at("start").get<std::size_t>(),
                                                    g.at("end").get<std::size_t>()});
      }
      for (const auto& p : jv.at("points")) {
        v.points.action.push_back(mining::PointAnnotation{p.at("t").get<std::size_t>(), p.at("label").get<int>()});
      }
      v.points.validate(v.length());
      for (const auto& p : v.points.action) {
        if (p.label < 0 || static_cast<std::size_t>(p.label) >= m.num_classes) {
          throw FormatError(what + ": point label out of range in " + v.video_id);
        }
      }
      m.videos.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw FormatError(what + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
  return m;
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  write_manifest(dir / "train.json", dir / "features", Manifest{dataset.num_classes, dataset.feature_dim, dataset.train});
  write_manifest(dir / "test.json", dir / "features", Manifest{dataset.num_classes, dataset.feature_dim, dataset.test});
}

std::vector<metrics::GroundTruthInstance> ground_truth(const std::vector<VideoRecord>& videos) {
  std::vector<metrics::GroundTruthInstance> out;
  for (const auto& v : videos) out.insert(out.end(), v.gt.begin(), v.gt.end());
  return out;
}

std::string to_string(PointDistribution d) { return d == PointDistribution::uniform ? "uniform" : "gaussian"; }

PointDistribution point_distribution_from_string(const std::string& s) {
  if (s == "uniform") return PointDistribution::uniform;
  if (s == "gaussian") return PointDistribution::gaussian;
  throw InvalidArgument("unknown point distribution '" + s + "' (expected uniform or gaussian)");
}

}  // namespace ptal::synthio
