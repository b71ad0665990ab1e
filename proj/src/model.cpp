#include "ptal/model.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include "binio.hpp"
#include "ptal/error.hpp"
#include "ptal/rng.hpp"

namespace ptal::model {

HeadParams HeadParams::init(std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed,
                            std::size_t embed_kernel, std::size_t head_kernel) {
  HeadParams p{
      nd::ConvParams::uniform(feature_dim, feature_dim, embed_kernel, derive_seed({seed, 1})),
      nd::ConvParams::uniform(feature_dim, num_classes, head_kernel, derive_seed({seed, 2})),
      nd::ConvParams::uniform(feature_dim, 1, head_kernel, derive_seed({seed, 3}))};
  p.validate();
  return p;
}

HeadParams HeadParams::zeros(std::size_t feature_dim, std::size_t num_classes,
                             std::size_t embed_kernel, std::size_t head_kernel) {
  return HeadParams{nd::ConvParams::zeros(feature_dim, feature_dim, embed_kernel),
                    nd::ConvParams::zeros(feature_dim, num_classes, head_kernel),
                    nd::ConvParams::zeros(feature_dim, 1, head_kernel)};
}

void HeadParams::validate() const {
  embed.validate();
  classifier.validate();
  background.validate();
  const std::size_t d = embed.in_channels();
  if (embed.out_channels() != d || classifier.in_channels() != d ||
      background.in_channels() != d || background.out_channels() != 1) {
    throw DimensionError("head parameters disagree on feature dimension " + std::to_string(d));
  }
}

void HeadParams::for_each(const std::function<void(const std::string&, nd::Matrix&)>& fn) {
  fn("embed.weight", embed.weight);
  fn("embed.bias", embed.bias);
  fn("classifier.weight", classifier.weight);
  fn("classifier.bias", classifier.bias);
  fn("background.weight", background.weight);
  fn("background.bias", background.bias);
}

void HeadParams::for_each(
    const std::function<void(const std::string&, const nd::Matrix&)>& fn) const {
  const_cast<HeadParams*>(this)->for_each(
      [&](const std::string& name, nd::Matrix& m) { fn(name, m); });
}

bool HeadParams::operator==(const HeadParams& o) const {
  return embed.weight == o.embed.weight && embed.bias == o.embed.bias &&
         embed.kernel == o.embed.kernel && classifier.weight == o.classifier.weight &&
         classifier.bias == o.classifier.bias && classifier.kernel == o.classifier.kernel &&
         background.weight == o.background.weight && background.bias == o.background.bias &&
         background.kernel == o.background.kernel;
}

nd::Var fuse_scores(nd::Var class_scores, nd::Var background) {
  const std::size_t c = class_scores.value().rows();
  if (background.value().rows() != 1 || background.value().cols() != class_scores.value().cols()) {
    throw DimensionError("fuse_scores: background " + background.value().shape_string() +
                         " does not match class scores " + class_scores.value().shape_string());
  }
  return nd::mul(class_scores, nd::broadcast_rows(nd::one_minus(background), c));
}

nd::Matrix fuse_scores(const nd::Matrix& class_scores, const nd::Matrix& background) {
  if (background.size() != class_scores.cols()) {
    throw DimensionError("fuse_scores: background " + background.shape_string() +
                         " does not match class scores " + class_scores.shape_string());
  }
  nd::Matrix out = class_scores;
  for (std::size_t c = 0; c < out.rows(); ++c) {
    for (std::size_t t = 0; t < out.cols(); ++t) out(c, t) *= 1.0 - background[t];
  }
  return out;
}

std::size_t topk_count(std::size_t length) { return std::max<std::size_t>(1, length / 8); }

nd::Var video_scores(nd::Var fused) {
  return nd::topk_mean_rows(fused, topk_count(fused.value().cols()));
}

std::vector<double> video_scores(const nd::Matrix& fused) {
  const std::size_t k = topk_count(fused.cols());
  std::vector<double> out(fused.rows());
  for (std::size_t c = 0; c < fused.rows(); ++c) {
    std::vector<double> row(fused.row(c).begin(), fused.row(c).end());
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(),
                      std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += row[i];
    out[c] = s / static_cast<double>(k);
  }
  return out;
}

ModelOutput forward(nd::Tape& tape, const nd::Matrix& features, const HeadParams& params) {
  if (features.cols() == 0) throw DimensionError("forward: video has zero segments");
  if (features.rows() != params.feature_dim()) {
    throw DimensionError("forward: features have D=" + std::to_string(features.rows()) +
                         " but the head expects D=" + std::to_string(params.feature_dim()));
  }
  if (!features.all_finite()) throw InvalidArgument("forward: features contain NaN or Inf");
  const nd::Var x = tape.constant(features);
  auto conv = [&tape](nd::Var in, const nd::ConvParams& p, const std::string& name) {
    return nd::conv1d(in, tape.parameter(name + ".weight", p.weight),
                      tape.parameter(name + ".bias", p.bias), p.kernel);
  };
  ModelOutput out;
  out.embedded = nd::relu(conv(x, params.embed, "embed"));
  out.class_scores = nd::sigmoid(conv(out.embedded, params.classifier, "classifier"));
  out.background = nd::sigmoid(conv(out.embedded, params.background, "background"));
  out.fused = fuse_scores(out.class_scores, out.background);
  return out;
}

Scores evaluate(const nd::Matrix& features, const HeadParams& params) {
  nd::Tape tape;
  const ModelOutput out = forward(tape, features, params);
  Scores s{out.embedded.value(), out.class_scores.value(), out.background.value(),
           out.fused.value(), {}};
  s.video = video_scores(s.fused);
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const HeadParams& params) {
  params.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write("PTLH", 4);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(params.feature_dim()));
  binio::put_u32(out, static_cast<std::uint32_t>(params.num_classes()));
  binio::put_u32(out, static_cast<std::uint32_t>(params.embed.kernel));
  binio::put_u32(out, static_cast<std::uint32_t>(params.classifier.kernel));
  binio::put_u32(out, static_cast<std::uint32_t>(params.background.kernel));
  params.for_each([&](const std::string&, const nd::Matrix& m) {
    for (double v : m.values()) binio::put_f64(out, v);
  });
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

HeadParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  const std::string what = "checkpoint " + path.string();
  binio::expect_magic(in, "PTLH", what);
  const std::uint32_t version = binio::get_u32(in, what);
  if (version != kCheckpointVersion) {
    throw BadVersionError(what + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t d = binio::get_u32(in, what);
  const std::uint32_t c = binio::get_u32(in, what);
  const std::uint32_t ke = binio::get_u32(in, what);
  const std::uint32_t kc = binio::get_u32(in, what);
  const std::uint32_t kb = binio::get_u32(in, what);
  if (d == 0 || c == 0 || ke % 2 == 0 || kc % 2 == 0 || kb % 2 == 0 || kc != kb) {
    throw FormatError(what + ": invalid header dimensions");
  }
  HeadParams params = HeadParams::zeros(d, c, ke, kc);
  params.for_each([&](const std::string&, nd::Matrix& m) {
    for (double& v : m.values()) v = binio::get_f64(in, what);
  });
  return params;
}

}  // namespace ptal::model
