#pragma once

// Localization head: embedding conv + ReLU, class and background branches
// with sigmoid, fused scores and top-k video pooling.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ptal/ndiff.hpp"

namespace ptal::model {

struct HeadParams {
  nd::ConvParams embed;       // D -> D
  nd::ConvParams classifier;  // D -> C
  nd::ConvParams background;  // D -> 1

  std::size_t feature_dim() const { return embed.in_channels(); }
  std::size_t num_classes() const { return classifier.out_channels(); }

  static HeadParams init(std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed,
                         std::size_t embed_kernel = 3, std::size_t head_kernel = 1);
  static HeadParams zeros(std::size_t feature_dim, std::size_t num_classes,
                          std::size_t embed_kernel = 3, std::size_t head_kernel = 1);

  void validate() const;

  // Tensors in declaration order, with their stable names.
  void for_each(const std::function<void(const std::string&, nd::Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const nd::Matrix&)>& fn) const;

  bool operator==(const HeadParams& other) const;
};

struct ModelOutput {
  nd::Var embedded;        // F, D x T
  nd::Var class_scores;    // P, C x T
  nd::Var background;      // Q, 1 x T
  nd::Var fused;           // P-hat, C x T
};

ModelOutput forward(nd::Tape& tape, const nd::Matrix& features, const HeadParams& params);

// Phat[c][t] = P[c][t] * (1 - Q[t]).
nd::Var fuse_scores(nd::Var class_scores, nd::Var background);
nd::Matrix fuse_scores(const nd::Matrix& class_scores, const nd::Matrix& background);

// k = max(1, floor(T / 8)).
std::size_t topk_count(std::size_t length);
nd::Var video_scores(nd::Var fused);
std::vector<double> video_scores(const nd::Matrix& fused);

// Plain values of one forward pass, for evaluation code paths.
struct Scores {
  nd::Matrix embedded;
  nd::Matrix class_scores;
  nd::Matrix background;
  nd::Matrix fused;
  std::vector<double> video;
};
Scores evaluate(const nd::Matrix& features, const HeadParams& params);

// Binary checkpoint: "PTLH", u32 version, u32 D, C, embed/classifier/background
// kernels, then every tensor as little-endian f64 in declaration order.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const HeadParams& params);
HeadParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ptal::model
