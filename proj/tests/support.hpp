#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "ptal/ndiff.hpp"
#include "ptal/rng.hpp"

namespace support {

using Build = std::function<ptal::nd::Var(ptal::nd::Tape&, ptal::nd::Var)>;

// Max relative error between the tape gradient of build(x) and central
// differences, over every coordinate of x.
inline double grad_error(const ptal::nd::Matrix& x0, const Build& build, double h = 1e-6) {
  const std::size_t r = x0.rows(), c = x0.cols();
  auto fn = [&](std::span<const double> theta) {
    ptal::nd::Tape tape;
    ptal::nd::Matrix x(r, c, std::vector<double>(theta.begin(), theta.end()));
    ptal::nd::Var xv = tape.parameter("x", x);
    ptal::nd::Var loss = build(tape, xv);
    tape.backward(loss);
    auto g = tape.parameter_grads().at("x").values();
    return ptal::nd::LossAndGrad{loss.value()[0], std::vector<double>(g.begin(), g.end())};
  };
  std::vector<double> theta(x0.values().begin(), x0.values().end());
  return ptal::nd::finite_diff_check(fn, theta, h, 1000).max_relative_error;
}

// Reduces any Var to a scalar with fixed pseudo-random weights, so every
// output entry contributes a distinct gradient.
inline ptal::nd::Var weighted_total(ptal::nd::Tape& tape, ptal::nd::Var v, std::uint64_t seed = 7) {
  ptal::nd::Matrix w(v.value().rows(), v.value().cols());
  std::size_t i = 0;
  for (double& x : w.values()) x = 0.5 + static_cast<double>(ptal::mix64(seed + i++) % 1000) / 1000.0;
  return ptal::nd::sum(ptal::nd::mul(v, tape.constant(w)));
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ptal_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace support
