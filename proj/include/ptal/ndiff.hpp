#pragma once

// Minimal dense numerics with reverse-mode differentiation.
//
// Values live in row-major double matrices. A Tape records every operation
// applied to its Vars; Tape::backward walks the record in exact reverse order
// and accumulates gradients, including into named parameter slots.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ptal::nd {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix column(std::vector<double> values);
  static Matrix row_vector(std::vector<double> values);
  static Matrix scalar(double value) { return Matrix(1, 1, value); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }
  std::vector<double> column_copy(std::size_t c) const;

  bool all_finite() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Weight tensor [out x in x kernel] stored as Matrix(out, in * kernel) with
// element (o, i * kernel + j). Padding is (kernel - 1) / 2 on both sides.
struct ConvParams {
  Matrix weight;
  Matrix bias;  // out x 1
  std::size_t kernel = 1;

  std::size_t out_channels() const { return weight.rows(); }
  std::size_t in_channels() const { return kernel == 0 ? 0 : weight.cols() / kernel; }
  std::size_t padding() const { return (kernel - 1) / 2; }

  static ConvParams zeros(std::size_t in, std::size_t out, std::size_t kernel);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], fan_in = in * kernel.
  static ConvParams uniform(std::size_t in, std::size_t out, std::size_t kernel,
                            std::uint64_t seed);
  void validate() const;
};

class Tape;

// Handle to a node of a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Matrix& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Receives the gradient flowing into a node's output and adds the
// contribution to each parent gradient. Parent gradients that are not
// needed arrive as nullptr.
using BackwardFn =
    std::function<void(const Matrix& upstream, std::span<Matrix* const> parent_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // A leaf whose gradient is accumulated into parameter_grads()[name].
  Var parameter(const std::string& name, const Matrix& value);
  Var record(Matrix value, std::vector<Var> parents, BackwardFn backward);

  void backward(Var loss, double seed = 1.0);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  const std::map<std::string, Matrix>& parameter_grads() const { return param_grads_; }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool needs_grad = false;
    std::string param_name;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::map<std::string, Matrix> param_grads_;
  bool backward_done_ = false;
};

// Zero-padded 1D cross-correlation over the temporal (column) axis.
Var conv1d(Var input, Var weight, Var bias, std::size_t kernel);
Matrix conv1d(const Matrix& input, const ConvParams& params);

enum class Activation { relu, sigmoid };
Var activation(Var input, Activation kind);
Var relu(Var input);
Var sigmoid(Var input);
double stable_sigmoid(double x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var one_minus(Var a);
Var square(Var a);
Var sum(Var a);
// Repeats a 1 x T row `rows` times.
Var broadcast_rows(Var row, std::size_t rows);
Var select_row(Var a, std::size_t r);
// Per row, the mean of the k largest entries; returns rows x 1.
Var topk_mean_rows(Var a, std::size_t k);
// Sum of w_i * x_i over 1x1 scalars.
Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

struct LossAndGrad {
  double value = 0.0;
  std::vector<double> grad;
};
using LossFn = std::function<LossAndGrad(std::span<const double> theta)>;

struct FiniteDiffResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_coordinate = 0;
};

// Central differences on up to `max_coordinates` randomly chosen coordinates
// (all of them when theta is smaller). Relative error per coordinate uses the
// denominator max(|analytic|, |numeric|, 1e-8).
FiniteDiffResult finite_diff_check(const LossFn& loss_fn, std::vector<double> theta, double h,
                                   std::size_t max_coordinates = 100, std::uint64_t seed = 0);

}  // namespace ptal::nd
