#include "ptal/ndiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ptal/error.hpp"

namespace ptal::nd {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    std::ostringstream msg;
    msg << "matrix " << rows << "x" << cols << " given " << values_.size() << " values";
    throw DimensionError(msg.str());
  }
}

Matrix Matrix::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(n, 1, std::move(values));
}

Matrix Matrix::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(1, n, std::move(values));
}

std::vector<double> Matrix::column_copy(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

bool Matrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

ConvParams ConvParams::zeros(std::size_t in, std::size_t out, std::size_t kernel) {
  ConvParams p{Matrix(out, in * kernel), Matrix(out, 1), kernel};
  p.validate();
  return p;
}

ConvParams ConvParams::uniform(std::size_t in, std::size_t out, std::size_t kernel,
                               std::uint64_t seed) {
  ConvParams p = zeros(in, out, kernel);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : p.weight.values()) w = dist(rng);
  for (double& b : p.bias.values()) b = dist(rng);
  return p;
}

void ConvParams::validate() const {
  if (kernel == 0 || kernel % 2 == 0) {
    throw InvalidArgument("conv kernel must be odd, got " + std::to_string(kernel));
  }
  if (weight.cols() % kernel != 0) {
    throw DimensionError("conv weight " + weight.shape_string() +
                         " is not divisible by kernel " + std::to_string(kernel));
  }
  if (bias.rows() != weight.rows() || bias.cols() != 1) {
    throw DimensionError("conv bias " + bias.shape_string() + " does not match weight " +
                         weight.shape_string());
  }
}

// --- Tape -------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, const Matrix& value) {
  Node n;
  n.value = value;
  n.needs_grad = true;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(backward);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw InvalidArgument("operand belongs to a different tape");
    n.parents.push_back(p.index());
    n.needs_grad = n.needs_grad || nodes_[p.index()].needs_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || &v.tape() != this || v.index() >= nodes_.size()) {
    throw InvalidArgument("variable does not belong to this tape");
  }
  return nodes_[v.index()];
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

const Matrix& Tape::grad(Var v) const {
  if (!backward_done_) throw InvalidArgument("gradient requested before backward");
  return node(v).grad;
}

void Tape::backward(Var loss, double seed) {
  if (nodes_.empty()) throw InvalidArgument("backward called on an empty tape");
  const Node& out = node(loss);
  if (out.value.size() != 1) {
    throw DimensionError("backward needs a scalar loss, got " + out.value.shape_string());
  }
  for (Node& n : nodes_) {
    n.grad = n.needs_grad ? Matrix(n.value.rows(), n.value.cols()) : Matrix();
  }
  param_grads_.clear();
  if (nodes_[loss.index()].needs_grad) nodes_[loss.index()].grad[0] = seed;

  std::vector<Matrix*> parent_grads;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward) continue;
    parent_grads.clear();
    for (std::size_t p : n.parents) {
      parent_grads.push_back(nodes_[p].needs_grad ? &nodes_[p].grad : nullptr);
    }
    n.backward(n.grad, parent_grads);
  }
  for (const Node& n : nodes_) {
    if (n.param_name.empty()) continue;
    auto [it, inserted] = param_grads_.try_emplace(n.param_name, n.grad);
    if (!inserted) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) it->second[k] += n.grad[k];
    }
  }
  backward_done_ = true;
}

// --- Operations -------------------------------------------------------------

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shapes " + a.shape_string() + " and " +
                         b.shape_string() + " differ");
  }
}

Matrix conv_forward(const Matrix& x, const Matrix& w, const Matrix& b, std::size_t kernel) {
  const std::size_t in = x.rows();
  const std::size_t len = x.cols();
  const std::size_t out = w.rows();
  const auto pad = static_cast<std::ptrdiff_t>((kernel - 1) / 2);
  Matrix y(out, len);
  for (std::size_t o = 0; o < out; ++o) {
    double* yrow = &y(o, 0);
    std::fill(yrow, yrow + len, b(o, 0));
    for (std::size_t i = 0; i < in; ++i) {
      const double* xrow = x.row(i).data();
      for (std::size_t j = 0; j < kernel; ++j) {
        const double wv = w(o, i * kernel + j);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 =
            std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(len), static_cast<std::ptrdiff_t>(len) - shift);
        for (std::ptrdiff_t t = t0; t < t1; ++t) yrow[t] += wv * xrow[t + shift];
      }
    }
  }
  return y;
}

void check_conv_shapes(const Matrix& x, const Matrix& w, const Matrix& b, std::size_t kernel) {
  if (kernel == 0 || kernel % 2 == 0) {
    throw InvalidArgument("conv kernel must be odd, got " + std::to_string(kernel));
  }
  if (x.cols() == 0) throw DimensionError("conv1d input has zero temporal length");
  if (w.cols() != x.rows() * kernel) {
    throw DimensionError("conv1d: input has " + std::to_string(x.rows()) +
                         " channels but weight " + w.shape_string() + " expects " +
                         std::to_string(w.cols() / kernel) + " (kernel " +
                         std::to_string(kernel) + ")");
  }
  if (b.rows() != w.rows() || b.cols() != 1) {
    throw DimensionError("conv1d: bias " + b.shape_string() + " does not match " +
                         std::to_string(w.rows()) + " output channels");
  }
}

}  // namespace

Var conv1d(Var input, Var weight, Var bias, std::size_t kernel) {
  const Matrix& x = input.value();
  const Matrix& w = weight.value();
  const Matrix& b = bias.value();
  check_conv_shapes(x, w, b, kernel);
  Matrix y = conv_forward(x, w, b, kernel);
  return input.tape().record(
      std::move(y), {input, weight, bias},
      [x, w, kernel](const Matrix& g, std::span<Matrix* const> grads) {
        const std::size_t in = x.rows();
        const std::size_t len = x.cols();
        const std::size_t out = w.rows();
        const auto pad = static_cast<std::ptrdiff_t>((kernel - 1) / 2);
        Matrix* gx = grads[0];
        Matrix* gw = grads[1];
        Matrix* gb = grads[2];
        for (std::size_t o = 0; o < out; ++o) {
          const double* grow = g.row(o).data();
          if (gb) {
            double s = 0.0;
            for (std::size_t t = 0; t < len; ++t) s += grow[t];
            (*gb)(o, 0) += s;
          }
          for (std::size_t i = 0; i < in; ++i) {
            const double* xrow = x.row(i).data();
            for (std::size_t j = 0; j < kernel; ++j) {
              const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
              const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
              const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(
                  static_cast<std::ptrdiff_t>(len), static_cast<std::ptrdiff_t>(len) - shift);
              if (gw) {
                double s = 0.0;
                for (std::ptrdiff_t t = t0; t < t1; ++t) s += grow[t] * xrow[t + shift];
                (*gw)(o, i * kernel + j) += s;
              }
              if (gx) {
                const double wv = w(o, i * kernel + j);
                double* gxrow = &(*gx)(i, 0);
                for (std::ptrdiff_t t = t0; t < t1; ++t) gxrow[t + shift] += wv * grow[t];
              }
            }
          }
        }
      });
}

Matrix conv1d(const Matrix& input, const ConvParams& params) {
  check_conv_shapes(input, params.weight, params.bias, params.kernel);
  return conv_forward(input, params.weight, params.bias, params.kernel);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var relu(Var input) {
  Matrix y = input.value();
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  Matrix mask = y;
  for (double& v : mask.values()) v = v > 0.0 ? 1.0 : 0.0;
  return input.tape().record(std::move(y), {input},
                             [mask](const Matrix& g, std::span<Matrix* const> grads) {
                               if (!grads[0]) return;
                               for (std::size_t k = 0; k < g.size(); ++k) {
                                 (*grads[0])[k] += g[k] * mask[k];
                               }
                             });
}

Var sigmoid(Var input) {
  Matrix y = input.value();
  for (double& v : y.values()) v = stable_sigmoid(v);
  Matrix saved = y;
  return input.tape().record(std::move(y), {input},
                             [saved](const Matrix& g, std::span<Matrix* const> grads) {
                               if (!grads[0]) return;
                               for (std::size_t k = 0; k < g.size(); ++k) {
                                 (*grads[0])[k] += g[k] * saved[k] * (1.0 - saved[k]);
                               }
                             });
}

Var activation(Var input, Activation kind) {
  return kind == Activation::relu ? relu(input) : sigmoid(input);
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += b.value()[k];
  return a.tape().record(std::move(y), {a, b},
                         [](const Matrix& g, std::span<Matrix* const> grads) {
                           for (Matrix* pg : grads) {
                             if (!pg) continue;
                             for (std::size_t k = 0; k < g.size(); ++k) (*pg)[k] += g[k];
                           }
                         });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] -= b.value()[k];
  return a.tape().record(std::move(y), {a, b},
                         [](const Matrix& g, std::span<Matrix* const> grads) {
                           if (grads[0]) {
                             for (std::size_t k = 0; k < g.size(); ++k) (*grads[0])[k] += g[k];
                           }
                           if (grads[1]) {
                             for (std::size_t k = 0; k < g.size(); ++k) (*grads[1])[k] -= g[k];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  const Matrix av = a.value();
  const Matrix bv = b.value();
  Matrix y = av;
  for (std::size_t k = 0; k < y.size(); ++k) y[k] *= bv[k];
  return a.tape().record(std::move(y), {a, b},
                         [av, bv](const Matrix& g, std::span<Matrix* const> grads) {
                           if (grads[0]) {
                             for (std::size_t k = 0; k < g.size(); ++k) (*grads[0])[k] += g[k] * bv[k];
                           }
                           if (grads[1]) {
                             for (std::size_t k = 0; k < g.size(); ++k) (*grads[1])[k] += g[k] * av[k];
                           }
                         });
}

Var scale(Var a, double factor) {
  Matrix y = a.value();
  for (double& v : y.values()) v *= factor;
  return a.tape().record(std::move(y), {a},
                         [factor](const Matrix& g, std::span<Matrix* const> grads) {
                           if (!grads[0]) return;
                           for (std::size_t k = 0; k < g.size(); ++k) (*grads[0])[k] += factor * g[k];
                         });
}

Var one_minus(Var a) {
  Matrix y = a.value();
  for (double& v : y.values()) v = 1.0 - v;
  return a.tape().record(std::move(y), {a},
                         [](const Matrix& g, std::span<Matrix* const> grads) {
                           if (!grads[0]) return;
                           for (std::size_t k = 0; k < g.size(); ++k) (*grads[0])[k] -= g[k];
                         });
}

Var square(Var a) {
  const Matrix av = a.value();
  Matrix y = av;
  for (double& v : y.values()) v *= v;
  return a.tape().record(std::move(y), {a},
                         [av](const Matrix& g, std::span<Matrix* const> grads) {
                           if (!grads[0]) return;
                           for (std::size_t k = 0; k < g.size(); ++k) (*grads[0])[k] += 2.0 * av[k] * g[k];
                         });
}

Var sum(Var a) {
  const auto vals = a.value().values();
  const double s = std::accumulate(vals.begin(), vals.end(), 0.0);
  return a.tape().record(Matrix::scalar(s), {a},
                         [](const Matrix& g, std::span<Matrix* const> grads) {
                           if (!grads[0]) return;
                           for (double& v : grads[0]->values()) v += g[0];
                         });
}

Var broadcast_rows(Var row, std::size_t rows) {
  const Matrix& r = row.value();
  if (r.rows() != 1) throw DimensionError("broadcast_rows expects a 1xT row, got " + r.shape_string());
  Matrix y(rows, r.cols());
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy(r.values().begin(), r.values().end(), &y(i, 0));
  }
  return row.tape().record(std::move(y), {row},
                           [](const Matrix& g, std::span<Matrix* const> grads) {
                             if (!grads[0]) return;
                             for (std::size_t i = 0; i < g.rows(); ++i) {
                               for (std::size_t t = 0; t < g.cols(); ++t) (*grads[0])(0, t) += g(i, t);
                             }
                           });
}

Var select_row(Var a, std::size_t r) {
  const Matrix& m = a.value();
  if (r >= m.rows()) {
    throw DimensionError("select_row " + std::to_string(r) + " of " + m.shape_string());
  }
  Matrix y(1, m.cols());
  std::copy(m.row(r).begin(), m.row(r).end(), y.values().begin());
  return a.tape().record(std::move(y), {a},
                         [r](const Matrix& g, std::span<Matrix* const> grads) {
                           if (!grads[0]) return;
                           for (std::size_t t = 0; t < g.cols(); ++t) (*grads[0])(r, t) += g(0, t);
                         });
}

Var topk_mean_rows(Var a, std::size_t k) {
  const Matrix& m = a.value();
  if (k == 0 || k > m.cols()) {
    throw InvalidArgument("top-k pooling with k=" + std::to_string(k) + " over " +
                          std::to_string(m.cols()) + " entries");
  }
  Matrix y(m.rows(), 1);
  std::vector<std::vector<std::size_t>> chosen(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::vector<std::size_t> idx(m.cols());
    std::iota(idx.begin(), idx.end(), 0);
    const auto row = m.row(r);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t i, std::size_t j) {
                        return row[i] > row[j] || (row[i] == row[j] && i < j);
                      });
    idx.resize(k);
    double s = 0.0;
    for (std::size_t i : idx) s += row[i];
    y(r, 0) = s / static_cast<double>(k);
    chosen[r] = std::move(idx);
  }
  return a.tape().record(std::move(y), {a},
                         [chosen, k](const Matrix& g, std::span<Matrix* const> grads) {
                           if (!grads[0]) return;
                           for (std::size_t r = 0; r < chosen.size(); ++r) {
                             for (std::size_t i : chosen[r]) {
                               (*grads[0])(r, i) += g(r, 0) / static_cast<double>(k);
                             }
                           }
                         });
}

Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.empty()) throw InvalidArgument("weighted_sum of no terms");
  if (scalars.size() != weights.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(scalars.size()) + " terms but " +
                         std::to_string(weights.size()) + " weights");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().size() != 1) {
      throw DimensionError("weighted_sum term " + std::to_string(i) + " is " +
                           scalars[i].value().shape_string());
    }
    s += weights[i] * scalars[i].value()[0];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return scalars[0].tape().record(Matrix::scalar(s),
                                  std::vector<Var>(scalars.begin(), scalars.end()),
                                  [w](const Matrix& g, std::span<Matrix* const> grads) {
                                    for (std::size_t i = 0; i < grads.size(); ++i) {
                                      if (grads[i]) (*grads[i])[0] += w[i] * g[0];
                                    }
                                  });
}

// --- Gradient verification --------------------------------------------------

FiniteDiffResult finite_diff_check(const LossFn& loss_fn, std::vector<double> theta, double h,
                                   std::size_t max_coordinates, std::uint64_t seed) {
  if (!(h >= 1e-7 && h <= 1e-4)) {
    throw InvalidArgument("finite difference step must lie in [1e-7, 1e-4]");
  }
  const LossAndGrad base = loss_fn(theta);
  const LossAndGrad again = loss_fn(theta);
  if (base.value != again.value || base.grad != again.grad) {
    throw InvalidArgument("loss function is not deterministic");
  }
  if (base.grad.size() != theta.size()) {
    throw DimensionError("loss function returned " + std::to_string(base.grad.size()) +
                         " gradient entries for " + std::to_string(theta.size()) + " parameters");
  }

  std::vector<std::size_t> coords(theta.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (coords.size() > max_coordinates) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  FiniteDiffResult result;
  for (std::size_t c : coords) {
    const double saved = theta[c];
    theta[c] = saved + h;
    const double up = loss_fn(theta).value;
    theta[c] = saved - h;
    const double down = loss_fn(theta).value;
    theta[c] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = base.grad[c];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic - numeric) / denom;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_coordinate = c;
    }
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace ptal::nd
