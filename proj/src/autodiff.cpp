#include "spatialref/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace spatialref::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void require(bool cond, const char* op, const std::string& detail) {
  if (!cond) throw ShapeError(std::string(op) + ": " + detail);
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.tape != b.tape) throw Error(std::string(op) + ": operands live on different tapes");
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename F>
Tensor map_values(const Tensor& in, F f) {
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(product(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  if (product(shape_) != values_.size())
    throw ShapeError("tensor of shape " + shape_str(shape_) + " given " +
                     std::to_string(values_.size()) + " values");
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void Tensor::add_inplace(const Tensor& other) {
  if (other.shape_ != shape_)
    throw ShapeError("add_inplace: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

void Tensor::scale_inplace(double s) {
  for (auto& v : values_) v *= s;
}

// ---- Var / Gradients --------------------------------------------------------

const Tensor& Var::value() const { return tape->value(id); }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(v.shape()));
  return v[0];
}

Gradients::Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes)
    : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

bool Gradients::reached(int id) const {
  return id >= 0 && static_cast<std::size_t>(id) < grads_.size() && !grads_[id].empty();
}

Tensor Gradients::of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= shapes_.size())
    throw IndexError("gradient requested for unknown node " + std::to_string(id));
  if (!grads_[id].empty()) return grads_[id];
  return Tensor(shapes_[id]);
}

Tensor Gradients::of(const Var& v) const { return of(v.id); }

// ---- Tape -------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite input");
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("variable: non-finite input");
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(const Tensor& value) {
  if (!value.all_finite()) throw NumericError("parameter: non-finite value");
  Node n;
  n.external = &value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<int> inputs, BackwardFn backward, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
  Node n;
  n.owned = std::move(value);
  n.op = op;
  if (grad_enabled_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](int i) { return nodes_[i].requires_grad; });
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

const Tensor& Tape::value(int id) const {
  const auto& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_slot(int id) {
  auto& g = grads_[id];
  if (g.empty()) g = Tensor(value(id).shape());
  return g;
}

void Tape::accumulate(int id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  auto& slot = grads_[id];
  if (slot.empty())
    slot = g;
  else
    slot.add_inplace(g);
}

Gradients Tape::backward(const Var& loss) {
  if (loss.tape != this) throw Error("backward: loss is not on this tape");
  if (consumed_) throw Error("backward: tape already consumed");
  if (value(loss.id).size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(value(loss.id).shape()));
  consumed_ = true;
  grads_.assign(nodes_.size(), Tensor());
  if (nodes_[loss.id].requires_grad) grads_[loss.id] = Tensor(value(loss.id).shape(), 1.0);
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[i];
    if (!n.backward || grads_[i].empty()) continue;
    const Tensor g = std::move(grads_[i]);
    n.backward(*this, g);
  }
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) shapes.push_back(value(static_cast<int>(i)).shape());
  return Gradients(std::move(grads_), std::move(shapes));
}

// ---- ops --------------------------------------------------------------------

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  out.add_inplace(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib},
                        [ia, ib](Tape& t, const Tensor& g) {
                          t.accumulate(ia, g);
                          t.accumulate(ib, g);
                        },
                        "add");
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib},
                        [ia, ib](Tape& t, const Tensor& g) {
                          t.accumulate(ia, g);
                          Tensor neg = g;
                          neg.scale_inplace(-1.0);
                          t.accumulate(ib, neg);
                        },
                        "sub");
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib},
                        [ia, ib](Tape& t, const Tensor& g) {
                          const auto& va = t.value(ia);
                          const auto& vb = t.value(ib);
                          if (t.requires_grad(ia)) {
                            Tensor ga = g;
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= vb[i];
                            t.accumulate(ia, ga);
                          }
                          if (t.requires_grad(ib)) {
                            Tensor gb = g;
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= va[i];
                            t.accumulate(ib, gb);
                          }
                        },
                        "mul");
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  out.scale_inplace(s);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, s](Tape& t, const Tensor& g) {
                          Tensor ga = g;
                          ga.scale_inplace(s);
                          t.accumulate(ia, ga);
                        },
                        "scale");
}

Var add_scalar(Var a, double s) {
  Tensor out = map_values(a.value(), [s](double v) { return v + s; });
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia](Tape& t, const Tensor& g) { t.accumulate(ia, g); }, "add_scalar");
}

Var add_bias(Var a, Var bias) {
  const auto& va = a.value();
  const auto& vb = bias.value();
  require(vb.rank() == 1, "add_bias", "bias must be rank 1");
  const std::size_t k = vb.size();
  require(va.rank() <= 2 && (va.rank() == 1 ? va.size() == k : va.cols() == k), "add_bias",
          "operand " + shape_str(va.shape()) + " incompatible with bias " + shape_str(vb.shape()));
  Tensor out = va;
  const std::size_t n = va.size() / k;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] += vb[c];
  const int ia = a.id, ib = bias.id;
  return a.tape->record(std::move(out), {ia, ib},
                        [ia, ib, n, k](Tape& t, const Tensor& g) {
                          t.accumulate(ia, g);
                          if (t.requires_grad(ib)) {
                            Tensor gb({k});
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t c = 0; c < k; ++c) gb[c] += g[r * k + c];
                            t.accumulate(ib, gb);
                          }
                        },
                        "add_bias");
}

Var matmul(Var a, Var b) {
  const auto& va = a.value();
  const auto& vb = b.value();
  require(va.rank() == 2, "matmul", "left operand must be rank 2, got " + shape_str(va.shape()));
  require(vb.rank() == 1 || vb.rank() == 2, "matmul", "right operand must be rank 1 or 2");
  require(va.cols() == vb.rows(), "matmul",
          "inner dimensions differ " + shape_str(va.shape()) + " * " + shape_str(vb.shape()));
  const bool vec = vb.rank() == 1;
  Tensor out(vec ? Shape{va.rows()} : Shape{va.rows(), vb.cols()});
  as_matrix(out).noalias() = as_matrix(va) * as_matrix(vb);
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib},
                        [ia, ib](Tape& t, const Tensor& g) {
                          const auto& va = t.value(ia);
                          const auto& vb = t.value(ib);
                          if (t.requires_grad(ia)) {
                            Tensor ga(va.shape());
                            as_matrix(ga).noalias() = as_matrix(g) * as_matrix(vb).transpose();
                            t.accumulate(ia, ga);
                          }
                          if (t.requires_grad(ib)) {
                            Tensor gb(vb.shape());
                            as_matrix(gb).noalias() = as_matrix(va).transpose() * as_matrix(g);
                            t.accumulate(ib, gb);
                          }
                        },
                        "matmul");
}

Var transpose(Var a) {
  const auto& va = a.value();
  require(va.rank() == 2, "transpose", "operand must be rank 2");
  Tensor out({va.cols(), va.rows()});
  as_matrix(out) = as_matrix(va).transpose();
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia](Tape& t, const Tensor& g) {
                          Tensor ga(t.value(ia).shape());
                          as_matrix(ga) = as_matrix(g).transpose();
                          t.accumulate(ia, ga);
                        },
                        "transpose");
}

Var sigmoid(Var a) {
  Tensor out = map_values(a.value(), sigmoid_scalar);
  const int ia = a.id;
  const int self = static_cast<int>(a.tape->size());
  return a.tape->record(std::move(out), {ia},
                        [ia, self](Tape& t, const Tensor& g) {
                          const auto& y = t.value(self);
                          Tensor ga = g;
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= y[i] * (1.0 - y[i]);
                          t.accumulate(ia, ga);
                        },
                        "sigmoid");
}

Var tanh(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return std::tanh(v); });
  const int ia = a.id;
  const int self = static_cast<int>(a.tape->size());
  return a.tape->record(std::move(out), {ia},
                        [ia, self](Tape& t, const Tensor& g) {
                          const auto& y = t.value(self);
                          Tensor ga = g;
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= 1.0 - y[i] * y[i];
                          t.accumulate(ia, ga);
                        },
                        "tanh");
}

Var exp(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return std::exp(v); });
  const int ia = a.id;
  const int self = static_cast<int>(a.tape->size());
  return a.tape->record(std::move(out), {ia},
                        [ia, self](Tape& t, const Tensor& g) {
                          const auto& y = t.value(self);
                          Tensor ga = g;
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= y[i];
                          t.accumulate(ia, ga);
                        },
                        "exp");
}

Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0)) throw NumericError("log: non-positive input");
  Tensor out = map_values(a.value(), [](double v) { return std::log(v); });
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia](Tape& t, const Tensor& g) {
                          const auto& x = t.value(ia);
                          Tensor ga = g;
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] /= x[i];
                          t.accumulate(ia, ga);
                        },
                        "log");
}

namespace {

// Visits each softmax group as (offset, stride, count).
template <typename F>
void for_each_group(const Shape& shape, int axis, F f) {
  if (shape.size() == 1) {
    f(std::size_t{0}, std::size_t{1}, shape[0]);
  } else if (axis == 1) {
    for (std::size_t r = 0; r < shape[0]; ++r) f(r * shape[1], std::size_t{1}, shape[1]);
  } else {
    for (std::size_t c = 0; c < shape[1]; ++c) f(c, shape[1], shape[0]);
  }
}

}  // namespace

Var softmax(Var a, int axis) {
  const auto& va = a.value();
  require(va.rank() == 1 ? axis == 0 : (va.rank() == 2 && (axis == 0 || axis == 1)), "softmax",
          "invalid axis " + std::to_string(axis) + " for " + shape_str(va.shape()));
  Tensor out(va.shape());
  for_each_group(va.shape(), axis, [&](std::size_t off, std::size_t stride, std::size_t n) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, va[off + j * stride]);
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) z += out[off + j * stride] = std::exp(va[off + j * stride] - mx);
    for (std::size_t j = 0; j < n; ++j) out[off + j * stride] /= z;
  });
  const int ia = a.id;
  const int self = static_cast<int>(a.tape->size());
  const Shape shape = va.shape();
  return a.tape->record(std::move(out), {ia},
                        [ia, self, shape, axis](Tape& t, const Tensor& g) {
                          const auto& y = t.value(self);
                          Tensor ga(shape);
                          for_each_group(shape, axis, [&](std::size_t off, std::size_t stride, std::size_t n) {
                            double dot = 0;
                            for (std::size_t j = 0; j < n; ++j) dot += g[off + j * stride] * y[off + j * stride];
                            for (std::size_t j = 0; j < n; ++j) {
                              const auto k = off + j * stride;
                              ga[k] = y[k] * (g[k] - dot);
                            }
                          });
                          t.accumulate(ia, ga);
                        },
                        "softmax");
}

Var log_softmax(Var a) {
  const auto& va = a.value();
  require(va.rank() == 1, "log_softmax", "operand must be rank 1");
  double mx = -INFINITY;
  for (double v : va.data()) mx = std::max(mx, v);
  double z = 0;
  for (double v : va.data()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  Tensor out = map_values(va, [lse](double v) { return v - lse; });
  const int ia = a.id;
  const int self = static_cast<int>(a.tape->size());
  return a.tape->record(std::move(out), {ia},
                        [ia, self](Tape& t, const Tensor& g) {
                          const auto& y = t.value(self);
                          double gs = 0;
                          for (double v : g.data()) gs += v;
                          Tensor ga = g;
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] -= std::exp(y[i]) * gs;
                          t.accumulate(ia, ga);
                        },
                        "log_softmax");
}

Var concat(const std::vector<Var>& parts, int axis) {
  require(!parts.empty(), "concat", "no operands");
  Tape* tape = parts.front().tape;
  const auto& first = parts.front().value();
  const std::size_t rank = first.rank();
  require(rank == 1 || rank == 2, "concat", "operands must be rank 1 or 2");
  require(rank == 2 || axis == 0, "concat", "rank-1 operands concatenate along axis 0");
  std::vector<int> ids;
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    require(v.rank() == rank, "concat", "rank mismatch");
    if (rank == 2) {
      if (axis == 0) require(v.cols() == first.cols(), "concat", "column count mismatch");
      else require(v.rows() == first.rows(), "concat", "row count mismatch");
    }
    const std::size_t e = (rank == 1 || axis == 0) ? v.rows() : v.cols();
    extents.push_back(e);
    total += e;
    ids.push_back(p.id);
  }
  Shape shape = rank == 1 ? Shape{total} : (axis == 0 ? Shape{total, first.cols()} : Shape{first.rows(), total});
  Tensor out(shape);
  const std::size_t rows = rank == 1 ? 1 : out.rows();
  const std::size_t out_cols = rank == 1 ? total : out.cols();
  if (rank == 1 || axis == 0) {
    std::size_t pos = 0;
    for (const auto& p : parts) {
      const auto& v = p.value();
      std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(pos));
      pos += v.size();
    }
  } else {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& v = parts[k].value();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < extents[k]; ++c) out[r * out_cols + c0 + c] = v[r * extents[k] + c];
      c0 += extents[k];
    }
  }
  const bool by_rows = rank == 1 || axis == 0;
  return tape->record(std::move(out), ids,
                      [ids, extents, by_rows, rows, out_cols](Tape& t, const Tensor& g) {
                        std::size_t pos = 0;
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          const auto& shape = t.value(ids[k]).shape();
                          if (!t.requires_grad(ids[k])) {
                            pos += by_rows ? t.value(ids[k]).size() : extents[k];
                            continue;
                          }
                          Tensor gk(shape);
                          if (by_rows) {
                            std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(pos), gk.size(),
                                        gk.data().begin());
                            pos += gk.size();
                          } else {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < extents[k]; ++c)
                                gk[r * extents[k] + c] = g[r * out_cols + pos + c];
                            pos += extents[k];
                          }
                          t.accumulate(ids[k], gk);
                        }
                      },
                      "concat");
}

Var stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), "stack_rows", "no operands");
  const std::size_t len = rows.front().value().size();
  for (const auto& r : rows)
    require(r.value().rank() == 1 && r.value().size() == len, "stack_rows", "rows must be rank 1 of equal length");
  Tensor out({rows.size(), len});
  std::vector<int> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = rows[i].value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * len));
    ids.push_back(rows[i].id);
  }
  return rows.front().tape->record(std::move(out), ids,
                                   [ids, len](Tape& t, const Tensor& g) {
                                     for (std::size_t i = 0; i < ids.size(); ++i) {
                                       if (!t.requires_grad(ids[i])) continue;
                                       Tensor gi({len});
                                       std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(i * len), len,
                                                   gi.data().begin());
                                       t.accumulate(ids[i], gi);
                                     }
                                   },
                                   "stack_rows");
}

Var row(Var a, std::size_t i) {
  const auto& va = a.value();
  require(va.rank() == 2, "row", "operand must be rank 2");
  if (i >= va.rows()) throw IndexError("row: index " + std::to_string(i) + " out of range");
  const std::size_t c = va.cols();
  Tensor out({c});
  std::copy_n(va.data().begin() + static_cast<std::ptrdiff_t>(i * c), c, out.data().begin());
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, i, c](Tape& t, const Tensor& g) {
                          if (!t.requires_grad(ia)) return;
                          auto& slot = t.grad_slot(ia);
                          for (std::size_t k = 0; k < c; ++k) slot[i * c + k] += g[k];
                        },
                        "row");
}

Var slice(Var a, std::size_t start, std::size_t len) {
  const auto& va = a.value();
  require(va.rank() == 1, "slice", "operand must be rank 1");
  require(len > 0 && start + len <= va.size(), "slice", "range out of bounds");
  Tensor out({len});
  std::copy_n(va.data().begin() + static_cast<std::ptrdiff_t>(start), len, out.data().begin());
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, start, len](Tape& t, const Tensor& g) {
                          if (!t.requires_grad(ia)) return;
                          auto& slot = t.grad_slot(ia);
                          for (std::size_t k = 0; k < len; ++k) slot[start + k] += g[k];
                        },
                        "slice");
}

Var pick(Var a, std::size_t index) {
  const auto& va = a.value();
  if (index >= va.size()) throw IndexError("pick: index " + std::to_string(index) + " out of range");
  const int ia = a.id;
  return a.tape->record(Tensor::scalar(va[index]), {ia},
                        [ia, index](Tape& t, const Tensor& g) {
                          if (t.requires_grad(ia)) t.grad_slot(ia)[index] += g[0];
                        }, "pick");
}

Var gather_rows(Var table, std::span<const int> ids) {
  const auto& vt = table.value();
  require(vt.rank() == 2, "gather_rows", "table must be rank 2");
  require(!ids.empty(), "gather_rows", "no ids");
  const std::size_t e = vt.cols();
  Tensor out({ids.size(), e});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vt.rows())
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(vt.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * e), e,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * e));
  }
  const int it = table.id;
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape->record(std::move(out), {it},
                            [it, idv, e](Tape& t, const Tensor& g) {
                              if (!t.requires_grad(it)) return;
                              auto& slot = t.grad_slot(it);
                              for (std::size_t i = 0; i < idv.size(); ++i)
                                for (std::size_t k = 0; k < e; ++k) slot[idv[i] * e + k] += g[i * e + k];
                            },
                            "gather_rows");
}

Var unfold(Var a, std::size_t width) {
  const auto& va = a.value();
  require(va.rank() == 2, "unfold", "operand must be rank 2");
  require(width >= 1, "unfold", "width must be positive");
  const std::size_t m = va.rows(), d = va.cols();
  const std::size_t padded = std::max(m, width);
  const std::size_t windows = padded - width + 1;
  Tensor out({windows, width * d});
  for (std::size_t p = 0; p < windows; ++p)
    for (std::size_t j = 0; j < width && p + j < m; ++j)
      std::copy_n(va.data().begin() + static_cast<std::ptrdiff_t>((p + j) * d), d,
                  out.data().begin() + static_cast<std::ptrdiff_t>(p * width * d + j * d));
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, m, d, width, windows](Tape& t, const Tensor& g) {
                          if (!t.requires_grad(ia)) return;
                          auto& slot = t.grad_slot(ia);
                          for (std::size_t p = 0; p < windows; ++p)
                            for (std::size_t j = 0; j < width && p + j < m; ++j)
                              for (std::size_t k = 0; k < d; ++k)
                                slot[(p + j) * d + k] += g[p * width * d + j * d + k];
                        },
                        "unfold");
}

Var max_rows(Var a) {
  const auto& va = a.value();
  require(va.rank() == 2, "max_rows", "operand must be rank 2");
  const std::size_t m = va.rows(), f = va.cols();
  Tensor out({f});
  std::vector<std::size_t> arg(f, 0);
  for (std::size_t c = 0; c < f; ++c) {
    double best = va[c];
    for (std::size_t r = 1; r < m; ++r) {
      if (va[r * f + c] > best) {
        best = va[r * f + c];
        arg[c] = r;
      }
    }
    out[c] = best;
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, arg, f](Tape& t, const Tensor& g) {
                          if (!t.requires_grad(ia)) return;
                          auto& slot = t.grad_slot(ia);
                          for (std::size_t c = 0; c < f; ++c) slot[arg[c] * f + c] += g[c];
                        },
                        "max_rows");
}

Var row_sum(Var a) {
  const auto& va = a.value();
  require(va.rank() == 2, "row_sum", "operand must be rank 2");
  const std::size_t n = va.rows(), k = va.cols();
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) out[r] += va[r * k + c];
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, n, k](Tape& t, const Tensor& g) {
                          if (!t.requires_grad(ia)) return;
                          auto& slot = t.grad_slot(ia);
                          for (std::size_t r = 0; r < n; ++r)
                            for (std::size_t c = 0; c < k; ++c) slot[r * k + c] += g[r];
                        },
                        "row_sum");
}

Var sum(Var a) {
  double s = 0;
  for (double v : a.value().data()) s += v;
  const int ia = a.id;
  return a.tape->record(Tensor::scalar(s), {ia},
                        [ia](Tape& t, const Tensor& g) {
                          if (!t.requires_grad(ia)) return;
                          auto& slot = t.grad_slot(ia);
                          for (auto& v : slot.data()) v += g[0];
                        },
                        "sum");
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var squared_norm(Var a) {
  double s = 0;
  for (double v : a.value().data()) s += v * v;
  const int ia = a.id;
  return a.tape->record(Tensor::scalar(s), {ia},
                        [ia](Tape& t, const Tensor& g) {
                          const auto& x = t.value(ia);
                          if (!t.requires_grad(ia)) return;
                          auto& slot = t.grad_slot(ia);
                          for (std::size_t i = 0; i < x.size(); ++i) slot[i] += 2.0 * x[i] * g[0];
                        },
                        "squared_norm");
}

Var l2_norm(Var a) {
  double s = 0;
  for (double v : a.value().data()) s += v * v;
  const double norm = std::sqrt(s);
  const int ia = a.id;
  return a.tape->record(Tensor::scalar(norm), {ia},
                        [ia, norm](Tape& t, const Tensor& g) {
                          if (norm == 0.0) return;  // subgradient 0 at the origin
                          const auto& x = t.value(ia);
                          if (!t.requires_grad(ia)) return;
                          auto& slot = t.grad_slot(ia);
                          for (std::size_t i = 0; i < x.size(); ++i) slot[i] += x[i] / norm * g[0];
                        },
                        "l2_norm");
}

Var dropout(Var a, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0,1)");
  if (p == 0.0) return a;
  const auto& va = a.value();
  Tensor mask(va.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? s : 0.0;
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, mask = std::move(mask)](Tape& t, const Tensor& g) {
                          Tensor ga = g;
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= mask[i];
                          t.accumulate(ia, ga);
                        },
                        "dropout");
}

Var detach(Var a) { return a.tape->constant(a.value()); }

// ---- grad_check ---------------------------------------------------------------

double grad_check(const ScalarFn& f, const Tensor& point, double step) {
  Tensor analytic;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var y = f(tape, x);
    analytic = tape.backward(y).of(x);
  }
  auto eval = [&](const Tensor& p) {
    Tape tape;
    tape.set_grad_enabled(false);
    Var x = tape.constant(p);
    const double v = f(tape, x).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = eval(probe);
    probe[i] = orig - step;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace spatialref::ad
