#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spatialref/errors.hpp"

namespace spatialref::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. Rank 0 is not used; scalars have shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> data() & { return values_; }
  std::span<const double> data() const& { return values_; }
  std::span<const double> data() && = delete;  // would dangle
  const std::vector<double>& values() const& { return values_; }
  std::vector<double> values() && { return std::move(values_); }

  bool all_finite() const;
  void fill(double v);
  void add_inplace(const Tensor& other);
  void scale_inplace(double s);

 private:
  Shape shape_;
  std::vector<double> values_;
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Gradients produced by one backward pass, indexed by node id.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes);

  // Zero tensor of the node's shape when the node was unreachable from the loss.
  Tensor of(const Var& v) const;
  Tensor of(int id) const;
  bool reached(int id) const;

 private:
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

// Records a dataflow graph in topological (creation) order and runs
// reverse-mode accumulation over it once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf that views an externally owned tensor. The tensor must outlive the tape.
  Var parameter(const Tensor& value);

  Var record(Tensor value, std::vector<int> inputs, BackwardFn backward, const char* op);

  const Tensor& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Adds g into the gradient slot of node id (used by backward closures).
  void accumulate(int id, const Tensor& g);
  Tensor& grad_slot(int id);

  Gradients backward(const Var& loss);
  bool consumed() const { return consumed_; }

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const char* op = "leaf";
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool consumed_ = false;
  bool grad_enabled_ = true;
};

// ---- primitive ops ------------------------------------------------------
// Shape rules are stated per op; violations throw ShapeError and non-finite
// outputs throw NumericError.

// a, b same shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a [n x k] (or [k]) plus bias [k] broadcast over rows.
Var add_bias(Var a, Var bias);
// [a x b] * [b x c] -> [a x c];  [a x b] * [b] -> [a].
Var matmul(Var a, Var b);
// [r x c] -> [c x r]
Var transpose(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
// Natural log, input must be positive.
Var log(Var a);
// Rank 1: axis must be 0. Rank 2: axis 0 normalizes columns, axis 1 rows.
Var softmax(Var a, int axis);
// Rank 1 only.
Var log_softmax(Var a);
// Concatenate rank-1 tensors, or rank-2 tensors along axis 0 or 1.
Var concat(const std::vector<Var>& parts, int axis = 0);
// Stack rank-1 tensors of equal length into [count x len].
Var stack_rows(const std::vector<Var>& rows);
// Row i of a rank-2 tensor as a rank-1 tensor.
Var row(Var a, std::size_t i);
// Contiguous slice of a rank-1 tensor.
Var slice(Var a, std::size_t start, std::size_t len);
// Single element as a scalar.
Var pick(Var a, std::size_t index);
// Rows of table [V x e] selected by ids -> [ids x e].
Var gather_rows(Var table, std::span<const int> ids);
// Sliding windows of width k over the rows of [m x d]; sequences shorter than k
// are zero padded at the end. Result [max(m,k)-k+1 x k*d].
Var unfold(Var a, std::size_t width);
// Max over axis 0 of [m x f] -> [f]; ties route to the first maximal row.
Var max_rows(Var a);
// Sum over axis 1 of [n x k] -> [n].
Var row_sum(Var a);
Var sum(Var a);
Var mean(Var a);
Var squared_norm(Var a);
Var l2_norm(Var a);
// Inverted dropout: kept entries scaled by 1/(1-p). p == 0 is the identity.
Var dropout(Var a, double p, std::mt19937_64& rng);
// Value copy that blocks gradient flow.
Var detach(Var a);

// ---- gradient checking --------------------------------------------------

using ScalarFn = std::function<Var(Tape&, Var)>;

// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
// using central differences with the given step.
double grad_check(const ScalarFn& f, const Tensor& point, double step = 1e-5);

}  // namespace spatialref::ad
