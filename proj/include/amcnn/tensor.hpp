#pragma once

// Dense double-precision tensor with a reverse-mode autodiff trace.
//
// A Tensor is a cheap handle onto shared storage: copies alias the same
// values and gradient buffer (use clone()/detach() for an independent copy).
// Ops whose inputs all have requires_grad() == false record nothing, so pure
// inference never builds a graph.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace amcnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;  // empty for leaves

  bool is_leaf() const { return !backward; }
  // Returns the gradient buffer, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }

  // Single-element access.
  double item() const;

  // [c, h, w] access for rank-3 tensors.
  double& at(std::size_t c, std::size_t h, std::size_t w);
  double at(std::size_t c, std::size_t h, std::size_t w) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient values; zeros if nothing has been accumulated yet.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  // Independent copy of the values with no trace and requires_grad == false.
  Tensor detach() const;
  // Independent copy that keeps requires_grad but drops history.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Builds an op output whose gradient is propagated by `backward`. When no
  // input requires a gradient the trace is dropped.
  static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                        detail::BackwardFn backward);

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Propagates d(loss)/d(.) to every traced tensor reachable from `loss`.
// Leaf gradients accumulate across calls; intermediate gradients are reset.
// Throws ShapeError if loss has more than one element.
void backward(const Tensor& loss);

// Worker count for data-parallel loops inside ops (default 1). Results are
// independent of the count: work is split over independent output slices.
void set_num_threads(int threads);
int num_threads();

// Runs fn(i) for i in [0, n), split into contiguous chunks over num_threads().
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace amcnn
