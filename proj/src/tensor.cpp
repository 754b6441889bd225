#include "amcnn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>
#include <unordered_set>
#include <utility>

#include "amcnn/error.hpp"

namespace amcnn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : Tensor(Shape{0}) {}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

double& Tensor::at(std::size_t c, std::size_t h, std::size_t w) {
  const Shape& s = node_->shape;
  return node_->data[(c * s[1] + h) * s[2] + w];
}

double Tensor::at(std::size_t c, std::size_t h, std::size_t w) const {
  const Shape& s = node_->shape;
  return node_->data[(c * s[1] + h) * s[2] + w];
}

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

std::span<double> Tensor::grad() { return node_->grad_buffer(); }

std::span<const double> Tensor::grad() const { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data); }

Tensor Tensor::clone() const {
  Tensor copy = detach();
  copy.set_requires_grad(requires_grad());
  return copy;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                       detail::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  const bool traced = std::any_of(inputs.begin(), inputs.end(),
                                  [](const Tensor& t) { return t.requires_grad(); });
  if (traced) {
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  detail::Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Post-order DFS gives inputs before their consumers.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Leaves collect this pass into fresh buffers that are added to their
  // existing gradients afterwards, so a repeated call adds exactly the same
  // vector instead of re-rounding partial sums on top of the old one.
  std::vector<std::pair<detail::Node*, std::vector<double>>> previous;
  for (detail::Node* node : order) {
    if (!node->is_leaf()) {
      node->grad.assign(node->data.size(), 0.0);
    } else if (!node->grad.empty()) {
      previous.emplace_back(node, std::exchange(node->grad, {}));
    }
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
  for (auto& [node, old] : previous) {
    std::vector<double>& g = node->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = old[i] + g[i];
  }
}

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int threads) { g_threads.store(std::max(1, threads)); }

int num_threads() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (std::size_t i = 0; i < std::min(n, chunk); ++i) fn(i);
}

}  // namespace amcnn
