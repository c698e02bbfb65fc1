#include "bam/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

namespace bam {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;
std::string g_corrupted_op;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_vector: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = new_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_vector({}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= ndim()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return node_->shape[axis];
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != ndim()) throw ShapeError("at(): wrong index rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) throw ShapeError("at(): index out of range");
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

Tensor Tensor::detach() const {
  return Tensor(new_node(node_->shape, node_->value));
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->blocks_gradient || next >= node->parents.size()) {
      order.push_back(node);
      stack.pop_back();
      continue;
    }
    Node* parent = node->parents[next++].get();
    if (parent->requires_grad && visited.insert(parent).second) {
      stack.emplace_back(parent, 0);
    }
  }

  for (Node* n : order) n->ensure_grad();
  node_->grad[0] += 1.0;

  const std::string& corrupted = g_corrupted_op;
  std::vector<std::vector<double>> snapshot;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->blocks_gradient || !n->backward) continue;
    const bool corrupt = !corrupted.empty() && n->op == corrupted;
    if (corrupt) {
      snapshot.clear();
      for (auto& p : n->parents) snapshot.push_back(p->grad);
    }
    n->backward(*n);
    if (corrupt) {
      for (std::size_t k = 0; k < n->parents.size(); ++k) {
        auto& g = n->parents[k]->grad;
        for (std::size_t i = 0; i < g.size() && i < snapshot[k].size(); ++i) {
          g[i] += 0.5 * (g[i] - snapshot[k][i]);
        }
      }
    }
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

std::uint64_t next_node_id() { return g_next_id.fetch_add(1, std::memory_order_relaxed); }

namespace {

template <typename Inputs>
Tensor make_result_impl(Shape shape, std::vector<double> value, std::string_view op,
                        const Inputs& inputs, BackwardFn backward) {
  auto node = new_node(std::move(shape), std::move(value));
  node->op = op;
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      for (const auto& t : inputs) node->parents.push_back(t.node());
    }
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> value, std::string_view op,
                   std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return make_result_impl(std::move(shape), std::move(value), op, inputs, std::move(backward));
}

Tensor make_result(Shape shape, std::vector<double> value, std::string_view op,
                   const std::vector<Tensor>& inputs, BackwardFn backward) {
  return make_result_impl(std::move(shape), std::move(value), op, inputs, std::move(backward));
}

}  // namespace detail

namespace debug {

void set_corrupted_backward(std::string op) { g_corrupted_op = std::move(op); }
const std::string& corrupted_backward() { return g_corrupted_op; }

}  // namespace debug

}  // namespace bam
