#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bam {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node;
using BackwardFn = std::function<void(Node&)>;

// One vertex of a dynamically recorded computation graph. Values are 64-bit,
// row-major. `grad` stays empty until a backward sweep reaches the node.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  // Marker set by stop_gradient(): the backward sweep never crosses this node.
  bool blocks_gradient = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  std::uint64_t id = 0;

  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  std::vector<double> to_vector() const { return node_->value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  std::uint64_t id() const { return node_->id; }
  std::string_view op() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }

  // Plain value copy with no graph history and no marker.
  Tensor detach() const;

  // Reverse-mode sweep from a scalar. Every node reachable from here that
  // requires grad ends up with a populated grad buffer.
  void backward() const;

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

std::uint64_t next_node_id();

// Builds a result node. Parents and the backward rule are only attached when
// recording is on and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> value, std::string_view op,
                   std::initializer_list<Tensor> inputs, BackwardFn backward);
Tensor make_result(Shape shape, std::vector<double> value, std::string_view op,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

}  // namespace detail

namespace debug {

// Fault injection for gradient-check negative controls: the backward rule of
// the named op has its contribution to every input gradient scaled by 1.5.
// Empty string disables.
void set_corrupted_backward(std::string op);
const std::string& corrupted_backward();

}  // namespace debug

}  // namespace bam
