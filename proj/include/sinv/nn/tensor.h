// sinv/nn/tensor.h
//
// Reverse-mode autodiff on dense tensors. A Tensor is a shared handle to a
// node holding values, a lazily allocated gradient, and (for op outputs) the
// parent nodes plus a closure that pushes the node's gradient to them.
// backward() on a scalar runs those closures in reverse topological order.

#ifndef SINV_NN_TENSOR_H_
#define SINV_NN_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sinv::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first touched
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;
  const char* op = "leaf";

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  T item() const;

  // Materializes a zero gradient if none exists yet.
  std::span<T> grad() { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // Same storage, cut off from the graph.
  Tensor detach() const;

  // For op implementations.
  static Tensor make_result(Shape shape, std::vector<T> values,
                            std::vector<Tensor> parents, const char* op);
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

// Seeds d(loss)/d(loss) = 1 and propagates. loss must be a single element.
template <typename T>
void backward(Tensor<T>& loss);

// When enabled, every op checks its output for non-finite values and throws
// Error(kNumeric) naming the op.
void set_finite_check(bool on);
bool finite_check_enabled();

template <typename T>
void check_finite(std::span<const T> v, const char* op);

}  // namespace sinv::nn

#endif  // SINV_NN_TENSOR_H_
