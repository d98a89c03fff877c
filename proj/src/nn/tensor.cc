// nn/tensor.cc

#include "sinv/nn/tensor.h"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "sinv/error.h"

namespace sinv::nn {

namespace {
std::atomic<bool> g_finite_check{false};
}

void set_finite_check(bool on) { g_finite_check = on; }
bool finite_check_enabled() { return g_finite_check; }

template <typename T>
void check_finite(std::span<const T> v, const char* op) {
  for (T x : v) {
    if (!std::isfinite(x))
      fail(ErrorKind::kNumeric, std::string("non-finite value after ") + op);
  }
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T v, bool requires_grad) {
  std::vector<T> values(shape_numel(shape), v);
  return from(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values,
                          bool requires_grad) {
  require(shape_numel(shape) == values.size(),
          "tensor: value count does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values,
                                 std::vector<Tensor> parents, const char* op) {
  if (g_finite_check) check_finite<T>(values, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->op = op;
  for (auto& p : parents) {
    if (p.defined() && p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (auto& p : parents) n->parents.push_back(p.node_);
  }
  return Tensor(std::move(n));
}

template <typename T>
T Tensor<T>::item() const {
  require(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(std::move(n));
}

template <typename T>
void backward(Tensor<T>& loss) {
  require(loss.numel() == 1, "backward() needs a scalar loss");
  if (!loss.requires_grad()) return;
  using Node = detail::Node<T>;
  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(Tensor<float>&);
template void backward<double>(Tensor<double>&);
template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);

}  // namespace sinv::nn
