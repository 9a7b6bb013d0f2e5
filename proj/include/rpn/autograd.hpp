#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rpn/tensor.hpp"

namespace rpn {

// Trainable tensor plus its accumulated gradient and optimizer state.
struct Parameter {
  std::string name;
  TensorR value;
  TensorR grad;
  TensorR adam_m;
  TensorR adam_v;
  bool trainable = true;

  void zero_grad() {
    if (grad.size() != value.size()) grad = TensorR(value.shape());
    grad.fill(0);
  }
};

// Owns all parameters of a model in creation order. Creation order is the
// checkpoint order and the deterministic-init order.
class ParamStore {
 public:
  Parameter& add(std::string name, TensorR init);
  Parameter* find(const std::string& name);
  const std::vector<std::unique_ptr<Parameter>>& items() const { return items_; }
  int64_t total_scalars() const;
  void zero_grads();

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
};

class Node;
using Var = std::shared_ptr<Node>;

// One value in the dynamic computation graph.
class Node {
 public:
  TensorR value;
  TensorR grad;
  bool requires_grad = false;
  bool has_grad = false;
  uint64_t id = 0;
  Parameter* leaf = nullptr;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;

  const Shape& shape() const { return value.shape(); }
  void accumulate(const TensorR& g);
};

bool grad_enabled();

// Disables graph construction in scope; forwards still compute values.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Var constant(TensorR value);
Var constant_scalar(Real value);
Var make_var(TensorR value, bool requires_grad);
Var leaf_var(Parameter& p);
Var make_node(TensorR value, std::vector<Var> parents,
              std::function<void(Node&)> backprop);

// Reverse sweep from a scalar root. Parameter leaves accumulate into
// Parameter::grad; non-leaf grads live on the nodes for inspection.
void backward(const Var& root);

// Gradient wrt parents of `g` reduced over axes that were broadcast when
// producing shape `like`.
TensorR reduce_to_shape(const TensorR& g, const Shape& target);

Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace rpn
