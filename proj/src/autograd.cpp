#include "rpn/autograd.hpp"

#include <algorithm>
#include <unordered_set>

namespace rpn {

namespace {
uint64_t g_next_id = 1;
bool g_grad_enabled = true;
}  // namespace

Parameter& ParamStore::add(std::string name, TensorR init) {
  for (const auto& it : items_)
    check_config(it->name != name, "duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(init);
  p->grad = TensorR(p->value.shape());
  items_.push_back(std::move(p));
  return *items_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  for (const auto& it : items_)
    if (it->name == name) return it.get();
  return nullptr;
}

int64_t ParamStore::total_scalars() const {
  int64_t n = 0;
  for (const auto& it : items_) n += it->value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (const auto& it : items_) it->zero_grad();
}

void Node::accumulate(const TensorR& g) {
  if (!requires_grad) return;
  check_shape(g.shape() == value.shape(), "gradient shape mismatch");
  if (!has_grad) {
    grad = g;
    has_grad = true;
  } else {
    grad.add_(g);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(TensorR value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id++;
  return n;
}

Var constant_scalar(Real value) { return constant(TensorR::scalar(value)); }

Var make_var(TensorR value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && g_grad_enabled;
  n->id = g_next_id++;
  return n;
}

Var leaf_var(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->requires_grad = p.trainable && g_grad_enabled;
  if (n->requires_grad) n->leaf = &p;
  n->id = g_next_id++;
  return n;
}

Var make_node(TensorR value, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id++;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p && p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void backward(const Var& root) {
  check_shape(root != nullptr, "backward: null root");
  check_shape(root->value.size() == 1, "backward: root must be scalar");
  if (!root->requires_grad) return;

  // Creation ids are a topological order for a define-by-run graph, so the
  // reverse sweep just visits reachable nodes by descending id.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p && p->requires_grad && seen.insert(p.get()).second)
        stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](Node* a, Node* b) { return a->id > b->id; });

  root->accumulate(TensorR::scalar(1));
  for (Node* n : order) {
    if (!n->has_grad) continue;
    if (n->backprop) n->backprop(*n);
    if (n->leaf) {
      if (n->leaf->grad.size() != n->leaf->value.size())
        n->leaf->zero_grad();
      n->leaf->grad.add_(n->grad);
    }
  }
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape out(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int da = i < r - ra ? 1 : a[static_cast<size_t>(i - (r - ra))];
    const int db = i < r - rb ? 1 : b[static_cast<size_t>(i - (r - rb))];
    check_shape(da == db || da == 1 || db == 1,
                "broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
    out[static_cast<size_t>(i)] = std::max(da, db);
  }
  return out;
}

TensorR reduce_to_shape(const TensorR& g, const Shape& target) {
  if (g.shape() == target) return g;
  const int rg = g.rank();
  const int rt = static_cast<int>(target.size());
  TensorR out(target);
  // Row-major strides of the target aligned to g's rank; broadcast axes get
  // stride zero so contributions accumulate.
  std::vector<int64_t> tstride(static_cast<size_t>(rg), 0);
  {
    int64_t s = 1;
    for (int i = rt - 1; i >= 0; --i) {
      const int gi = i + (rg - rt);
      const int td = target[static_cast<size_t>(i)];
      tstride[static_cast<size_t>(gi)] = (td == 1) ? 0 : s;
      s *= td;
    }
  }
  std::vector<int64_t> coord(static_cast<size_t>(rg), 0);
  int64_t tidx = 0;
  const int64_t n = g.size();
  for (int64_t i = 0; i < n; ++i) {
    out[tidx] += g[i];
    for (int ax = rg - 1; ax >= 0; --ax) {
      coord[static_cast<size_t>(ax)]++;
      tidx += tstride[static_cast<size_t>(ax)];
      if (coord[static_cast<size_t>(ax)] < g.dim(ax)) break;
      tidx -= tstride[static_cast<size_t>(ax)] * g.dim(ax);
      coord[static_cast<size_t>(ax)] = 0;
    }
  }
  return out;
}

}  // namespace rpn
