#include "phrc/nn/graph.hpp"

#include "phrc/core/error.hpp"

#include <utility>

namespace phrc::nn {

int ParamStore::add(std::string name, Mat init) {
  if (find(name) >= 0) throw ConfigError("duplicate parameter name '" + name + "'");
  ParamTensor p{std::move(name), std::move(init), {}};
  p.grad = Mat::Zero(p.value.rows(), p.value.cols());
  tensors_.push_back(std::move(p));
  return static_cast<int>(tensors_.size()) - 1;
}

int ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.grad.setZero(t.value.rows(), t.value.cols());
}

bool ParamStore::grads_finite() const {
  for (const auto& t : tensors_)
    if (!t.grad.allFinite()) return false;
  return true;
}

Graph::Graph(const ParamStore& store) : store_(&store), sink_(nullptr) {
  param_nodes_.assign(store.size(), -1);
}

Graph::Graph(ParamStore& store) : store_(&store), sink_(&store) {
  param_nodes_.assign(store.size(), -1);
}

Var Graph::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Graph::param(int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= param_nodes_.size())
    throw ConfigError("parameter index out of range");
  int& slot = param_nodes_[static_cast<std::size_t>(index)];
  if (slot >= 0) return Var{slot};
  Node n;
  n.external = &(*store_)[index].value;
  n.needs_grad = tracking();
  if (n.needs_grad) {
    n.back = [index](Graph& g, int self) {
      g.sink_->operator[](index).grad += g.nodes_[static_cast<std::size_t>(self)].grad;
    };
  }
  nodes_.push_back(std::move(n));
  slot = static_cast<int>(nodes_.size()) - 1;
  return Var{slot};
}

const Mat& Graph::value(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.external ? *n.external : n.value;
}

Mat& Graph::grad(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) {
    const Mat& val = n.external ? *n.external : n.value;
    n.grad = Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

Var Graph::push(Mat value, bool needs_grad, BackwardFn back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && tracking();
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var root) {
  if (!tracking()) throw ConfigError("backward on a graph bound to a const store");
  const Mat& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) throw ConfigError("backward root must be a scalar");
  grad(root)(0, 0) += 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
    n.back(*this, i);
  }
}

}  // namespace phrc::nn
