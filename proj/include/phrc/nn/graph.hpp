#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace phrc::nn {

using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// A named trainable matrix with its gradient accumulator.
struct ParamTensor {
  std::string name;
  Mat value;
  Mat grad;

  std::vector<Index> shape() const { return {value.rows(), value.cols()}; }
};

/// Owns every parameter of a network. Layers refer to entries by index, so a
/// store (and anything holding indices into it) is freely copyable.
class ParamStore {
 public:
  int add(std::string name, Mat init);
  int find(std::string_view name) const;  // -1 when absent

  ParamTensor& operator[](int i) { return tensors_[static_cast<std::size_t>(i)]; }
  const ParamTensor& operator[](int i) const { return tensors_[static_cast<std::size_t>(i)]; }

  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t scalar_count() const;

  std::vector<ParamTensor>& tensors() noexcept { return tensors_; }
  const std::vector<ParamTensor>& tensors() const noexcept { return tensors_; }

  void zero_grad();
  bool grads_finite() const;

 private:
  std::vector<ParamTensor> tensors_;
};

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in topological order; `backward`
/// walks them in reverse and calls each node's explicitly coded rule.
///
/// A graph bound to a mutable store accumulates into ParamTensor::grad; a
/// graph bound to a const store records no backward rules at all.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(const ParamStore& store);
  explicit Graph(ParamStore& store);

  bool tracking() const noexcept { return sink_ != nullptr; }

  Var constant(Mat value);
  /// Leaf for parameter `index`; repeated calls return the same node.
  Var param(int index);

  const Mat& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  /// Gradient buffer of a node, zero-initialised on first access.
  Mat& grad(Var v);

  /// Seeds d(root)/d(root) = 1 and propagates. `root` must be 1x1.
  void backward(Var root);

  /// Adds a node. `back` is only stored when `needs_grad` is true.
  Var push(Mat value, bool needs_grad, BackwardFn back);

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool needs_grad = false;
    BackwardFn back;
  };

  const ParamStore* store_;
  ParamStore* sink_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

}  // namespace phrc::nn
