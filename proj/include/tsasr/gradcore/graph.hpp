#pragma once

#include "tsasr/gradcore/matrix.hpp"
#include "tsasr/gradcore/param_store.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tsasr {

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  std::size_t id = 0;

  const Matrix<Scalar>& value() const { return graph->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Shape shape() const { return shape_of(value()); }
  bool requires_grad() const { return graph->requires_grad(id); }
};

/// Record of one forward pass for reverse-mode differentiation.
///
/// Nodes are appended in topological order, so backward() is a single reverse
/// sweep. A graph built with `record = false` keeps values only; it is the
/// inference mode used by decoding and finite-difference probes.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Graph&, const Mat& out_grad)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var<Scalar> constant(Mat value);
  /// Leaf that accumulates gradient (when recording).
  Var<Scalar> variable(Mat value);
  /// Leaf bound to a stored parameter. Repeated calls with the same store and
  /// name return the same node. The value is referenced, not copied, so the
  /// store must outlive the graph and stay unmodified while it is in use.
  Var<Scalar> param(const ParamStore<Scalar>& store, const std::string& name);

  /// Appends an op node. `backward` is dropped when no parent needs gradient.
  Var<Scalar> emit(const char* op, Mat value, std::initializer_list<Var<Scalar>> parents, Backward backward);
  Var<Scalar> emit(const char* op, Mat value, const std::vector<Var<Scalar>>& parents, Backward backward);

  const Mat& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator of a node, zero-initialized on first access.
  Mat& grad(std::size_t id);
  const Mat* grad_if_present(std::size_t id) const;

  /// Seeds d(loss)/d(loss) = 1 and sweeps the graph once. `loss` must be 1x1.
  void backward(Var<Scalar> loss);
  bool backward_done() const { return backward_done_; }

  /// Gradient of a parameter leaf after backward(); nullptr when unused.
  const Mat* param_grad(const ParamStore<Scalar>& store, const std::string& name) const;

  /// Name of the first op whose output holds a NaN or infinity.
  std::optional<std::string> first_non_finite() const;

  std::size_t size() const { return nodes_.size(); }

  /// Per-graph memo for values derived once per forward pass (e.g. effective
  /// prompts shared by every example in a batch).
  std::optional<Var<Scalar>> recall(const std::string& key) {
    auto it = memo_.find(key);
    if (it == memo_.end()) return std::nullopt;
    return Var<Scalar>{this, it->second};
  }
  void remember(const std::string& key, Var<Scalar> v) { memo_[key] = v.id; }

 private:
  struct Node {
    const char* op = "";
    Mat own;
    const Mat* external = nullptr;
    Mat grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };

  Var<Scalar> push(Node node);

  std::vector<Node> nodes_;
  std::map<std::pair<const void*, std::string>, std::size_t> params_;
  std::map<std::string, std::size_t> memo_;
  bool record_;
  bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace tsasr
