#include "tsasr/gradcore/graph.hpp"

#include "tsasr/errors.hpp"

namespace tsasr {

template <typename Scalar>
Var<Scalar> Graph<Scalar>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<Scalar>{this, nodes_.size() - 1};
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::constant(Mat value) {
  Node n;
  n.op = "constant";
  n.own = std::move(value);
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::variable(Mat value) {
  Node n;
  n.op = "variable";
  n.own = std::move(value);
  n.requires_grad = record_;
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::param(const ParamStore<Scalar>& store, const std::string& name) {
  const auto key = std::make_pair(static_cast<const void*>(&store), name);
  if (auto it = params_.find(key); it != params_.end()) return Var<Scalar>{this, it->second};
  Node n;
  n.op = "param";
  n.external = &store.value(name);
  n.requires_grad = record_ && store.trainable(name);
  Var<Scalar> v = push(std::move(n));
  params_.emplace(key, v.id);
  return v;
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::emit(const char* op, Mat value, std::initializer_list<Var<Scalar>> parents,
                                Backward backward) {
  Node n;
  n.op = op;
  n.own = std::move(value);
  if (record_) {
    for (const auto& p : parents) {
      if (p.graph != this) throw ContractError(std::string(op) + ": operand belongs to another graph");
      n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::emit(const char* op, Mat value, const std::vector<Var<Scalar>>& parents,
                                Backward backward) {
  Node n;
  n.op = op;
  n.own = std::move(value);
  if (record_) {
    for (const auto& p : parents) {
      if (p.graph != this) throw ContractError(std::string(op) + ": operand belongs to another graph");
      n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

template <typename Scalar>
const typename Graph<Scalar>::Mat& Graph<Scalar>::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.own;
}

template <typename Scalar>
typename Graph<Scalar>::Mat& Graph<Scalar>::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    const Mat& v = n.external ? *n.external : n.own;
    n.grad = Mat::Zero(v.rows(), v.cols());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename Scalar>
const typename Graph<Scalar>::Mat* Graph<Scalar>::grad_if_present(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.has_grad ? &n.grad : nullptr;
}

template <typename Scalar>
void Graph<Scalar>::backward(Var<Scalar> loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
  if (!record_) throw ContractError("backward: graph was built without recording");
  if (backward_done_) throw ContractError("backward: graph already consumed");
  const Mat& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ContractError("backward: loss must be a scalar, got " + to_string(shape_of(lv)));
  backward_done_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id)(0, 0) = Scalar(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
    n.backward = nullptr;
  }
}

template <typename Scalar>
const typename Graph<Scalar>::Mat* Graph<Scalar>::param_grad(const ParamStore<Scalar>& store,
                                                             const std::string& name) const {
  auto it = params_.find(std::make_pair(static_cast<const void*>(&store), name));
  if (it == params_.end()) return nullptr;
  return grad_if_present(it->second);
}

template <typename Scalar>
std::optional<std::string> Graph<Scalar>::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!value(i).allFinite()) return std::string(nodes_[i].op);
  }
  return std::nullopt;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace tsasr
