#include "tsasr/gradcore/adamw.hpp"

#include "tsasr/errors.hpp"

#include <cmath>

namespace tsasr {

template <typename Scalar>
void AdamW<Scalar>::step(ParamStore<Scalar>& store, const GradMap<Scalar>& grads) {
  step(store, grads, options_.lr);
}

template <typename Scalar>
void AdamW<Scalar>::step(ParamStore<Scalar>& store, const GradMap<Scalar>& grads, double lr) {
  for (const auto& [name, g] : grads) {
    if (!store.contains(name)) throw ContractError("adamw: gradient for unknown parameter '" + name + "'");
    if (!store.trainable(name)) throw ContractError("adamw: gradient for frozen parameter '" + name + "'");
    if (shape_of(g) != shape_of(store.value(name)))
      throw ShapeError("adamw: gradient shape mismatch for '" + name + "'");
  }
  for (const auto& name : store.trainable_names())
    if (grads.count(name) == 0) throw ContractError("adamw: missing gradient for trainable '" + name + "'");

  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const auto& [name, g] : grads) {
    Matrix<Scalar>& p = store.mutable_value(name);
    auto [it, fresh] = moments_.try_emplace(name);
    if (fresh) {
      it->second.m = Matrix<Scalar>::Zero(p.rows(), p.cols());
      it->second.v = Matrix<Scalar>::Zero(p.rows(), p.cols());
    }
    auto& m = it->second.m;
    auto& v = it->second.v;
    m = Scalar(b1) * m + Scalar(1.0 - b1) * g;
    v = Scalar(b2) * v + Scalar(1.0 - b2) * g.cwiseAbs2();
    if (options_.weight_decay != 0.0) p *= Scalar(1.0 - lr * options_.weight_decay);
    const auto m_hat = m.array() / Scalar(c1);
    const auto v_hat = v.array() / Scalar(c2);
    p.array() -= Scalar(lr) * m_hat / (v_hat.sqrt() + Scalar(options_.eps));
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace tsasr
