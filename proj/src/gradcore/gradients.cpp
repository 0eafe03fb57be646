#include "tsasr/gradcore/gradients.hpp"

#include "tsasr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace tsasr {

template <typename Scalar>
GradMap<Scalar> grad_all(Var<Scalar> loss, const ParamStore<Scalar>& store) {
  Graph<Scalar>& g = *loss.graph;
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("grad_all: loss must be scalar, got " + to_string(loss.shape()));
  if (!g.backward_done()) g.backward(loss);
  GradMap<Scalar> out;
  for (const auto& [name, t] : store.entries()) {
    if (!t.requires_grad) continue;
    const Matrix<Scalar>* gr = g.param_grad(store, name);
    out.emplace(name, gr ? *gr : Matrix<Scalar>::Zero(t.data.rows(), t.data.cols()));
  }
  return out;
}

template <typename Scalar>
void accumulate(GradMap<Scalar>& dst, const GradMap<Scalar>& src) {
  for (const auto& [name, gr] : src) {
    auto it = dst.find(name);
    if (it == dst.end())
      dst.emplace(name, gr);
    else
      it->second += gr;
  }
}

namespace {

double evaluate(const LossFn& f) {
  Graph<double> g(false);
  Var<double> loss = f(g);
  if (loss.rows() != 1 || loss.cols() != 1) throw ContractError("grad_check: loss must be scalar");
  const double v = loss.value()(0, 0);
  if (!std::isfinite(v)) {
    const auto op = g.first_non_finite();
    throw NumericError("grad_check: non-finite value produced by '" + op.value_or("unknown") + "'");
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossFn& f, ParamStore<double>& store, double eps, double rtol, double atol) {
  GradMap<double> analytic;
  {
    Graph<double> g(true);
    Var<double> loss = f(g);
    if (!loss.value().allFinite()) {
      const auto op = g.first_non_finite();
      throw NumericError("grad_check: non-finite value produced by '" + op.value_or("unknown") + "'");
    }
    analytic = grad_all(loss, store);
  }
  GradCheckReport report;
  const double floor = atol / rtol;
  for (auto& [name, ga] : analytic) {
    Matrix<double>& value = store.mutable_value(name);
    for (Index i = 0; i < value.size(); ++i) {
      const double orig = value.data()[i];
      value.data()[i] = orig + eps;
      const double up = evaluate(f);
      value.data()[i] = orig - eps;
      const double down = evaluate(f);
      value.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = ga.data()[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.checked;
      if (report.worst_param.empty() || err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

template GradMap<float> grad_all(Var<float>, const ParamStore<float>&);
template GradMap<double> grad_all(Var<double>, const ParamStore<double>&);
template void accumulate(GradMap<float>&, const GradMap<float>&);
template void accumulate(GradMap<double>&, const GradMap<double>&);

}  // namespace tsasr
