#pragma once

#include "tsasr/gradcore/graph.hpp"

#include <functional>
#include <map>
#include <string>

namespace tsasr {

template <typename Scalar>
using GradMap = std::map<std::string, Matrix<Scalar>>;

/// Runs backward from `loss` (if not already done) and returns one gradient
/// per trainable entry of `store`. Entries the loss does not reach get zeros;
/// frozen entries are absent.
template <typename Scalar>
GradMap<Scalar> grad_all(Var<Scalar> loss, const ParamStore<Scalar>& store);

/// Adds `src` into `dst`, inserting missing names.
template <typename Scalar>
void accumulate(GradMap<Scalar>& dst, const GradMap<Scalar>& src);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  std::size_t checked = 0;
};

/// Builds the loss inside the given graph. Must be deterministic.
using LossFn = std::function<Var<double>(Graph<double>&)>;

/// Central-difference check of every trainable scalar in `store`. The per-scalar
/// error is |analytic - numeric| / max(|analytic|, |numeric|, atol / rtol), so a
/// report of max_rel_err <= rtol means every scalar agrees within rtol or atol.
GradCheckReport grad_check(const LossFn& f, ParamStore<double>& store, double eps = 1e-5, double rtol = 1e-4,
                           double atol = 1e-6);

extern template GradMap<float> grad_all(Var<float>, const ParamStore<float>&);
extern template GradMap<double> grad_all(Var<double>, const ParamStore<double>&);
extern template void accumulate(GradMap<float>&, const GradMap<float>&);
extern template void accumulate(GradMap<double>&, const GradMap<double>&);

}  // namespace tsasr
