#pragma once

#include "tsasr/gradcore/gradients.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace tsasr {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with bias correction and decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
/// Moment state is keyed by parameter name and starts at zero.
template <typename Scalar>
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  /// `grads` must name exactly the trainable entries of `store`.
  void step(ParamStore<Scalar>& store, const GradMap<Scalar>& grads);
  /// Same, with a learning rate overriding options().lr for this step only.
  void step(ParamStore<Scalar>& store, const GradMap<Scalar>& grads, double lr);

  const AdamWOptions& options() const { return options_; }
  std::int64_t step_count() const { return steps_; }

  struct Moments {
    Matrix<Scalar> m;
    Matrix<Scalar> v;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamWOptions options_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace tsasr
