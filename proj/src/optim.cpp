#include "esgraph/optim.hpp"

#include <cmath>

#include "esgraph/error.hpp"

namespace esgraph::diff {

void AdamW::step(ParamStore& params, double lr) {
  if (!(lr > 0.0)) fail(ErrorCategory::kDomain, "AdamW: lr must be positive");
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));

  for (auto& [name, p] : params) {
    auto it = state_.find(name);
    if (it == state_.end()) {
      State st;
      st.m = Tensor(p.value.shape());
      st.v = Tensor(p.value.shape());
      if (opts_.amsgrad) st.vmax = Tensor(p.value.shape());
      it = state_.emplace(name, std::move(st)).first;
    }
    State& st = it->second;
    if (!st.m.same_shape(p.value))
      fail(ErrorCategory::kDomain, "AdamW: state shape mismatch for " + name);

    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.value[i] -= lr * opts_.weight_decay * p.value[i];
      st.m[i] = opts_.beta1 * st.m[i] + (1.0 - opts_.beta1) * g;
      st.v[i] = opts_.beta2 * st.v[i] + (1.0 - opts_.beta2) * g * g;
      double vhat = st.v[i] / bc2;
      if (opts_.amsgrad) {
        const double cand = st.v[i];
        if (cand > st.vmax[i]) st.vmax[i] = cand;
        vhat = st.vmax[i] / bc2;
      }
      p.value[i] -= lr * (st.m[i] / bc1) / (std::sqrt(vhat) + opts_.eps);
    }
    if (!p.value.all_finite())
      fail(ErrorCategory::kDomain, "AdamW: non-finite parameter after update: " + name);
  }
}

}  // namespace esgraph::diff
