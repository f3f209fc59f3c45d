#pragma once

#include <cstdint>
#include <map>

#include "esgraph/params.hpp"

namespace esgraph::diff {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  bool amsgrad = true;
};

// AdamW with decoupled weight decay. With amsgrad the running maximum of the
// second-moment estimate replaces the current one in the denominator.
class AdamW {
 public:
  explicit AdamW(AdamWOptions opts = {}) : opts_(opts) {}

  // One update over every parameter in the store, using its current grad.
  void step(ParamStore& params, double lr);

  const AdamWOptions& options() const { return opts_; }
  std::int64_t steps() const { return t_; }

 private:
  struct State {
    Tensor m, v, vmax;
  };

  AdamWOptions opts_;
  std::map<std::string, State> state_;
  std::int64_t t_ = 0;
};

}  // namespace esgraph::diff
