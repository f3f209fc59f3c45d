#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "esgraph/autodiff.hpp"

namespace esgraph::diff {

// Ordered parameter registry. Iteration follows name order, which keeps
// initialization, optimizer state, and checkpoints deterministic.
class ParamStore {
 public:
  Parameter& create(const std::string& name, std::vector<std::size_t> shape);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::size_t count() const { return params_.size(); }
  std::size_t total_size() const;
  void zero_grad();
  std::vector<std::string> names() const;
  std::vector<Parameter*> all();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

// Glorot-uniform fill for rank-2 weights (limit sqrt(6/(fan_in+fan_out)))
// and zeros for rank-1 biases. Every tensor draws from its own stream keyed
// by (seed, name), so values do not depend on registration order.
void init_params(ParamStore& store, std::uint64_t seed);

}  // namespace esgraph::diff
