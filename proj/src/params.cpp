#include "esgraph/params.hpp"

#include <cmath>

#include "esgraph/error.hpp"

namespace esgraph::diff {

Parameter& ParamStore::create(const std::string& name, std::vector<std::size_t> shape) {
  if (params_.count(name))
    fail(ErrorCategory::kInternal, "duplicate parameter name: " + name);
  auto [it, ok] = params_.emplace(name, Parameter(name, Tensor(std::move(shape))));
  (void)ok;
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorCategory::kInternal, "unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorCategory::kInternal, "unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& [name, p] : params_) out.push_back(&p);
  return out;
}

void init_params(ParamStore& store, std::uint64_t seed) {
  RandomSource root(seed);
  for (auto& [name, p] : store) {
    if (p.value.rank() >= 2) {
      const double fan_in = static_cast<double>(p.value.shape()[0]);
      const double fan_out = static_cast<double>(p.value.shape()[1]);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      RandomSource rng = root.fork(name);
      for (std::size_t i = 0; i < p.value.size(); ++i)
        p.value[i] = rng.uniform(-limit, limit);
    } else {
      p.value.fill(0.0);
    }
    p.zero_grad();
  }
}

}  // namespace esgraph::diff
