// Copyright 2026 The rstisp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rstisp/layers.hpp"

#include <cmath>

#include "rstisp/errors.hpp"
#include "rstisp/ops.hpp"

namespace rstisp {

ag::Var ParameterSet::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  ag::Var v(std::move(init), true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, v);
  return v;
}

ag::Var ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

std::int64_t ParameterSet::count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

Tensor he_uniform(Rng& rng, Shape shape, std::int64_t fan_in, double slope) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  return rng.uniform_tensor(std::move(shape), -bound, bound);
}

Conv2d Conv2d::create(ParameterSet& params, Rng& rng, const std::string& name, std::int64_t in,
                      std::int64_t out, int kernel, int stride, bool bias) {
  Conv2d c;
  c.stride = stride;
  c.pad = kernel / 2;
  c.weight = params.add(name + ".weight", he_uniform(rng, {out, in, kernel, kernel}, in * kernel * kernel, 0.2));
  if (bias) c.bias = params.add(name + ".bias", Tensor({out}));
  return c;
}

ag::Var Conv2d::operator()(const ag::Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

ag::Var Conv2d::linear_part(const ag::Var& x) const { return ops::conv2d(x, weight, ag::Var(), stride, pad); }

Linear Linear::create(ParameterSet& params, Rng& rng, const std::string& name, std::int64_t in, std::int64_t out) {
  Linear l;
  l.weight = params.add(name + ".weight", he_uniform(rng, {out, in}, in, 0.2));
  l.bias = params.add(name + ".bias", Tensor({out}));
  return l;
}

ag::Var Linear::operator()(const ag::Var& x) const { return ops::linear(x, weight, bias); }

}  // namespace rstisp
