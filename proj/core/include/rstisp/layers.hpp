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

#pragma once

#include <map>
#include <string>
#include <vector>

#include "rstisp/autograd.hpp"
#include "rstisp/random.hpp"

namespace rstisp {

/// Ordered, name-keyed collection of trainable leaves.
class ParameterSet {
 public:
  ag::Var add(const std::string& name, Tensor init);

  const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
  ag::Var find(const std::string& name) const;
  std::int64_t count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, ag::Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform He initialization for a layer with `fan_in` inputs followed by a
/// leaky rectifier of the given slope.
Tensor he_uniform(Rng& rng, Shape shape, std::int64_t fan_in, double slope);

struct Conv2d {
  ag::Var weight;
  ag::Var bias;
  int stride = 1;
  int pad = 0;

  static Conv2d create(ParameterSet& params, Rng& rng, const std::string& name, std::int64_t in,
                       std::int64_t out, int kernel, int stride = 1, bool bias = true);
  ag::Var operator()(const ag::Var& x) const;
  /// Same linear map without the bias (used for tangent propagation).
  ag::Var linear_part(const ag::Var& x) const;
};

struct Linear {
  ag::Var weight;
  ag::Var bias;

  static Linear create(ParameterSet& params, Rng& rng, const std::string& name, std::int64_t in,
                       std::int64_t out);
  ag::Var operator()(const ag::Var& x) const;
};

}  // namespace rstisp
