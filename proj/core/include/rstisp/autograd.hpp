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

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rstisp/tensor.hpp"

namespace rstisp::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Maps the upstream gradient to one gradient per parent. An empty Tensor
/// means "no contribution" (e.g. the parent does not require grad).
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out, const Node& self)>;

struct Node {
  Tensor value;
  Tensor grad;  // accumulated by backward() on leaves only
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
  const Tensor& parent_value(std::size_t i) const { return parents[i]->value; }
  bool parent_requires_grad(std::size_t i) const { return parents[i]->requires_grad; }
};

/// Handle to a node of the dynamic computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Direct write access, used by optimizers on leaf parameters.
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(int axis) const { return node_->value.dim(axis); }
  double item() const { return node_->value.item(); }
  const NodePtr& node() const { return node_; }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

 private:
  NodePtr node_;
};

/// Records `fn` only when grad mode is on and some parent requires grad.
Var make_result(Tensor value, std::vector<Var> parents, BackwardFn fn);

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
/// `root` must hold a single element.
void backward(const Var& root);

/// Returns d(root)/d(input) for each input without touching any leaf's
/// accumulated grad. Unreached inputs get zero tensors.
std::vector<Tensor> grad(const Var& root, const std::vector<Var>& inputs);

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace rstisp::ag
