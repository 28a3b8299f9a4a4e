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

#include "rstisp/autograd.hpp"

#include <unordered_map>
#include <unordered_set>

#include "rstisp/errors.hpp"

namespace rstisp::ag {

namespace {

thread_local bool g_grad_enabled = true;

// Reverse topological order of the subgraph that requires grad.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return {order.rbegin(), order.rend()};
}

void accumulate(std::unordered_map<Node*, Tensor>& grads, Node* node, Tensor g) {
  auto it = grads.find(node);
  if (it == grads.end()) {
    grads.emplace(node, std::move(g));
  } else {
    it->second.add_(g);
  }
}

// Runs the backward sweep; keeps gradients of `keep` nodes and leaves.
std::unordered_map<Node*, Tensor> run_backward(const Var& root, const std::unordered_set<Node*>& keep,
                                               bool keep_leaves) {
  if (!root.defined()) throw ContractError("backward on undefined Var");
  if (root.value().size() != 1) {
    throw ContractError("backward root must be a scalar, got shape " + shape_to_string(root.shape()));
  }
  std::unordered_map<Node*, Tensor> grads;
  if (!root.requires_grad()) return grads;
  Node* r = root.node().get();
  grads.emplace(r, Tensor(r->value.shape(), 1.0));
  for (Node* node : topo_order(r)) {
    auto it = grads.find(node);
    if (it == grads.end()) continue;
    if (node->is_leaf()) continue;
    Tensor g = std::move(it->second);
    if (!keep.contains(node)) {
      grads.erase(it);
    } else {
      it->second = g;
    }
    auto parent_grads = node->backward(g, *node);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      if (i >= parent_grads.size() || parent_grads[i].size() == 0) continue;
      Node* p = node->parents[i].get();
      if (!p->requires_grad) continue;
      if (parent_grads[i].size() != p->value.size()) {
        throw ContractError("backward produced gradient of shape " + shape_to_string(parent_grads[i].shape()) +
                            " for value of shape " + shape_to_string(p->value.shape()));
      }
      accumulate(grads, p, std::move(parent_grads[i]));
    }
  }
  if (!keep_leaves) {
    for (auto it = grads.begin(); it != grads.end();) {
      it = keep.contains(it->first) ? std::next(it) : grads.erase(it);
    }
  }
  return grads;
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var make_result(Tensor value, std::vector<Var> parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(fn);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  auto grads = run_backward(root, {}, true);
  for (auto& [node, g] : grads) {
    if (!node->is_leaf()) continue;
    if (node->grad.size() == 0) {
      node->grad = std::move(g).reshaped(node->value.shape());
    } else {
      node->grad.add_(g);
    }
  }
}

std::vector<Tensor> grad(const Var& root, const std::vector<Var>& inputs) {
  std::unordered_set<Node*> keep;
  for (const auto& v : inputs) keep.insert(v.node().get());
  auto grads = run_backward(root, keep, false);
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& v : inputs) {
    auto it = grads.find(v.node().get());
    out.push_back(it == grads.end() ? Tensor(v.shape()) : it->second.reshaped(v.shape()));
  }
  return out;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace rstisp::ag
