#pragma once

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lama/ops.hpp"
#include "lama/tensor.hpp"

namespace lama {

/// Reverse-mode sweep over the graph rooted at a scalar.
class Engine {
 public:
  // Gradients of `root` with respect to `inputs`. Inputs the root does not
  // depend on get exact zeros. With create_graph the returned gradients are
  // themselves differentiable.
  static std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& inputs,
                                  bool create_graph = false) {
    std::unordered_set<const detail::TensorImpl*> targets;
    for (const auto& t : inputs) targets.insert(t.id());
    auto grads = run(root, targets, create_graph);
    std::vector<Tensor> out;
    out.reserve(inputs.size());
    for (const auto& t : inputs) {
      auto it = grads.find(t.id());
      out.push_back(it != grads.end() ? it->second : Tensor::zeros(t.shape()));
    }
    return out;
  }

  static void backward(const Tensor& root) {
    auto grads = run(root, {}, false);
    for (auto& [impl, g] : grads) {
      auto* leaf = const_cast<detail::TensorImpl*>(impl);
      if (leaf->grad_fn || !leaf->requires_grad) continue;
      if (leaf->grad.empty()) leaf->grad.assign(leaf->data.size(), 0.0);
      for (std::size_t i = 0; i < leaf->grad.size(); ++i) leaf->grad[i] += g[i];
    }
  }

 private:
  using ImplPtr = const detail::TensorImpl*;

  // Empty `targets` means every reachable leaf.
  static std::unordered_map<ImplPtr, Tensor> run(const Tensor& root,
                                                 const std::unordered_set<ImplPtr>& targets,
                                                 bool create_graph) {
    if (!root.defined() || root.numel() != 1)
      throw GraphError("backward requires a scalar root");
    std::unordered_map<ImplPtr, Tensor> grads;
    if (!root.requires_grad()) return grads;

    // Iterative DFS post-order; colour 1 = on stack, 2 = done.
    std::vector<Tensor> order;
    std::unordered_map<ImplPtr, int> colour;
    std::unordered_map<ImplPtr, bool> useful;
    struct Frame {
      Tensor t;
      std::size_t next;
    };
    std::vector<Frame> stack{{root, 0}};
    colour[root.id()] = 1;
    while (!stack.empty()) {
      auto& f = stack.back();
      const Node* node = f.t.grad_fn();
      if (node && f.next < node->inputs.size()) {
        const Tensor& in = node->inputs[f.next++];
        if (!in.requires_grad()) continue;
        int& c = colour[in.id()];
        if (c == 1) throw GraphError("cycle detected in computation graph");
        if (c == 0) {
          c = 1;
          stack.push_back({in, 0});
        }
        continue;
      }
      ImplPtr id = f.t.id();
      bool u = targets.empty() ? !node : targets.count(id) > 0;
      if (node)
        for (const auto& in : node->inputs) u = u || (in.requires_grad() && useful[in.id()]);
      useful[id] = u;
      colour[id] = 2;
      order.push_back(f.t);
      stack.pop_back();
    }

    GradModeGuard mode(create_graph);
    grads[root.id()] = Tensor::ones(root.shape());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Tensor& t = *it;
      const Node* node = t.grad_fn();
      if (!node || !useful[t.id()]) continue;
      auto g = grads.find(t.id());
      if (g == grads.end()) continue;
      if (create_graph && !node->twice_differentiable)
        throw GraphError(std::string("non-differentiable path: second-order gradient through ") +
                         node->name);
      std::vector<bool> needs(node->inputs.size());
      for (std::size_t i = 0; i < needs.size(); ++i)
        needs[i] = node->inputs[i].requires_grad() && useful[node->inputs[i].id()];
      Tensor gout = g->second;
      if (!targets.count(t.id())) grads.erase(g);
      auto in_grads = node->backward(gout, needs);
      for (std::size_t i = 0; i < needs.size(); ++i) {
        if (!needs[i] || !in_grads[i].defined()) continue;
        ImplPtr id = node->inputs[i].id();
        auto slot = grads.find(id);
        if (slot == grads.end())
          grads.emplace(id, in_grads[i]);
        else
          slot->second = add(slot->second, in_grads[i]);
      }
    }
    if (!targets.empty())
      for (auto it = grads.begin(); it != grads.end();)
        it = targets.count(it->first) ? std::next(it) : grads.erase(it);
    for (const auto& [id, g] : grads)
      for (double v : g.values())
        if (!std::isfinite(v)) throw NumericError("non-finite gradient");
    return grads;
  }
};

inline std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& inputs,
                                bool create_graph = false) {
  return Engine::grad(root, inputs, create_graph);
}

inline void backward(const Tensor& root) { Engine::backward(root); }

}  // namespace lama
