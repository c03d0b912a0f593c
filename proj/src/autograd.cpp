#include "sttvc/autograd.hpp"

#include <unordered_set>

namespace sttvc {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer()
{
    if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
    return grad;
}

void Node::accumulate_grad(const Tensor& g)
{
    if (grad.empty())
        grad = g;
    else
        grad += g;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>())
{
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward)
{
    bool needs = false;
    if (g_grad_enabled)
        for (const Var& v : inputs)
            if (v.requires_grad()) needs = true;
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (needs) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const Var& v : inputs) node->inputs.push_back(v.node());
        node->backward = std::move(backward);
    }
    return Var(std::move(node));
}

void backward(const Var& root) { backward(root, Tensor(root.shape(), 1.0)); }

void backward(const Var& root, const Tensor& seed)
{
    require_same_shape(root.value(), seed, "backward seed");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS; reversed order is a valid topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child && child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->accumulate_grad(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->backward || node->grad.empty()) continue;
        node->backward(*node);
        // Interior gradients are no longer needed once propagated.
        node->grad = Tensor();
    }
}

}  // namespace sttvc
