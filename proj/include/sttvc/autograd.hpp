#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sttvc/tensor.hpp"

namespace sttvc {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Backward functions read node.grad and accumulate into the inputs.
using BackwardFn = std::function<void(Node& node)>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    BackwardFn backward;

    Tensor& grad_buffer();
    void accumulate_grad(const Tensor& g);
};

// Handle to a node of the dynamically built computation graph.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    int dim(int i) const { return node_->value.dim(i); }
    std::int64_t numel() const { return node_->value.numel(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor(); }

    // Detached copy sharing no graph history.
    Var detach() const { return Var(node_->value, false); }

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// Graph recording is enabled per thread; disabled under NoGradGuard.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Builds a result node. When recording is off or no input needs a gradient,
// the node is a constant and the inputs are not retained.
Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward);

// Reverse sweep from a scalar root, seeding d(root)/d(root) = 1.
void backward(const Var& root);
// Reverse sweep with an explicit seed gradient of the root's shape.
void backward(const Var& root, const Tensor& seed);

}  // namespace sttvc
