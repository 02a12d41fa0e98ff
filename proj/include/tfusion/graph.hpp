#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "tfusion/tensor.hpp"

namespace tfusion {

// Reverse-mode tape. Nodes are appended in construction order, which is a
// topological order by construction; backward_from walks them in exact
// reverse order. One graph lives per training example and is dropped after
// the optimizer step; parameter grad buffers live on the tensors themselves
// so accumulation across examples survives graph teardown.
template <typename T>
class GraphT {
public:
    using BackwardFn = std::function<void(GraphT&)>;

    struct Node {
        const char* tag;
        std::vector<int> inputs;
        std::vector<int64_t> shape;
        std::shared_ptr<std::vector<T>> value;
        std::shared_ptr<std::vector<T>> grad;  // leaves: the tensor's own buffer
        BackwardFn backward;
        bool needs_grad = false;
        bool is_leaf = false;
    };

    // Registers t as a leaf, deduplicated on the data buffer so a weight used
    // by both Siamese branches resolves to one node and its gradients sum.
    int leaf(const TensorT<T>& t) {
        const void* key = t.data.get();
        auto it = leaf_ids_.find(key);
        if (it != leaf_ids_.end()) return it->second;
        Node n;
        n.tag = "leaf";
        n.shape = t.shape;
        n.value = t.data;
        n.needs_grad = t.requires_grad;
        n.is_leaf = true;
        if (t.requires_grad) n.grad = t.grad;
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(std::move(n));
        leaf_ids_.emplace(key, id);
        return id;
    }

    int record(const char* tag, std::vector<int> inputs, const TensorT<T>& out, BackwardFn backward) {
        Node n;
        n.tag = tag;
        n.inputs = std::move(inputs);
        n.shape = out.shape;
        n.value = out.data;
        n.backward = std::move(backward);
        for (int i : n.inputs)
            if (nodes_[static_cast<size_t>(i)].needs_grad) n.needs_grad = true;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
    size_t size() const { return nodes_.size(); }
    bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    const std::vector<T>& value(int id) const { return *nodes_[static_cast<size_t>(id)].value; }

    // Grad buffer of a node, allocated zeroed on first touch. Must only be
    // called for nodes with needs_grad.
    std::vector<T>& grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad) n.grad = std::make_shared<std::vector<T>>(n.value->size(), T(0));
        return *n.grad;
    }

    bool grad_touched(int id) const { return nodes_[static_cast<size_t>(id)].grad != nullptr; }

    void backward_from(const TensorT<T>& loss) {
        if (loss.graph != this || loss.node_id < 0)
            throw std::invalid_argument("backward: loss does not belong to this graph");
        if (loss.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape));
        // interior grads are per-call scratch; leaf grads are external and accumulate
        for (Node& n : nodes_)
            if (!n.is_leaf) n.grad.reset();
        grad(loss.node_id)[0] = T(1);
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!n.needs_grad || n.is_leaf || !n.grad || !n.backward) continue;
            n.backward(*this);
        }
    }

    // Branch signature: a hash over every data-dependent branch taken during
    // the forward pass (relu signs, pool argmaxes). Finite-difference checks
    // compare signatures of the +h/-h evaluations to detect kink crossings.
    void note_branch(uint64_t v) {
        sig_ ^= v + 0x9e3779b97f4a7c15ull + (sig_ << 6) + (sig_ >> 2);
    }
    uint64_t branch_signature() const { return sig_; }

private:
    std::vector<Node> nodes_;
    std::unordered_map<const void*, int> leaf_ids_;
    uint64_t sig_ = 1469598103934665603ull;
};

using Graph = GraphT<float>;

// Node id of t on graph g, registering it as a leaf if it is not an output of g.
template <typename T>
int input_id(GraphT<T>& g, const TensorT<T>& t) {
    if (t.graph == &g && t.node_id >= 0) return t.node_id;
    return g.leaf(t);
}

template <typename T>
void attach(TensorT<T>& t, GraphT<T>* g, int id) {
    t.graph = g;
    t.node_id = id;
}

}  // namespace tfusion
