#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fancl/tensor.hpp"

namespace fancl {

enum class OpKind : std::uint8_t {
    leaf,
    add,
    mul,
    scale,
    relu,
    sigmoid,
    exp,
    log,
    matmul,
    conv2d,
    batchnorm,
    global_avg_pool,
    l2_normalize,
    concat,
    sum,
};

const char* op_name(OpKind kind);

struct OpAttrs {
    std::int64_t stride = 1;   // conv2d
    std::int64_t pad = 0;      // conv2d
    std::int64_t axis = 0;     // concat
    double scale = 1.0;        // scale
    double eps = 0.0;          // batchnorm, l2_normalize
    bool training = false;     // batchnorm
};

using NodeId = std::int32_t;

/// Gradients keyed by tape node id. Nodes that did not participate in the
/// backward pass have no entry.
template <typename T>
class GradMap {
public:
    explicit GradMap(std::size_t n) : grads_(n) {}

    bool has(NodeId id) const { return grads_.at(id).has_value(); }

    const Tensor<T>& at(NodeId id) const {
        const auto& g = grads_.at(id);
        if (!g) throw ContractError("no gradient recorded for node " + std::to_string(id));
        return *g;
    }

    /// Accumulation slot; created zero-filled on first access.
    Tensor<T>& slot(NodeId id, const Dims& dims) {
        auto& g = grads_.at(id);
        if (!g) g.emplace(dims);
        return *g;
    }

    std::size_t size() const { return grads_.size(); }

private:
    std::vector<std::optional<Tensor<T>>> grads_;
};

/// Record of differentiable operations in construction order. Node inputs
/// always reference earlier nodes, so ids are already a topological order.
template <typename T>
class Tape {
public:
    struct Node {
        OpKind kind = OpKind::leaf;
        std::vector<NodeId> inputs;
        OpAttrs attrs;
        Tensor<T> value;
        std::vector<Tensor<T>> saved;  // op intermediates (batch stats, row norms)
        bool requires_grad = false;
    };

    /// New leaf; gradient participation follows value.requires_grad.
    NodeId leaf(Tensor<T> value);
    NodeId leaf(Tensor<T> value, bool requires_grad);
    NodeId constant(Tensor<T> value) { return leaf(std::move(value), false); }

    /// Validates inputs, computes the forward value, records the node.
    NodeId apply(OpKind kind, const std::vector<NodeId>& inputs, const OpAttrs& attrs = {});

    const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
    const Node& node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse-mode sweep from a scalar node. Every requires_grad leaf gets
    /// an entry; leaves the loss does not depend on get zeros.
    GradMap<T> backward(NodeId loss) const;

    /// Recomputes all non-leaf values from the leaves and compares them
    /// bit-for-bit against the recorded ones.
    bool replay_matches() const;

private:
    Tensor<T> eval(const Node& n, std::vector<Tensor<T>>* saved_out) const;
    std::vector<Node> nodes_;
};

/// Handle pairing a node with its tape, so op compositions read naturally.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    NodeId id = -1;

    const Tensor<T>& value() const { return tape->value(id); }
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template class GradMap<float>;
extern template class GradMap<double>;

}  // namespace fancl
