#include "fancl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fancl {

namespace {

// The i-th requires_grad leaf on the tape corresponds to point[i].
std::vector<NodeId> grad_leaf_ids(const Tape<double>& tape) {
    std::vector<NodeId> ids;
    for (NodeId id = 0; id < static_cast<NodeId>(tape.size()); ++id) {
        const auto& n = tape.node(id);
        if (n.kind == OpKind::leaf && n.requires_grad) ids.push_back(id);
    }
    return ids;
}

}  // namespace

double grad_check(const SubgraphBuilder& build, const std::vector<Tensor<double>>& point,
                  const GradCheckOptions& opts) {
    Tape<double> tape;
    Var<double> loss = build(tape, point);
    if (loss.tape != &tape) throw ContractError("grad_check: builder returned a foreign tape");
    if (loss.value().numel() != 1)
        throw ContractError("grad_check: subgraph must produce a scalar");

    for (NodeId id = 0; id < static_cast<NodeId>(tape.size()); ++id) {
        const auto& n = tape.node(id);
        if (n.kind != OpKind::relu) continue;
        const Tensor<double>& x = tape.value(n.inputs.at(0));
        for (std::int64_t i = 0; i < x.numel(); ++i)
            if (std::abs(x[i]) < opts.kink_tol)
                throw KinkError("relu input within " + std::to_string(opts.kink_tol) +
                                " of zero at node " + std::to_string(id));
    }

    const std::vector<NodeId> leaves = grad_leaf_ids(tape);
    if (leaves.size() != point.size())
        throw ContractError("grad_check: builder added " + std::to_string(leaves.size()) +
                            " grad leaves for " + std::to_string(point.size()) + " inputs");
    for (std::size_t i = 0; i < leaves.size(); ++i)
        if (!tape.value(leaves[i]).same_dims(point[i]))
            throw ContractError("grad_check: leaf " + std::to_string(i) +
                                " dims do not match the input tensor");

    GradMap<double> grads = tape.backward(loss.id);

    auto eval_at = [&](const std::vector<Tensor<double>>& p) {
        Tape<double> t;
        Var<double> l = build(t, p);
        return l.value()[0];
    };

    double worst = 0.0;
    std::vector<Tensor<double>> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const Tensor<double>& analytic = grads.at(leaves[i]);
        for (std::int64_t j = 0; j < point[i].numel(); ++j) {
            const double keep = probe[i][j];
            probe[i][j] = keep + opts.h;
            const double up = eval_at(probe);
            probe[i][j] = keep - opts.h;
            const double down = eval_at(probe);
            probe[i][j] = keep;
            const double numeric = (up - down) / (2.0 * opts.h);
            const double a = analytic[j];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace fancl
