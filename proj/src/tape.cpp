#include "fancl/tape.hpp"

#include <cmath>

#include "fancl/kernels.hpp"

namespace fancl {

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::matmul: return "matmul";
        case OpKind::conv2d: return "conv2d";
        case OpKind::batchnorm: return "batchnorm";
        case OpKind::global_avg_pool: return "global_avg_pool";
        case OpKind::l2_normalize: return "l2_normalize";
        case OpKind::concat: return "concat";
        case OpKind::sum: return "sum";
    }
    return "?";
}

namespace {

template <typename T>
Tensor<T> invstd_from_var(const Tensor<T>& var, double eps) {
    Tensor<T> out(var.dims());
    for (std::int64_t i = 0; i < var.numel(); ++i)
        out[i] = T(1) / std::sqrt(var[i] + static_cast<T>(eps));
    return out;
}

}  // namespace

template <typename T>
NodeId Tape<T>::leaf(Tensor<T> value) {
    const bool rg = value.requires_grad;
    return leaf(std::move(value), rg);
}

template <typename T>
NodeId Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
    check_finite(value, "tape leaf");
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
Tensor<T> Tape<T>::eval(const Node& n, std::vector<Tensor<T>>* saved_out) const {
    auto in = [&](std::size_t i) -> const Tensor<T>& { return nodes_.at(n.inputs.at(i)).value; };
    switch (n.kind) {
        case OpKind::leaf:
            return n.value;
        case OpKind::add:
            return kern::add(in(0), in(1));
        case OpKind::mul:
            return kern::mul(in(0), in(1));
        case OpKind::scale:
            return kern::scale(in(0), n.attrs.scale);
        case OpKind::relu:
            return kern::relu(in(0));
        case OpKind::sigmoid:
            return kern::sigmoid(in(0));
        case OpKind::exp:
            return kern::exp(in(0));
        case OpKind::log:
            return kern::log(in(0));
        case OpKind::matmul:
            return kern::matmul(in(0), in(1));
        case OpKind::conv2d:
            return kern::conv2d(in(0), in(1), in(2), n.attrs.stride, n.attrs.pad);
        case OpKind::batchnorm: {
            Tensor<T> mean, var;
            if (n.attrs.training) {
                if (n.inputs.size() != 3)
                    throw ShapeError("batchnorm: train mode takes (x, gamma, beta)");
                kern::batchnorm_stats(in(0), mean, var);
            } else {
                if (n.inputs.size() != 5)
                    throw ShapeError("batchnorm: eval mode takes (x, gamma, beta, mean, var)");
                mean = in(3);
                var = in(4);
            }
            Tensor<T> invstd = invstd_from_var(var, n.attrs.eps);
            if (saved_out) *saved_out = {mean, invstd};
            return kern::batchnorm_apply(in(0), in(1), in(2), mean, invstd);
        }
        case OpKind::global_avg_pool:
            return kern::global_avg_pool(in(0));
        case OpKind::l2_normalize: {
            Tensor<T> norms;
            Tensor<T> out = kern::l2_normalize(in(0), n.attrs.eps, &norms);
            if (saved_out) *saved_out = {std::move(norms)};
            return out;
        }
        case OpKind::concat: {
            std::vector<const Tensor<T>*> parts;
            parts.reserve(n.inputs.size());
            for (std::size_t i = 0; i < n.inputs.size(); ++i) parts.push_back(&in(i));
            return kern::concat(parts, n.attrs.axis);
        }
        case OpKind::sum:
            return kern::reduce_sum(in(0));
    }
    throw ContractError("unknown op kind");
}

template <typename T>
NodeId Tape<T>::apply(OpKind kind, const std::vector<NodeId>& inputs, const OpAttrs& attrs) {
    if (kind == OpKind::leaf) throw ContractError("apply: use leaf() to add leaves");
    Node n;
    n.kind = kind;
    n.inputs = inputs;
    n.attrs = attrs;
    const auto self = static_cast<NodeId>(nodes_.size());
    for (NodeId id : inputs) {
        if (id < 0 || id >= self)
            throw ContractError(std::string(op_name(kind)) + ": input id " + std::to_string(id) +
                                " out of range");
        if (!nodes_[id].value.all_finite())
            throw NumericError(std::string(op_name(kind)) + ": non-finite input (node " +
                               std::to_string(id) + ")");
        n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    }
    n.value = eval(n, &n.saved);
    check_finite(n.value, std::string(op_name(kind)) + " output");
    nodes_.push_back(std::move(n));
    return self;
}

template <typename T>
bool Tape<T>::replay_matches() const {
    for (const Node& n : nodes_) {
        if (n.kind == OpKind::leaf) continue;
        Tensor<T> again = eval(n, nullptr);
        if (!(again == n.value)) return false;
    }
    return true;
}

template <typename T>
GradMap<T> Tape<T>::backward(NodeId loss) const {
    if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size()))
        throw ContractError("backward: node id out of range");
    const Node& top = nodes_[loss];
    if (top.value.numel() != 1)
        throw ContractError("backward: loss must be scalar, got dims " +
                            dims_to_string(top.value.dims()));

    GradMap<T> grads(nodes_.size());
    grads.slot(loss, top.value.dims()).fill(T(1));

    for (NodeId id = loss; id >= 0; --id) {
        const Node& n = nodes_[id];
        if (n.kind == OpKind::leaf || !n.requires_grad || !grads.has(id)) continue;
        const Tensor<T>& g = grads.at(id);

        auto want = [&](std::size_t i) { return nodes_[n.inputs[i]].requires_grad; };
        auto in = [&](std::size_t i) -> const Tensor<T>& { return nodes_[n.inputs[i]].value; };
        auto slot = [&](std::size_t i) -> Tensor<T>& {
            return grads.slot(n.inputs[i], in(i).dims());
        };

        switch (n.kind) {
            case OpKind::leaf:
                break;
            case OpKind::add: {
                if (want(0)) {
                    Tensor<T>& ga = slot(0);
                    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
                }
                if (want(1)) {
                    Tensor<T>& gb = slot(1);
                    if (in(1).same_dims(n.value)) {
                        for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
                    } else {  // row-broadcast rhs: reduce over rows
                        const std::int64_t rows = g.dim(0), cols = g.dim(1);
                        for (std::int64_t r = 0; r < rows; ++r)
                            for (std::int64_t c = 0; c < cols; ++c) gb[c] += g.at(r, c);
                    }
                }
                break;
            }
            case OpKind::mul: {
                if (want(0)) {
                    Tensor<T>& ga = slot(0);
                    const Tensor<T>& b = in(1);
                    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * b[i];
                }
                if (want(1)) {
                    Tensor<T>& gb = slot(1);
                    const Tensor<T>& a = in(0);
                    for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * a[i];
                }
                break;
            }
            case OpKind::scale: {
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    const T s = static_cast<T>(n.attrs.scale);
                    for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * s;
                }
                break;
            }
            case OpKind::relu: {
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    const Tensor<T>& x = in(0);
                    for (std::int64_t i = 0; i < g.numel(); ++i)
                        if (x[i] > T(0)) gx[i] += g[i];
                }
                break;
            }
            case OpKind::sigmoid: {
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    const Tensor<T>& y = n.value;
                    for (std::int64_t i = 0; i < g.numel(); ++i)
                        gx[i] += g[i] * y[i] * (T(1) - y[i]);
                }
                break;
            }
            case OpKind::exp: {
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    const Tensor<T>& y = n.value;
                    for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i];
                }
                break;
            }
            case OpKind::log: {
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    const Tensor<T>& x = in(0);
                    for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] / x[i];
                }
                break;
            }
            case OpKind::matmul: {
                const Tensor<T>& a = in(0);
                const Tensor<T>& b = in(1);
                const std::int64_t m = a.dim(0), k = a.dim(1);
                if (b.rank() == 2) {
                    const std::int64_t nn = b.dim(1);
                    if (want(0)) {
                        Tensor<T>& ga = slot(0);
                        for (std::int64_t i = 0; i < m; ++i)
                            for (std::int64_t c = 0; c < nn; ++c) {
                                const T gv = g.at(i, c);
                                if (gv == T(0)) continue;
                                for (std::int64_t j = 0; j < k; ++j) ga.at(i, j) += gv * b.at(j, c);
                            }
                    }
                    if (want(1)) {
                        Tensor<T>& gb = slot(1);
                        for (std::int64_t i = 0; i < m; ++i)
                            for (std::int64_t j = 0; j < k; ++j) {
                                const T av = a.at(i, j);
                                if (av == T(0)) continue;
                                for (std::int64_t c = 0; c < nn; ++c) gb.at(j, c) += av * g.at(i, c);
                            }
                    }
                } else {  // (m,k) x (k) -> (m)
                    if (want(0)) {
                        Tensor<T>& ga = slot(0);
                        for (std::int64_t i = 0; i < m; ++i)
                            for (std::int64_t j = 0; j < k; ++j) ga.at(i, j) += g[i] * b[j];
                    }
                    if (want(1)) {
                        Tensor<T>& gb = slot(1);
                        for (std::int64_t i = 0; i < m; ++i)
                            for (std::int64_t j = 0; j < k; ++j) gb[j] += a.at(i, j) * g[i];
                    }
                }
                break;
            }
            case OpKind::conv2d: {
                const Tensor<T>& x = in(0);
                const Tensor<T>& w = in(1);
                const std::int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
                const std::int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
                const std::int64_t Ho = g.dim(2), Wo = g.dim(3);
                const std::int64_t stride = n.attrs.stride, pad = n.attrs.pad;
                const bool wx = want(0), ww = want(1), wb = want(2);
                Tensor<T>* gx = wx ? &slot(0) : nullptr;
                Tensor<T>* gw = ww ? &slot(1) : nullptr;
                Tensor<T>* gb = wb ? &slot(2) : nullptr;
                for (std::int64_t bn = 0; bn < B; ++bn)
                    for (std::int64_t co = 0; co < Co; ++co)
                        for (std::int64_t ho = 0; ho < Ho; ++ho) {
                            const std::int64_t ih0 = ho * stride - pad;
                            for (std::int64_t wo = 0; wo < Wo; ++wo) {
                                const T gv = g.at(bn, co, ho, wo);
                                if (gb) (*gb)[co] += gv;
                                if (gv == T(0) || (!gx && !gw)) continue;
                                const std::int64_t iw0 = wo * stride - pad;
                                for (std::int64_t ci = 0; ci < Ci; ++ci)
                                    for (std::int64_t r = 0; r < kh; ++r) {
                                        const std::int64_t ih = ih0 + r;
                                        if (ih < 0 || ih >= H) continue;
                                        for (std::int64_t c = 0; c < kw; ++c) {
                                            const std::int64_t iw = iw0 + c;
                                            if (iw < 0 || iw >= W) continue;
                                            if (gw) gw->at(co, ci, r, c) += gv * x.at(bn, ci, ih, iw);
                                            if (gx) gx->at(bn, ci, ih, iw) += gv * w.at(co, ci, r, c);
                                        }
                                    }
                            }
                        }
                break;
            }
            case OpKind::batchnorm: {
                const Tensor<T>& x = in(0);
                const Tensor<T>& gamma = in(1);
                const Tensor<T>& mean = n.saved.at(0);
                const Tensor<T>& invstd = n.saved.at(1);
                const std::int64_t C = x.dim(1);
                const bool spatial = x.rank() == 4;
                const std::int64_t B = x.dim(0);
                const std::int64_t HW = spatial ? x.dim(2) * x.dim(3) : 1;
                const std::int64_t N = B * HW;

                // Per-channel sums of g and g*xhat.
                Tensor<T> sum_g({C}), sum_gx({C});
                for (std::int64_t bn = 0; bn < B; ++bn)
                    for (std::int64_t c = 0; c < C; ++c) {
                        const T* xp = &x[(bn * C + c) * HW];
                        const T* gp = &g[(bn * C + c) * HW];
                        T sg = 0, sgx = 0;
                        for (std::int64_t i = 0; i < HW; ++i) {
                            sg += gp[i];
                            sgx += gp[i] * (xp[i] - mean[c]) * invstd[c];
                        }
                        sum_g[c] += sg;
                        sum_gx[c] += sgx;
                    }
                if (want(2)) {
                    Tensor<T>& gbeta = slot(2);
                    for (std::int64_t c = 0; c < C; ++c) gbeta[c] += sum_g[c];
                }
                if (want(1)) {
                    Tensor<T>& ggamma = slot(1);
                    for (std::int64_t c = 0; c < C; ++c) ggamma[c] += sum_gx[c];
                }
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    for (std::int64_t bn = 0; bn < B; ++bn)
                        for (std::int64_t c = 0; c < C; ++c) {
                            const T* xp = &x[(bn * C + c) * HW];
                            const T* gp = &g[(bn * C + c) * HW];
                            T* op = &gx[(bn * C + c) * HW];
                            const T gi = gamma[c] * invstd[c];
                            if (n.attrs.training) {
                                const T mg = sum_g[c] / static_cast<T>(N);
                                const T mgx = sum_gx[c] / static_cast<T>(N);
                                for (std::int64_t i = 0; i < HW; ++i) {
                                    const T xhat = (xp[i] - mean[c]) * invstd[c];
                                    op[i] += gi * (gp[i] - mg - xhat * mgx);
                                }
                            } else {
                                for (std::int64_t i = 0; i < HW; ++i) op[i] += gi * gp[i];
                            }
                        }
                }
                break;
            }
            case OpKind::global_avg_pool: {
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    const Tensor<T>& x = in(0);
                    const std::int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
                    for (std::int64_t bn = 0; bn < B; ++bn)
                        for (std::int64_t c = 0; c < C; ++c) {
                            const T spread = g.at(bn, c) / static_cast<T>(HW);
                            T* p = &gx[(bn * C + c) * HW];
                            for (std::int64_t i = 0; i < HW; ++i) p[i] += spread;
                        }
                }
                break;
            }
            case OpKind::l2_normalize: {
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    const Tensor<T>& y = n.value;
                    const Tensor<T>& norms = n.saved.at(0);
                    const T eps = static_cast<T>(n.attrs.eps);
                    const bool single = y.rank() == 1;
                    const std::int64_t rows = single ? 1 : y.dim(0);
                    const std::int64_t cols = single ? y.dim(0) : y.dim(1);
                    for (std::int64_t r = 0; r < rows; ++r) {
                        const T* yp = &y[r * cols];
                        const T* gp = &g[r * cols];
                        T* op = &gx[r * cols];
                        const T nr = norms[r];
                        if (nr > eps) {
                            T dot = 0;
                            for (std::int64_t c = 0; c < cols; ++c) dot += yp[c] * gp[c];
                            for (std::int64_t c = 0; c < cols; ++c)
                                op[c] += (gp[c] - yp[c] * dot) / nr;
                        } else {  // clamped branch is plain scaling by 1/eps
                            for (std::int64_t c = 0; c < cols; ++c) op[c] += gp[c] / eps;
                        }
                    }
                }
                break;
            }
            case OpKind::concat: {
                const auto rank = static_cast<std::int64_t>(n.value.rank());
                const std::int64_t axis = n.attrs.axis;
                std::int64_t outer = 1, inner = 1;
                for (std::int64_t d = 0; d < axis; ++d) outer *= n.value.dims()[d];
                for (std::int64_t d = axis + 1; d < rank; ++d) inner *= n.value.dims()[d];
                const std::int64_t out_block = n.value.dims()[axis] * inner;
                std::int64_t off = 0;
                for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                    const std::int64_t blk = in(i).dims()[axis] * inner;
                    if (want(i)) {
                        Tensor<T>& gi = slot(i);
                        for (std::int64_t o = 0; o < outer; ++o) {
                            const T* src = &g[o * out_block + off];
                            T* dst = &gi[o * blk];
                            for (std::int64_t j = 0; j < blk; ++j) dst[j] += src[j];
                        }
                    }
                    off += blk;
                }
                break;
            }
            case OpKind::sum: {
                if (want(0)) {
                    Tensor<T>& gx = slot(0);
                    const T gv = g[0];
                    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += gv;
                }
                break;
            }
        }
    }

    // Leaves the loss does not depend on still report zeros.
    for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
        const Node& n = nodes_[id];
        if (n.kind == OpKind::leaf && n.requires_grad && !grads.has(id))
            grads.slot(id, n.value.dims());
    }
    return grads;
}

template class Tape<float>;
template class Tape<double>;
template class GradMap<float>;
template class GradMap<double>;

}  // namespace fancl
