#include "fancl/encoder.hpp"

#include <cmath>

#include "fancl/errors.hpp"

namespace fancl {

void EncoderConfig::validate() const {
    if (dim < 2) throw ConfigError("encoder: embedding dim must be >= 2");
    if (channels.empty()) throw ConfigError("encoder: need at least one conv stage");
    for (std::int64_t c : channels)
        if (c < 1) throw ConfigError("encoder: channel counts must be >= 1");
    if (in_channels < 1 || height < 1 || width < 1)
        throw ConfigError("encoder: invalid input extents");
    if (kernel < 1 || stride < 1 || pad < 0) throw ConfigError("encoder: invalid conv geometry");
}

namespace {

template <typename T>
Tensor<T> uniform_init(Rng rng, const Dims& dims, std::int64_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor<T> t(dims);
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
void init_branch(const EncoderConfig& cfg, Rng rng, BranchParams<T>& p) {
    p.stages.clear();
    std::int64_t ci = cfg.in_channels;
    for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
        const std::int64_t co = cfg.channels[s];
        ConvStage<T> stage;
        const std::int64_t fan_in = ci * cfg.kernel * cfg.kernel;
        stage.conv_w = uniform_init<T>(rng.stream("stage" + std::to_string(s) + "/conv_w"),
                                       {co, ci, cfg.kernel, cfg.kernel}, fan_in);
        stage.conv_b = Tensor<T>({co});
        stage.bn_g = Tensor<T>::full({co}, T(1));
        stage.bn_b = Tensor<T>({co});
        stage.bn.mean = Tensor<T>({co});
        stage.bn.var = Tensor<T>::full({co}, T(1));
        p.stages.push_back(std::move(stage));
        ci = co;
    }
    p.proj_w = uniform_init<T>(rng.stream("head/proj_w"), {ci, cfg.dim}, ci);
    p.bn_g = Tensor<T>::full({cfg.dim}, T(1));
    p.bn_b = Tensor<T>({cfg.dim});
    p.bn.mean = Tensor<T>({cfg.dim});
    p.bn.var = Tensor<T>::full({cfg.dim}, T(1));
}

}  // namespace

template <typename T>
void init_params(const EncoderConfig& cfg, std::uint64_t seed, BranchParams<T>& theta,
                 BranchParams<T>& theta_prime, FusionParams<T>& fusion) {
    cfg.validate();
    Rng root(seed);
    init_branch(cfg, root.stream("theta"), theta);
    init_branch(cfg, root.stream("theta_prime"), theta_prime);
    fusion.w = uniform_init<T>(root.stream("fusion/w"), {2 * cfg.dim, cfg.dim}, 2 * cfg.dim);
    fusion.b = Tensor<T>({cfg.dim});
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_params(BranchParams<T>& p,
                                                             const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t s = 0; s < p.stages.size(); ++s) {
        const std::string base = prefix + "/stage" + std::to_string(s);
        out.emplace_back(base + "/conv_w", &p.stages[s].conv_w);
        out.emplace_back(base + "/conv_b", &p.stages[s].conv_b);
        out.emplace_back(base + "/bn_g", &p.stages[s].bn_g);
        out.emplace_back(base + "/bn_b", &p.stages[s].bn_b);
    }
    out.emplace_back(prefix + "/head/proj_w", &p.proj_w);
    out.emplace_back(prefix + "/head/bn_g", &p.bn_g);
    out.emplace_back(prefix + "/head/bn_b", &p.bn_b);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_params(FusionParams<T>& p,
                                                             const std::string& prefix) {
    return {{prefix + "/w", &p.w}, {prefix + "/b", &p.b}};
}

template <typename T>
BranchVars<T> lift(Tape<T>& tape, BranchParams<T>& p, bool trainable) {
    BranchVars<T> v;
    for (ConvStage<T>& s : p.stages)
        v.stages.push_back({ops::leaf(tape, s.conv_w, trainable),
                            ops::leaf(tape, s.conv_b, trainable),
                            ops::leaf(tape, s.bn_g, trainable),
                            ops::leaf(tape, s.bn_b, trainable)});
    v.proj_w = ops::leaf(tape, p.proj_w, trainable);
    v.bn_g = ops::leaf(tape, p.bn_g, trainable);
    v.bn_b = ops::leaf(tape, p.bn_b, trainable);
    return v;
}

template <typename T>
FusionVars<T> lift(Tape<T>& tape, FusionParams<T>& p, bool trainable) {
    return {ops::leaf(tape, p.w, trainable), ops::leaf(tape, p.b, trainable)};
}

template <typename T>
Var<T> branch_graph(Tape<T>& tape, const EncoderConfig& cfg, BranchParams<T>& p,
                    const BranchVars<T>& v, Var<T> images, bool training) {
    const Tensor<T>& img = images.value();
    if (img.rank() != 4 || img.dim(1) != cfg.in_channels || img.dim(2) != cfg.height ||
        img.dim(3) != cfg.width)
        throw ShapeError("branch input dims " + dims_to_string(img.dims()) +
                         " do not match encoder config");
    Var<T> x = images;
    for (std::size_t s = 0; s < p.stages.size(); ++s) {
        const auto& sv = v.stages.at(s);
        x = ops::conv2d(x, sv.conv_w, sv.conv_b, cfg.stride, cfg.pad);
        x = ops::batch_norm(x, sv.bn_g, sv.bn_b, p.stages[s].bn, training, cfg.bn_eps,
                            cfg.bn_momentum);
        x = ops::relu(x);
    }
    x = ops::global_avg_pool(x);
    x = ops::matmul(x, v.proj_w);
    x = ops::batch_norm(x, v.bn_g, v.bn_b, p.bn, training, cfg.bn_eps, cfg.bn_momentum);
    return ops::l2_normalize(x, cfg.l2_eps);
}

template <typename T>
Var<T> fusion_graph(const EncoderConfig& cfg, const FusionVars<T>& v, Var<T> f, Var<T> f_tilde) {
    const Tensor<T>& a = f.value();
    const Tensor<T>& b = f_tilde.value();
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0) || a.dim(1) != cfg.dim ||
        b.dim(1) != cfg.dim)
        throw ShapeError("fusion inputs " + dims_to_string(a.dims()) + " and " +
                         dims_to_string(b.dims()) + " must both be (batch, D)");
    Var<T> cat = ops::concat<T>({f, f_tilde}, 1);
    Var<T> proj = ops::add(ops::matmul(cat, v.w), v.b);
    return ops::l2_normalize(proj, cfg.l2_eps);
}

template <typename T>
Tensor<T> forward_branch(const EncoderConfig& cfg, const BranchParams<T>& p,
                         const Tensor<T>& images) {
    auto& mut = const_cast<BranchParams<T>&>(p);  // eval mode never writes stats
    Tape<T> tape;
    BranchVars<T> v = lift(tape, mut, false);
    Var<T> out = branch_graph(tape, cfg, mut, v, ops::constant(tape, images), false);
    return out.value();
}

template <typename T>
Tensor<T> forward_fusion(const EncoderConfig& cfg, const FusionParams<T>& p, const Tensor<T>& f,
                         const Tensor<T>& f_tilde) {
    auto& mut = const_cast<FusionParams<T>&>(p);
    Tape<T> tape;
    FusionVars<T> v = lift(tape, mut, false);
    Var<T> out = fusion_graph(cfg, v, ops::constant(tape, f), ops::constant(tape, f_tilde));
    return out.value();
}

#define FANCL_INSTANTIATE_ENCODER(T)                                                          \
    template void init_params<T>(const EncoderConfig&, std::uint64_t, BranchParams<T>&,      \
                                 BranchParams<T>&, FusionParams<T>&);                         \
    template std::vector<std::pair<std::string, Tensor<T>*>> named_params<T>(                \
        BranchParams<T>&, const std::string&);                                                \
    template std::vector<std::pair<std::string, Tensor<T>*>> named_params<T>(                \
        FusionParams<T>&, const std::string&);                                                \
    template BranchVars<T> lift<T>(Tape<T>&, BranchParams<T>&, bool);                        \
    template FusionVars<T> lift<T>(Tape<T>&, FusionParams<T>&, bool);                        \
    template Var<T> branch_graph<T>(Tape<T>&, const EncoderConfig&, BranchParams<T>&,        \
                                    const BranchVars<T>&, Var<T>, bool);                      \
    template Var<T> fusion_graph<T>(const EncoderConfig&, const FusionVars<T>&, Var<T>,      \
                                    Var<T>);                                                  \
    template Tensor<T> forward_branch<T>(const EncoderConfig&, const BranchParams<T>&,       \
                                         const Tensor<T>&);                                   \
    template Tensor<T> forward_fusion<T>(const EncoderConfig&, const FusionParams<T>&,       \
                                         const Tensor<T>&, const Tensor<T>&);

FANCL_INSTANTIATE_ENCODER(float)
FANCL_INSTANTIATE_ENCODER(double)
#undef FANCL_INSTANTIATE_ENCODER

}  // namespace fancl
