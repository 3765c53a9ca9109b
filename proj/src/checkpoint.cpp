#include "fancl/checkpoint.hpp"

#include "fancl/errors.hpp"
#include "fancl/tensor_io.hpp"

namespace fancl {

namespace {

Tensor<std::int32_t> i32_vec(std::initializer_list<std::int64_t> values) {
    Tensor<std::int32_t> t({static_cast<std::int64_t>(values.size())});
    std::int64_t i = 0;
    for (std::int64_t v : values) t[i++] = static_cast<std::int32_t>(v);
    return t;
}

Tensor<double> f64_vec(std::initializer_list<double> values) {
    Tensor<double> t({static_cast<std::int64_t>(values.size())});
    std::int64_t i = 0;
    for (double v : values) t[i++] = v;
    return t;
}

void put_branch(io::TensorContainer& c, BranchParams<float>& p, const std::string& prefix) {
    for (auto& [name, tensor] : named_params(p, prefix)) c.put(name, *tensor);
    for (std::size_t s = 0; s < p.stages.size(); ++s) {
        const std::string base = prefix + "/stage" + std::to_string(s);
        c.put(base + "/bn_rm", p.stages[s].bn.mean);
        c.put(base + "/bn_rv", p.stages[s].bn.var);
    }
    c.put(prefix + "/head/bn_rm", p.bn.mean);
    c.put(prefix + "/head/bn_rv", p.bn.var);
}

void take_branch(const io::TensorContainer& c, BranchParams<float>& p,
                 const std::string& prefix, std::int64_t n_stages) {
    p.stages.resize(n_stages);
    for (auto& [name, tensor] : named_params(p, prefix)) *tensor = c.get_as<float>(name);
    for (std::int64_t s = 0; s < n_stages; ++s) {
        const std::string base = prefix + "/stage" + std::to_string(s);
        p.stages[s].bn.mean = c.get_as<float>(base + "/bn_rm");
        p.stages[s].bn.var = c.get_as<float>(base + "/bn_rv");
    }
    p.bn.mean = c.get_as<float>(prefix + "/head/bn_rm");
    p.bn.var = c.get_as<float>(prefix + "/head/bn_rv");
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
    io::TensorContainer c;
    const EncoderConfig& e = state.encoder;
    {
        std::vector<std::int64_t> enc = {e.in_channels, e.height, e.width, e.dim,
                                         e.kernel, e.stride, e.pad,
                                         static_cast<std::int64_t>(e.channels.size())};
        enc.insert(enc.end(), e.channels.begin(), e.channels.end());
        Tensor<std::int32_t> enc_t({static_cast<std::int64_t>(enc.size())});
        for (std::size_t i = 0; i < enc.size(); ++i)
            enc_t[static_cast<std::int64_t>(i)] = static_cast<std::int32_t>(enc[i]);
        c.put("meta/encoder", std::move(enc_t));
    }
    c.put("meta/encoder_real", f64_vec({e.bn_eps, e.bn_momentum, e.l2_eps}));
    c.put("meta/epochs_done", i32_vec({state.epochs_done}));
    c.put("meta/seed",
          i32_vec({static_cast<std::int64_t>(static_cast<std::int32_t>(state.seed & 0xffffffffu)),
                   static_cast<std::int64_t>(static_cast<std::int32_t>(state.seed >> 32))}));
    c.put("meta/probe_geom", i32_vec({state.probe.stride, state.probe.pad}));
    c.put("meta/adam_steps", i32_vec({state.adam.steps()}));
    const AdamConfig& a = state.adam.config();
    c.put("meta/adam_config", f64_vec({a.beta1, a.beta2, a.eps, a.weight_decay}));

    auto& mut = const_cast<TrainState&>(state);
    put_branch(c, mut.theta, "theta");
    put_branch(c, mut.theta_prime, "theta_prime");
    for (auto& [name, tensor] : named_params(mut.fusion, "fusion")) c.put(name, *tensor);
    c.put("probe/w", state.probe.w);
    c.put("probe/b", state.probe.b);
    c.put("banks/original", state.banks.original.entries);
    c.put("banks/noised", state.banks.noised.entries);
    c.put("banks/fused", state.banks.fused.entries);
    for (const std::string& name : state.adam.slot_names()) {
        c.put("adam/" + name + "/m", state.adam.moment1(name));
        c.put("adam/" + name + "/v", state.adam.moment2(name));
    }
    c.save(path);
}

TrainState load_checkpoint(const std::string& path) {
    const io::TensorContainer c = io::TensorContainer::load(path);
    TrainState state;

    const Tensor<std::int32_t>& enc = c.get_as<std::int32_t>("meta/encoder");
    if (enc.numel() < 8) throw FormatError("checkpoint '" + path + "': meta/encoder truncated");
    EncoderConfig& e = state.encoder;
    e.in_channels = enc[0];
    e.height = enc[1];
    e.width = enc[2];
    e.dim = enc[3];
    e.kernel = enc[4];
    e.stride = enc[5];
    e.pad = enc[6];
    const std::int64_t n_stages = enc[7];
    if (enc.numel() != 8 + n_stages)
        throw FormatError("checkpoint '" + path + "': meta/encoder stage list truncated");
    e.channels.clear();
    for (std::int64_t s = 0; s < n_stages; ++s) e.channels.push_back(enc[8 + s]);
    const Tensor<double>& er = c.get_as<double>("meta/encoder_real");
    if (er.numel() != 3) throw FormatError("checkpoint '" + path + "': meta/encoder_real bad");
    e.bn_eps = er[0];
    e.bn_momentum = er[1];
    e.l2_eps = er[2];
    e.validate();

    state.epochs_done = c.get_as<std::int32_t>("meta/epochs_done")[0];
    const Tensor<std::int32_t>& seed = c.get_as<std::int32_t>("meta/seed");
    state.seed = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(seed[1])) << 32) |
                 static_cast<std::uint64_t>(static_cast<std::uint32_t>(seed[0]));

    take_branch(c, state.theta, "theta", n_stages);
    take_branch(c, state.theta_prime, "theta_prime", n_stages);
    for (auto& [name, tensor] : named_params(state.fusion, "fusion"))
        *tensor = c.get_as<float>(name);
    state.probe.w = c.get_as<float>("probe/w");
    state.probe.b = c.get_as<float>("probe/b");
    const Tensor<std::int32_t>& geom = c.get_as<std::int32_t>("meta/probe_geom");
    state.probe.stride = geom[0];
    state.probe.pad = geom[1];
    state.banks.original.entries = c.get_as<float>("banks/original");
    state.banks.noised.entries = c.get_as<float>("banks/noised");
    state.banks.fused.entries = c.get_as<float>("banks/fused");

    const Tensor<double>& ac = c.get_as<double>("meta/adam_config");
    if (ac.numel() != 4) throw FormatError("checkpoint '" + path + "': meta/adam_config bad");
    AdamConfig acfg;
    acfg.beta1 = ac[0];
    acfg.beta2 = ac[1];
    acfg.eps = ac[2];
    acfg.weight_decay = ac[3];
    state.adam = Adam<float>(acfg);
    state.adam.restore_steps(c.get_as<std::int32_t>("meta/adam_steps")[0]);
    for (const std::string& name : c.names()) {
        if (name.rfind("adam/", 0) != 0) continue;
        if (name.size() < 3 || name.compare(name.size() - 2, 2, "/m") != 0) continue;
        const std::string param = name.substr(5, name.size() - 7);
        state.adam.restore_slot(param, c.get_as<float>("adam/" + param + "/m"),
                                c.get_as<float>("adam/" + param + "/v"));
    }
    return state;
}

}  // namespace fancl
