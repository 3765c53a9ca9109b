#include "fancl/adam.hpp"

#include <cmath>

#include "fancl/errors.hpp"

namespace fancl {

template <typename T>
void Adam<T>::step(const std::vector<ParamGrad<T>>& params, double lr) {
    for (const ParamGrad<T>& p : params) {
        if (!p.value || !p.grad) throw ContractError("adam: null parameter or gradient");
        if (!p.value->same_dims(*p.grad))
            throw ShapeError("adam: gradient dims " + dims_to_string(p.grad->dims()) +
                             " do not match parameter '" + p.name + "' dims " +
                             dims_to_string(p.value->dims()));
        if (!p.grad->all_finite())
            throw NumericError("adam: non-finite gradient for parameter '" + p.name + "'");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const ParamGrad<T>& p : params) {
        auto it = slots_.find(p.name);
        if (it == slots_.end()) {
            Slot fresh{Tensor<T>(p.value->dims()), Tensor<T>(p.value->dims())};
            it = slots_.emplace(p.name, std::move(fresh)).first;
        } else if (!it->second.m.same_dims(*p.value)) {
            throw ShapeError("adam: moment dims changed for parameter '" + p.name + "'");
        }
        Slot& s = it->second;
        Tensor<T>& w = *p.value;
        const Tensor<T>& grad = *p.grad;
        for (std::int64_t i = 0; i < w.numel(); ++i) {
            const double g = static_cast<double>(grad[i]) +
                             cfg_.weight_decay * static_cast<double>(w[i]);
            const double m = cfg_.beta1 * static_cast<double>(s.m[i]) + (1.0 - cfg_.beta1) * g;
            const double v = cfg_.beta2 * static_cast<double>(s.v[i]) + (1.0 - cfg_.beta2) * g * g;
            s.m[i] = static_cast<T>(m);
            s.v[i] = static_cast<T>(v);
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                  lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        check_finite(w, "adam update of '" + p.name + "'");
    }
}

template <typename T>
std::vector<std::string> Adam<T>::slot_names() const {
    std::vector<std::string> names;
    names.reserve(slots_.size());
    for (const auto& [name, slot] : slots_) names.push_back(name);
    return names;
}

template <typename T>
const Tensor<T>& Adam<T>::moment1(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ContractError("adam: no slot named '" + name + "'");
    return it->second.m;
}

template <typename T>
const Tensor<T>& Adam<T>::moment2(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ContractError("adam: no slot named '" + name + "'");
    return it->second.v;
}

template <typename T>
void Adam<T>::restore_slot(const std::string& name, Tensor<T> m, Tensor<T> v) {
    if (!m.same_dims(v)) throw ShapeError("adam: restored moments disagree on dims");
    slots_[name] = Slot{std::move(m), std::move(v)};
}

template class Adam<float>;
template class Adam<double>;

}  // namespace fancl
