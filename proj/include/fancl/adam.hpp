#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fancl/tensor.hpp"

namespace fancl {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0005;  // L2 term folded into the gradient
};

/// One named parameter inside a step() call: the tensor to update and the
/// gradient computed for it this iteration.
template <typename T>
struct ParamGrad {
    std::string name;
    Tensor<T>* value = nullptr;
    const Tensor<T>* grad = nullptr;
};

/// Adam with bias correction and a single shared step counter. Moment slots
/// are keyed by parameter name and created lazily on first update, so a
/// parameter may sit out an iteration (frozen probe, eval-only passes)
/// without desynchronizing the others.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Applies one update with the given learning rate. Increments the step
    /// counter once regardless of how many parameters are passed.
    void step(const std::vector<ParamGrad<T>>& params, double lr);

    const AdamConfig& config() const { return cfg_; }
    std::int64_t steps() const { return t_; }

    // Checkpoint access.
    std::vector<std::string> slot_names() const;
    const Tensor<T>& moment1(const std::string& name) const;
    const Tensor<T>& moment2(const std::string& name) const;
    void restore_slot(const std::string& name, Tensor<T> m, Tensor<T> v);
    void restore_steps(std::int64_t t) { t_ = t; }

private:
    struct Slot {
        Tensor<T> m;
        Tensor<T> v;
    };
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Slot> slots_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace fancl
