#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "fancl/tape.hpp"

namespace fancl {

/// Raised when a finite-difference probe sits too close to a non-smooth
/// point (a relu input near zero). The caller should draw a fresh point.
class KinkError : public std::runtime_error {
public:
    explicit KinkError(const std::string& what) : std::runtime_error(what) {}
};

struct GradCheckOptions {
    double h = 1e-5;         // central-difference step
    double kink_tol = 1e-4;  // rejection margin around relu kinks
};

/// Rebuilds a scalar-valued subgraph from a vector of input tensors. The
/// builder must add one requires_grad leaf per input tensor, in order;
/// anything else it adds should be a constant.
using SubgraphBuilder =
    std::function<Var<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients against central finite differences at
/// `point`. Returns the max over all coordinates of
///   |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Throws KinkError if any relu input at the base point is within
/// `kink_tol` of zero, since the two-sided probe would straddle the kink.
double grad_check(const SubgraphBuilder& build, const std::vector<Tensor<double>>& point,
                  const GradCheckOptions& opts = {});

}  // namespace fancl
