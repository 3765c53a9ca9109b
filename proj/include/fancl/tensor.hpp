#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fancl/errors.hpp"

namespace fancl {

using Dims = std::vector<std::int64_t>;

inline std::int64_t numel_of(const Dims& dims) {
    std::int64_t n = 1;
    for (auto d : dims) {
        if (d < 0) throw ShapeError("negative extent " + std::to_string(d));
        n *= d;
    }
    return n;
}

inline std::string dims_to_string(const Dims& dims) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
    os << ")";
    return os.str();
}

/// Dense n-dimensional array with a flat row-major buffer.
///
/// A rank-0 tensor (empty dims, one element) represents a scalar. The
/// requires_grad flag only matters when the tensor becomes a tape leaf.
template <typename T>
class Tensor {
public:
    Tensor() : dims_{}, data_(1, T(0)) {}

    explicit Tensor(Dims dims) : dims_(std::move(dims)), data_(numel_of(dims_), T(0)) {}

    Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != numel_of(dims_))
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match dims " + dims_to_string(dims_));
    }

    static Tensor full(Dims dims, T value) {
        Tensor t(std::move(dims));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static Tensor scalar(T value) { return Tensor({}, {value}); }

    const Dims& dims() const { return dims_; }
    std::int64_t dim(std::size_t i) const { return dims_.at(i); }
    std::size_t rank() const { return dims_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool is_scalar() const { return data_.size() == 1 && dims_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T value() const {
        if (data_.size() != 1) throw ContractError("value() on non-scalar tensor " + dims_to_string(dims_));
        return data_[0];
    }

    // Row-major offsets for the common ranks.
    std::int64_t offset(std::int64_t i, std::int64_t j) const { return i * dims_[1] + j; }
    std::int64_t offset(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return (i * dims_[1] + j) * dims_[2] + k;
    }
    std::int64_t offset(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return ((b * dims_[1] + c) * dims_[2] + h) * dims_[3] + w;
    }

    T& at(std::int64_t i, std::int64_t j) { return data_[offset(i, j)]; }
    const T& at(std::int64_t i, std::int64_t j) const { return data_[offset(i, j)]; }
    T& at(std::int64_t i, std::int64_t j, std::int64_t k) { return data_[offset(i, j, k)]; }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k) const { return data_[offset(i, j, k)]; }
    T& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) { return data_[offset(b, c, h, w)]; }
    const T& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[offset(b, c, h, w)];
    }

    bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

    bool all_finite() const {
        if constexpr (std::is_floating_point_v<T>) {
            for (T v : data_)
                if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(T value) {
        for (auto& v : data_) v = value;
    }

    bool requires_grad = false;

private:
    Dims dims_;
    std::vector<T> data_;
};

template <typename T>
bool operator==(const Tensor<T>& a, const Tensor<T>& b) {
    return a.dims() == b.dims() &&
           std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

/// Throws NumericError when the tensor holds NaN or Inf.
template <typename T>
void check_finite(const Tensor<T>& t, const std::string& what) {
    if (!t.all_finite()) throw NumericError("non-finite values in " + what);
}

}  // namespace fancl
