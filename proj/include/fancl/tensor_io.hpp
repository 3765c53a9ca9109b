#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fancl/tensor.hpp"

// Tensor file format ("FTNS"), written little-endian regardless of host:
//   magic "FTNS" | version u8 = 1 | dtype u8 | ndim u8 | ndim x dims u32 | payload
// dtype codes: 0 = 32-bit float, 1 = 64-bit float, 2 = 32-bit signed int.
// Payload is row-major. A container variant ("FTNC") holds named sections,
// each an embedded FTNS record, and backs checkpoints.

namespace fancl::io {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i32 = 2 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }
template <>
constexpr DType dtype_of<std::int32_t>() { return DType::i32; }

const char* dtype_name(DType d);

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t);

/// Reads one tensor record; the stored dtype must match T. `base_offset` is
/// added to positions reported in format errors (used when the record is
/// embedded in a container).
template <typename T>
Tensor<T> read_tensor(std::istream& in, std::uint64_t base_offset = 0);

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t);
template <typename T>
Tensor<T> load_tensor(const std::string& path);

/// Dtype of the tensor stored at `path`, without reading the payload.
DType probe_dtype(const std::string& path);

/// Ordered named tensor sections; the on-disk byte stream is a pure
/// function of the sequence of put() calls, so identical runs serialize
/// byte-identically.
class TensorContainer {
public:
    using Value = std::variant<Tensor<float>, Tensor<double>, Tensor<std::int32_t>>;

    /// Adds a section; duplicate names are a contract violation.
    void put(const std::string& name, Value v);
    bool contains(const std::string& name) const;
    const Value& get(const std::string& name) const;

    template <typename T>
    const Tensor<T>& get_as(const std::string& name) const;

    /// Section names in insertion order.
    const std::vector<std::string>& names() const { return order_; }

    void save(const std::string& path) const;
    static TensorContainer load(const std::string& path);

private:
    std::vector<std::string> order_;
    std::map<std::string, Value> entries_;
};

}  // namespace fancl::io
