#include "fancl/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "fancl/errors.hpp"

namespace fancl::io {

namespace {

constexpr char kTensorMagic[4] = {'F', 'T', 'N', 'S'};
constexpr char kContainerMagic[4] = {'F', 'T', 'N', 'C'};
constexpr std::uint8_t kVersion = 1;

[[noreturn]] void fail(const std::string& what, std::uint64_t offset) {
    throw FormatError(what + " at offset " + std::to_string(offset));
}

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed");
}

void get_bytes(std::istream& in, void* p, std::size_t n, std::uint64_t offset,
               const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) fail(std::string("truncated ") + what, offset);
}

void put_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    put_bytes(out, b, 4);
}

std::uint32_t get_u32_le(std::istream& in, std::uint64_t offset, const char* what) {
    unsigned char b[4];
    get_bytes(in, b, 4, offset, what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

template <typename T>
void put_payload_le(std::ostream& out, const T* data, std::int64_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        put_bytes(out, data, sizeof(T) * static_cast<std::size_t>(count));
    } else {
        for (std::int64_t i = 0; i < count; ++i) {
            unsigned char b[sizeof(T)];
            std::memcpy(b, &data[i], sizeof(T));
            for (std::size_t j = 0; j < sizeof(T) / 2; ++j) std::swap(b[j], b[sizeof(T) - 1 - j]);
            put_bytes(out, b, sizeof(T));
        }
    }
}

template <typename T>
void get_payload_le(std::istream& in, T* data, std::int64_t count, std::uint64_t offset) {
    const std::size_t n = sizeof(T) * static_cast<std::size_t>(count);
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        fail("truncated payload", offset + static_cast<std::uint64_t>(in.gcount()));
    if constexpr (std::endian::native != std::endian::little) {
        for (std::int64_t i = 0; i < count; ++i) {
            unsigned char b[sizeof(T)];
            std::memcpy(b, &data[i], sizeof(T));
            for (std::size_t j = 0; j < sizeof(T) / 2; ++j) std::swap(b[j], b[sizeof(T) - 1 - j]);
            std::memcpy(&data[i], b, sizeof(T));
        }
    }
}

}  // namespace

const char* dtype_name(DType d) {
    switch (d) {
        case DType::f32: return "f32";
        case DType::f64: return "f64";
        case DType::i32: return "i32";
    }
    return "?";
}

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
    put_bytes(out, kTensorMagic, 4);
    const std::uint8_t header[2] = {kVersion, static_cast<std::uint8_t>(dtype_of<T>())};
    put_bytes(out, header, 2);
    if (t.rank() > 255) throw IoError("tensor rank exceeds format limit of 255");
    const auto ndim = static_cast<std::uint8_t>(t.rank());
    put_bytes(out, &ndim, 1);
    for (std::int64_t d : t.dims()) {
        if (d > std::numeric_limits<std::uint32_t>::max())
            throw IoError("tensor extent " + std::to_string(d) + " exceeds format limit");
        put_u32_le(out, static_cast<std::uint32_t>(d));
    }
    put_payload_le(out, t.data().data(), t.numel());
}

template <typename T>
Tensor<T> read_tensor(std::istream& in, std::uint64_t base_offset) {
    char magic[4];
    get_bytes(in, magic, 4, base_offset, "header");
    if (std::memcmp(magic, kTensorMagic, 4) != 0) fail("bad magic", base_offset);
    std::uint8_t version = 0, dtype = 0, ndim = 0;
    get_bytes(in, &version, 1, base_offset + 4, "header");
    if (version != kVersion)
        fail("unsupported version " + std::to_string(version), base_offset + 4);
    get_bytes(in, &dtype, 1, base_offset + 5, "header");
    if (dtype > 2) fail("unknown dtype code " + std::to_string(dtype), base_offset + 5);
    if (static_cast<DType>(dtype) != dtype_of<T>())
        fail(std::string("dtype is ") + dtype_name(static_cast<DType>(dtype)) + ", expected " +
                 dtype_name(dtype_of<T>()),
             base_offset + 5);
    get_bytes(in, &ndim, 1, base_offset + 6, "header");
    Dims dims(ndim);
    std::uint64_t off = base_offset + 7;
    for (std::uint8_t i = 0; i < ndim; ++i) {
        dims[i] = get_u32_le(in, off, "dims");
        off += 4;
    }
    Tensor<T> t(dims);
    get_payload_le(in, t.data().data(), t.numel(), off);
    return t;
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_tensor(out, t);
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_tensor<T>(in);
}

DType probe_dtype(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[4];
    get_bytes(in, magic, 4, 0, "header");
    if (std::memcmp(magic, kTensorMagic, 4) != 0 && std::memcmp(magic, kContainerMagic, 4) != 0)
        fail("bad magic", 0);
    std::uint8_t version = 0, dtype = 0;
    get_bytes(in, &version, 1, 4, "header");
    if (version != kVersion) fail("unsupported version " + std::to_string(version), 4);
    get_bytes(in, &dtype, 1, 5, "header");
    if (dtype > 2) fail("unknown dtype code " + std::to_string(dtype), 5);
    return static_cast<DType>(dtype);
}

void TensorContainer::put(const std::string& name, Value v) {
    if (name.empty()) throw ContractError("container section name is empty");
    if (entries_.count(name)) throw ContractError("duplicate container section '" + name + "'");
    order_.push_back(name);
    entries_.emplace(name, std::move(v));
}

bool TensorContainer::contains(const std::string& name) const { return entries_.count(name) > 0; }

const TensorContainer::Value& TensorContainer::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("container has no section '" + name + "'");
    return it->second;
}

template <typename T>
const Tensor<T>& TensorContainer::get_as(const std::string& name) const {
    const Value& v = get(name);
    const Tensor<T>* t = std::get_if<Tensor<T>>(&v);
    if (!t)
        throw FormatError("container section '" + name + "' is not " +
                          dtype_name(dtype_of<T>()));
    return *t;
}

void TensorContainer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    put_bytes(out, kContainerMagic, 4);
    const std::uint8_t version = kVersion;
    put_bytes(out, &version, 1);
    put_u32_le(out, static_cast<std::uint32_t>(order_.size()));
    for (const std::string& name : order_) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            throw IoError("section name too long: '" + name + "'");
        const auto len = static_cast<std::uint16_t>(name.size());
        const unsigned char lb[2] = {static_cast<unsigned char>(len),
                                     static_cast<unsigned char>(len >> 8)};
        put_bytes(out, lb, 2);
        put_bytes(out, name.data(), name.size());
        std::visit([&](const auto& t) { write_tensor(out, t); }, entries_.at(name));
    }
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

TensorContainer TensorContainer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[4];
    get_bytes(in, magic, 4, 0, "header");
    if (std::memcmp(magic, kContainerMagic, 4) != 0) fail("bad magic", 0);
    std::uint8_t version = 0;
    get_bytes(in, &version, 1, 4, "header");
    if (version != kVersion) fail("unsupported version " + std::to_string(version), 4);
    const std::uint32_t count = get_u32_le(in, 5, "section count");
    TensorContainer c;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_off = static_cast<std::uint64_t>(in.tellg());
        unsigned char lb[2];
        get_bytes(in, lb, 2, name_off, "section name length");
        const std::uint16_t len = std::uint16_t(lb[0]) | std::uint16_t(lb[1]) << 8;
        std::string name(len, '\0');
        get_bytes(in, name.data(), len, name_off + 2, "section name");
        const auto rec_off = static_cast<std::uint64_t>(in.tellg());
        // Peek the dtype code to pick the element type, then rewind.
        char head[6];
        get_bytes(in, head, 6, rec_off, "section header");
        if (std::memcmp(head, kTensorMagic, 4) != 0) fail("bad magic", rec_off);
        in.seekg(static_cast<std::streamoff>(rec_off));
        const auto dtype = static_cast<std::uint8_t>(head[5]);
        switch (dtype) {
            case 0: c.put(name, read_tensor<float>(in, rec_off)); break;
            case 1: c.put(name, read_tensor<double>(in, rec_off)); break;
            case 2: c.put(name, read_tensor<std::int32_t>(in, rec_off)); break;
            default: fail("unknown dtype code " + std::to_string(dtype), rec_off + 5);
        }
    }
    return c;
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template void write_tensor<std::int32_t>(std::ostream&, const Tensor<std::int32_t>&);
template Tensor<float> read_tensor<float>(std::istream&, std::uint64_t);
template Tensor<double> read_tensor<double>(std::istream&, std::uint64_t);
template Tensor<std::int32_t> read_tensor<std::int32_t>(std::istream&, std::uint64_t);
template void save_tensor<float>(const std::string&, const Tensor<float>&);
template void save_tensor<double>(const std::string&, const Tensor<double>&);
template void save_tensor<std::int32_t>(const std::string&, const Tensor<std::int32_t>&);
template Tensor<float> load_tensor<float>(const std::string&);
template Tensor<double> load_tensor<double>(const std::string&);
template Tensor<std::int32_t> load_tensor<std::int32_t>(const std::string&);
template const Tensor<float>& TensorContainer::get_as<float>(const std::string&) const;
template const Tensor<double>& TensorContainer::get_as<double>(const std::string&) const;
template const Tensor<std::int32_t>& TensorContainer::get_as<std::int32_t>(const std::string&)
    const;

}  // namespace fancl::io
