// Python bindings for the operations most useful from scripts: tensor file
// io, feature-aware pepper noise, density clustering, retrieval metrics and
// the full command-line entry point.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "fancl/cli.hpp"
#include "fancl/clustering.hpp"
#include "fancl/encoder.hpp"
#include "fancl/errors.hpp"
#include "fancl/evalkit.hpp"
#include "fancl/fana.hpp"
#include "fancl/kernels.hpp"
#include "fancl/tensor.hpp"
#include "fancl/tensor_io.hpp"

namespace py = pybind11;

namespace {

using namespace fancl;

template <typename T>
Tensor<T> to_tensor(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
    Dims dims(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) dims[static_cast<std::size_t>(i)] = a.shape(i);
    Tensor<T> t(std::move(dims));
    std::memcpy(t.data().data(), a.data(), sizeof(T) * static_cast<std::size_t>(t.numel()));
    return t;
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
    std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
    py::array_t<T> a(shape);
    std::memcpy(a.mutable_data(), t.data().data(),
                sizeof(T) * static_cast<std::size_t>(t.numel()));
    return a;
}

py::object load_any(const std::string& path) {
    switch (io::probe_dtype(path)) {
        case io::DType::f32: return to_array(io::load_tensor<float>(path));
        case io::DType::f64: return to_array(io::load_tensor<double>(path));
        case io::DType::i32: return to_array(io::load_tensor<std::int32_t>(path));
    }
    throw FormatError("tensor file '" + path + "': unknown element type");
}

void save_any(const std::string& path, const py::array& a) {
    if (py::isinstance<py::array_t<float>>(a)) {
        io::save_tensor(path, to_tensor<float>(a.cast<py::array_t<float>>()));
    } else if (py::isinstance<py::array_t<double>>(a)) {
        io::save_tensor(path, to_tensor<double>(a.cast<py::array_t<double>>()));
    } else if (py::isinstance<py::array_t<std::int32_t>>(a)) {
        io::save_tensor(path, to_tensor<std::int32_t>(a.cast<py::array_t<std::int32_t>>()));
    } else {
        throw py::type_error("save_tensor: array must be float32, float64 or int32");
    }
}

ActivationProbe<float> dedicated_probe_for(const Tensor<float>& image, std::uint64_t seed) {
    if (image.rank() != 3) throw ShapeError("image must be (C, H, W)");
    EncoderConfig enc;
    enc.in_channels = image.dim(0);
    enc.height = image.dim(1);
    enc.width = image.dim(2);
    BranchParams<float> unused;
    return make_probe<float>(ProbeSource::dedicated, enc, unused, seed);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "core operations of the fancl unsupervised re-identification pipeline";

    m.def("load_tensor", &load_any, py::arg("path"),
          "Read a .ftns tensor file into a numpy array (float32, float64 or int32).");
    m.def("save_tensor", &save_any, py::arg("path"), py::arg("array"),
          "Write a numpy array (float32, float64 or int32) as a .ftns tensor file.");

    m.def(
        "l2_normalize_rows",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> feats) {
            return to_array(kern::l2_normalize(to_tensor<double>(feats), 1e-12));
        },
        py::arg("features"), "Scale each row of a (N, D) matrix to unit Euclidean norm.");

    m.def(
        "activation_map",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> image,
           std::uint64_t seed) {
            const Tensor<float> img = to_tensor<float>(image);
            return to_array(activation_map(dedicated_probe_for(img, seed), img));
        },
        py::arg("image"), py::arg("seed") = 0,
        "Per-pixel activation scores in (0, 1) for a (C, H, W) image, from a\n"
        "randomly initialised probe derived from `seed`.");

    m.def(
        "noise_mask",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> map, double rho,
           std::int64_t patch) { return to_array(noise_mask(to_tensor<float>(map), rho, patch)); },
        py::arg("map"), py::arg("rho"), py::arg("patch") = 1,
        "Binary (H, W) mask with exactly round(rho * H * W) ones on the\n"
        "highest-activation pixels (or patch x patch tiles when patch > 1).");

    m.def(
        "apply_pepper_noise",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> image,
           py::array_t<std::int32_t, py::array::c_style | py::array::forcecast> mask) {
            return to_array(apply_pepper_noise(to_tensor<float>(image),
                                               to_tensor<std::int32_t>(mask)));
        },
        py::arg("image"), py::arg("mask"),
        "Zero every channel of the pixels selected by a binary (H, W) mask.");

    m.def(
        "fana",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> image, double rho,
           std::int64_t patch, std::uint64_t seed) {
            const Tensor<float> img = to_tensor<float>(image);
            const ActivationProbe<float> probe = dedicated_probe_for(img, seed);
            const Tensor<float> map = activation_map(probe, img);
            const Tensor<std::int32_t> mask = noise_mask(map, rho, patch);
            return py::make_tuple(to_array(map), to_array(mask),
                                  to_array(apply_pepper_noise(img, mask)));
        },
        py::arg("image"), py::arg("rho") = 0.05, py::arg("patch") = 1, py::arg("seed") = 0,
        "Feature-aware pepper noise for one (C, H, W) image; returns\n"
        "(activation map, binary mask, noised image).");

    m.def(
        "pairwise_cosine_distance",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> feats) {
            return to_array(pairwise_cosine_distance(to_tensor<double>(feats)));
        },
        py::arg("features"),
        "Symmetric (N, N) matrix of 1 - cosine similarity for unit-norm rows.");

    m.def(
        "dbscan",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> dist, double eps,
           std::int64_t min_pts) {
            DbscanConfig cfg;
            cfg.eps = eps;
            cfg.min_pts = min_pts;
            cfg.validate();
            const PseudoLabeling out = dbscan(to_tensor<double>(dist), cfg);
            py::array_t<std::int32_t> labels(
                static_cast<py::ssize_t>(out.labels.size()));
            std::memcpy(labels.mutable_data(), out.labels.data(),
                        sizeof(std::int32_t) * out.labels.size());
            return py::make_tuple(labels, out.num_clusters);
        },
        py::arg("distances"), py::arg("eps") = 0.6, py::arg("min_pts") = 4,
        "Density clustering over a precomputed distance matrix; returns\n"
        "(labels, num_clusters) with -1 marking outliers.");

    m.def(
        "evaluate_retrieval",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           const std::vector<std::int32_t>& query_ids,
           py::array_t<double, py::array::c_style | py::array::forcecast> gallery,
           const std::vector<std::int32_t>& gallery_ids) {
            const Metrics r = evaluate(to_tensor<double>(query), query_ids,
                                       to_tensor<double>(gallery), gallery_ids);
            py::dict d;
            d["mAP"] = r.map;
            d["rank1"] = r.rank1;
            d["rank5"] = r.rank5;
            d["rank10"] = r.rank10;
            d["n_query"] = r.n_query;
            d["n_query_skipped"] = r.n_query_skipped;
            d["n_gallery"] = r.n_gallery;
            return d;
        },
        py::arg("query_features"), py::arg("query_ids"), py::arg("gallery_features"),
        py::arg("gallery_ids"),
        "Mean average precision and rank-1/5/10 match rates for unit-norm\n"
        "query and gallery feature rows under cosine similarity.");

    m.def("average_precision", &average_precision, py::arg("relevance"),
          "Average precision of one ranked relevance list (list of bools).");

    m.def("run_cli", &run_cli, py::arg("args"),
          "Run the fancl command line (synth / train / eval / cluster /\n"
          "fana-preview) with an argv-style list; returns the exit code.");
}
