#include "fancl/kernels.hpp"

#include <cmath>

namespace fancl::kern {

namespace {

template <typename T>
void require_same_dims(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_dims(b))
        throw ShapeError(std::string(op) + ": mismatched dims " + dims_to_string(a.dims()) +
                         " vs " + dims_to_string(b.dims()));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.same_dims(b)) {
        Tensor<T> out(a.dims());
        for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
        return out;
    }
    // Row broadcast: (B,D) + (D).
    if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
        Tensor<T> out(a.dims());
        const std::int64_t rows = a.dim(0), cols = a.dim(1);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c) out.at(r, c) = a.at(r, c) + b[c];
        return out;
    }
    throw ShapeError("add: mismatched dims " + dims_to_string(a.dims()) + " vs " +
                     dims_to_string(b.dims()));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_dims(a, b, "mul");
    Tensor<T> out(a.dims());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double s) {
    Tensor<T> out(x.dims());
    const T f = static_cast<T>(s);
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * f;
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
    return out;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    Tensor<T> out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = std::exp(x[i]);
    return out;
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    Tensor<T> out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = std::log(x[i]);
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2) throw ShapeError("matmul: lhs must be rank-2, got " + dims_to_string(a.dims()));
    const std::int64_t m = a.dim(0), k = a.dim(1);
    if (b.rank() == 1) {
        if (b.dim(0) != k)
            throw ShapeError("matmul: inner dims differ, " + dims_to_string(a.dims()) + " vs " +
                             dims_to_string(b.dims()));
        Tensor<T> out({m});
        for (std::int64_t i = 0; i < m; ++i) {
            T acc = 0;
            for (std::int64_t j = 0; j < k; ++j) acc += a.at(i, j) * b[j];
            out[i] = acc;
        }
        return out;
    }
    if (b.rank() != 2 || b.dim(0) != k)
        throw ShapeError("matmul: inner dims differ, " + dims_to_string(a.dims()) + " vs " +
                         dims_to_string(b.dims()));
    const std::int64_t n = b.dim(1);
    Tensor<T> out({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < k; ++j) {
            const T av = a.at(i, j);
            if (av == T(0)) continue;
            for (std::int64_t c = 0; c < n; ++c) out.at(i, c) += av * b.at(j, c);
        }
    }
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw ShapeError("transpose2d: need rank-2, got " + dims_to_string(a.dims()));
    Tensor<T> out({a.dim(1), a.dim(0)});
    for (std::int64_t i = 0; i < a.dim(0); ++i)
        for (std::int64_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Dims conv2d_out_dims(const Dims& x, const Dims& w, std::int64_t stride, std::int64_t pad) {
    if (x.size() != 4 || w.size() != 4)
        throw ShapeError("conv2d: need (B,Cin,H,W) input and (Cout,Cin,kh,kw) weight, got " +
                         dims_to_string(x) + " and " + dims_to_string(w));
    if (x[1] != w[1])
        throw ShapeError("conv2d: input channels " + std::to_string(x[1]) +
                         " != weight channels " + std::to_string(w[1]));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
    const std::int64_t oh = (x[2] + 2 * pad - w[2]) / stride + 1;
    const std::int64_t ow = (x[3] + 2 * pad - w[3]) / stride + 1;
    if (x[2] + 2 * pad < w[2] || x[3] + 2 * pad < w[3])
        throw ShapeError("conv2d: kernel " + dims_to_string(w) + " larger than padded input " +
                         dims_to_string(x));
    return {x[0], w[0], oh, ow};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::int64_t stride, std::int64_t pad) {
    const Dims od = conv2d_out_dims(x.dims(), w.dims(), stride, pad);
    if (b.rank() != 1 || b.dim(0) != w.dim(0))
        throw ShapeError("conv2d: bias dims " + dims_to_string(b.dims()) +
                         " do not match output channels " + std::to_string(w.dim(0)));
    const std::int64_t B = od[0], Co = od[1], Ho = od[2], Wo = od[3];
    const std::int64_t Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t kh = w.dim(2), kw = w.dim(3);
    Tensor<T> out(od);
    for (std::int64_t n = 0; n < B; ++n) {
        for (std::int64_t co = 0; co < Co; ++co) {
            for (std::int64_t ho = 0; ho < Ho; ++ho) {
                const std::int64_t ih0 = ho * stride - pad;
                for (std::int64_t wo = 0; wo < Wo; ++wo) {
                    const std::int64_t iw0 = wo * stride - pad;
                    T acc = b[co];
                    for (std::int64_t ci = 0; ci < Ci; ++ci) {
                        for (std::int64_t r = 0; r < kh; ++r) {
                            const std::int64_t ih = ih0 + r;
                            if (ih < 0 || ih >= H) continue;
                            const T* xrow = &x.at(n, ci, ih, 0);
                            const T* wrow = &w.at(co, ci, r, 0);
                            for (std::int64_t c = 0; c < kw; ++c) {
                                const std::int64_t iw = iw0 + c;
                                if (iw < 0 || iw >= W) continue;
                                acc += xrow[iw] * wrow[c];
                            }
                        }
                    }
                    out.at(n, co, ho, wo) = acc;
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("global_avg_pool: need (B,C,H,W), got " + dims_to_string(x.dims()));
    const std::int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor<T> out({B, C});
    for (std::int64_t n = 0; n < B; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            T acc = 0;
            const T* p = &x.at(n, c, 0, 0);
            for (std::int64_t i = 0; i < HW; ++i) acc += p[i];
            out.at(n, c) = acc / static_cast<T>(HW);
        }
    return out;
}

template <typename T>
void batchnorm_stats(const Tensor<T>& x, Tensor<T>& mean_out, Tensor<T>& var_out) {
    if (x.rank() != 2 && x.rank() != 4)
        throw ShapeError("batchnorm: need rank-2 or rank-4 input, got " + dims_to_string(x.dims()));
    const std::int64_t C = x.dim(1);
    mean_out = Tensor<T>({C});
    var_out = Tensor<T>({C});
    if (x.rank() == 2) {
        const std::int64_t B = x.dim(0);
        for (std::int64_t c = 0; c < C; ++c) {
            T m = 0;
            for (std::int64_t n = 0; n < B; ++n) m += x.at(n, c);
            m /= static_cast<T>(B);
            T v = 0;
            for (std::int64_t n = 0; n < B; ++n) {
                const T d = x.at(n, c) - m;
                v += d * d;
            }
            mean_out[c] = m;
            var_out[c] = v / static_cast<T>(B);
        }
    } else {
        const std::int64_t B = x.dim(0), HW = x.dim(2) * x.dim(3);
        const std::int64_t N = B * HW;
        for (std::int64_t c = 0; c < C; ++c) {
            T m = 0;
            for (std::int64_t n = 0; n < B; ++n) {
                const T* p = &x.at(n, c, 0, 0);
                for (std::int64_t i = 0; i < HW; ++i) m += p[i];
            }
            m /= static_cast<T>(N);
            T v = 0;
            for (std::int64_t n = 0; n < B; ++n) {
                const T* p = &x.at(n, c, 0, 0);
                for (std::int64_t i = 0; i < HW; ++i) {
                    const T d = p[i] - m;
                    v += d * d;
                }
            }
            mean_out[c] = m;
            var_out[c] = v / static_cast<T>(N);
        }
    }
}

template <typename T>
Tensor<T> batchnorm_apply(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& mean, const Tensor<T>& invstd) {
    const std::int64_t C = x.dim(1);
    if (gamma.numel() != C || beta.numel() != C || mean.numel() != C || invstd.numel() != C)
        throw ShapeError("batchnorm: parameter extents do not match " + std::to_string(C) +
                         " channels");
    Tensor<T> out(x.dims());
    if (x.rank() == 2) {
        const std::int64_t B = x.dim(0);
        for (std::int64_t n = 0; n < B; ++n)
            for (std::int64_t c = 0; c < C; ++c)
                out.at(n, c) = gamma[c] * (x.at(n, c) - mean[c]) * invstd[c] + beta[c];
    } else {
        const std::int64_t B = x.dim(0), HW = x.dim(2) * x.dim(3);
        for (std::int64_t n = 0; n < B; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const T* p = &x.at(n, c, 0, 0);
                T* q = &out.at(n, c, 0, 0);
                const T g = gamma[c], m = mean[c], is = invstd[c], bt = beta[c];
                for (std::int64_t i = 0; i < HW; ++i) q[i] = g * (p[i] - m) * is + bt;
            }
    }
    return out;
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, double eps, Tensor<T>* norms_out) {
    const bool single = x.rank() == 1;
    if (!single && x.rank() != 2)
        throw ShapeError("l2_normalize: need rank-1 or rank-2, got " + dims_to_string(x.dims()));
    const std::int64_t rows = single ? 1 : x.dim(0);
    const std::int64_t cols = single ? x.dim(0) : x.dim(1);
    Tensor<T> out(x.dims());
    Tensor<T> norms({rows});
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* p = &x[static_cast<std::size_t>(r * cols)];
        T* q = &out[static_cast<std::size_t>(r * cols)];
        T ss = 0;
        for (std::int64_t c = 0; c < cols; ++c) ss += p[c] * p[c];
        const T n = std::sqrt(ss);
        norms[r] = n;
        const T denom = n > static_cast<T>(eps) ? n : static_cast<T>(eps);
        for (std::int64_t c = 0; c < cols; ++c) q[c] = p[c] / denom;
    }
    if (norms_out) *norms_out = std::move(norms);
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts, std::int64_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Dims& first = parts[0]->dims();
    const auto rank = static_cast<std::int64_t>(first.size());
    if (axis < 0 || axis >= rank) throw ShapeError("concat: axis " + std::to_string(axis) +
                                                   " out of range for rank " + std::to_string(rank));
    Dims od = first;
    od[axis] = 0;
    for (const auto* p : parts) {
        if (static_cast<std::int64_t>(p->rank()) != rank)
            throw ShapeError("concat: rank mismatch " + dims_to_string(p->dims()));
        for (std::int64_t d = 0; d < rank; ++d)
            if (d != axis && p->dims()[d] != first[d])
                throw ShapeError("concat: dims differ off-axis, " + dims_to_string(p->dims()) +
                                 " vs " + dims_to_string(first));
        od[axis] += p->dims()[axis];
    }
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= od[d];
    for (std::int64_t d = axis + 1; d < rank; ++d) inner *= od[d];

    Tensor<T> out(od);
    const std::int64_t out_block = od[axis] * inner;
    std::int64_t off = 0;
    for (const auto* p : parts) {
        const std::int64_t blk = p->dims()[axis] * inner;
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(p->data().data() + o * blk, blk,
                        out.data().data() + o * out_block + off);
        off += blk;
    }
    return out;
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x) {
    T acc = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
    return Tensor<T>::scalar(acc);
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& image, std::int64_t out_h, std::int64_t out_w) {
    if (image.rank() != 2 && image.rank() != 3)
        throw ShapeError("bilinear_resize: need (H,W) or (H,W,C), got " + dims_to_string(image.dims()));
    if (out_h < 1 || out_w < 1)
        throw ShapeError("bilinear_resize: zero-sized target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w));
    const std::int64_t H = image.dim(0), W = image.dim(1);
    const std::int64_t C = image.rank() == 3 ? image.dim(2) : 1;
    Dims od = image.rank() == 3 ? Dims{out_h, out_w, C} : Dims{out_h, out_w};
    Tensor<T> out(od);

    // Align-corners sampling: corner pixels map onto corner pixels exactly.
    const double sy = out_h > 1 ? static_cast<double>(H - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(W - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const double ry = sy * static_cast<double>(oy);
        auto y0 = static_cast<std::int64_t>(ry);
        if (y0 > H - 1) y0 = H - 1;
        const double fy = ry - static_cast<double>(y0);
        const std::int64_t y1 = (fy > 0.0 && y0 + 1 < H) ? y0 + 1 : y0;
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
            const double rx = sx * static_cast<double>(ox);
            auto x0 = static_cast<std::int64_t>(rx);
            if (x0 > W - 1) x0 = W - 1;
            const double fx = rx - static_cast<double>(x0);
            const std::int64_t x1 = (fx > 0.0 && x0 + 1 < W) ? x0 + 1 : x0;
            for (std::int64_t c = 0; c < C; ++c) {
                const T v00 = image[(y0 * W + x0) * C + c];
                if (fy == 0.0 && fx == 0.0) {
                    out[(oy * out_w + ox) * C + c] = v00;  // exact copy, no blend
                    continue;
                }
                const T v01 = image[(y0 * W + x1) * C + c];
                const T v10 = image[(y1 * W + x0) * C + c];
                const T v11 = image[(y1 * W + x1) * C + c];
                const double top = (1.0 - fx) * static_cast<double>(v00) + fx * static_cast<double>(v01);
                const double bot = (1.0 - fx) * static_cast<double>(v10) + fx * static_cast<double>(v11);
                out[(oy * out_w + ox) * C + c] = static_cast<T>((1.0 - fy) * top + fy * bot);
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> hwc_to_chw(const Tensor<T>& img) {
    if (img.rank() != 3) throw ShapeError("hwc_to_chw: need (H,W,C), got " + dims_to_string(img.dims()));
    const std::int64_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
    Tensor<T> out({C, H, W});
    for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w)
            for (std::int64_t c = 0; c < C; ++c) out[(c * H + h) * W + w] = img[(h * W + w) * C + c];
    return out;
}

template <typename T>
Tensor<T> chw_to_hwc(const Tensor<T>& img) {
    if (img.rank() != 3) throw ShapeError("chw_to_hwc: need (C,H,W), got " + dims_to_string(img.dims()));
    const std::int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor<T> out({H, W, C});
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t w = 0; w < W; ++w) out[(h * W + w) * C + c] = img[(c * H + h) * W + w];
    return out;
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& images) {
    if (images.empty()) throw ShapeError("stack_batch: no images");
    const Dims& d = images[0].dims();
    if (d.size() != 3) throw ShapeError("stack_batch: need (C,H,W) images, got " + dims_to_string(d));
    Tensor<T> out({static_cast<std::int64_t>(images.size()), d[0], d[1], d[2]});
    const std::int64_t n = images[0].numel();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!(images[i].dims() == d))
            throw ShapeError("stack_batch: image " + std::to_string(i) + " has dims " +
                             dims_to_string(images[i].dims()) + ", expected " + dims_to_string(d));
        std::copy_n(images[i].data().data(), n, out.data().data() + static_cast<std::int64_t>(i) * n);
    }
    return out;
}

#define FANCL_INSTANTIATE_KERNELS(T)                                                            \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> scale<T>(const Tensor<T>&, double);                                      \
    template Tensor<T> relu<T>(const Tensor<T>&);                                               \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                            \
    template Tensor<T> exp<T>(const Tensor<T>&);                                                \
    template Tensor<T> log<T>(const Tensor<T>&);                                                \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> transpose2d<T>(const Tensor<T>&);                                        \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                 std::int64_t, std::int64_t);                                   \
    template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                    \
    template void batchnorm_stats<T>(const Tensor<T>&, Tensor<T>&, Tensor<T>&);                 \
    template Tensor<T> batchnorm_apply<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> l2_normalize<T>(const Tensor<T>&, double, Tensor<T>*);                   \
    template Tensor<T> concat<T>(const std::vector<const Tensor<T>*>&, std::int64_t);           \
    template Tensor<T> reduce_sum<T>(const Tensor<T>&);                                         \
    template Tensor<T> bilinear_resize<T>(const Tensor<T>&, std::int64_t, std::int64_t);        \
    template Tensor<T> hwc_to_chw<T>(const Tensor<T>&);                                         \
    template Tensor<T> chw_to_hwc<T>(const Tensor<T>&);                                         \
    template Tensor<T> stack_batch<T>(const std::vector<Tensor<T>>&);

FANCL_INSTANTIATE_KERNELS(float)
FANCL_INSTANTIATE_KERNELS(double)

#undef FANCL_INSTANTIATE_KERNELS

}  // namespace fancl::kern
