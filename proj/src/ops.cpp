#include "solo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace solo::ops {

namespace {

void require_rank(const Shape& shape, std::size_t rank, const char* op, const char* what)
{
    if (shape.size() != rank) {
        throw std::invalid_argument(std::string(op) + ": " + what + " must have rank " +
                                    std::to_string(rank) + ", got shape " + shape_string(shape));
    }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(op) + ": rank mismatch " + shape_string(a) +
                                    " vs " + shape_string(b));
    }
    for (std::size_t axis = 0; axis < a.size(); ++axis) {
        if (a[axis] != b[axis]) {
            throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                        " differs (" + std::to_string(a[axis]) + " vs " +
                                        std::to_string(b[axis]) + ")");
        }
    }
}

struct ConvGeometry {
    std::size_t in_c, in_h, in_w;
    std::size_t out_c, k, stride, pad;
    std::size_t out_h, out_w;

    std::size_t patch() const { return in_c * k * k; }
    std::size_t pixels() const { return out_h * out_w; }
    bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* col)
{
    const std::size_t pixels = g.pixels();
    for (std::size_t c = 0; c < g.in_c; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                T* row = col + ((c * g.k + ky) * g.k + kx) * pixels;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
                    T* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    const T* src = in + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                                      ? T(0)
                                      : src[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* in_grad)
{
    const std::size_t pixels = g.pixels();
    for (std::size_t c = 0; c < g.in_c; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const T* row = col + ((c * g.k + ky) * g.k + kx) * pixels;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    T* dst = in_grad + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
                    const T* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

// C[m][n] += sum_j A(m, j) * B[j][n] for C (M x N) and B (K x N) row-major,
// A(m, j) = a[m * a_row + j * a_col]. Every element accumulates in j order.
// Blocks of R rows by two vectors stay in registers across the j loop.
template <typename T>
struct VecOf;
template <>
struct VecOf<float> {
    typedef float type __attribute__((vector_size(32)));
};
template <>
struct VecOf<double> {
    typedef double type __attribute__((vector_size(32)));
};
template <typename T>
using Vec = typename VecOf<T>::type;

template <typename T>
constexpr std::size_t kLanes = 32 / sizeof(T);

template <typename T>
Vec<T> load_vec(const T* p)
{
    Vec<T> v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

template <typename T>
void store_vec(T* p, Vec<T> v)
{
    std::memcpy(p, &v, sizeof(v));
}

template <typename T, std::size_t R>
void gemm_block(const T* a, std::size_t a_row, std::size_t a_col, const T* b, std::size_t K,
                std::size_t N, T* c, std::size_t n0)
{
    constexpr std::size_t L = kLanes<T>;
    Vec<T> lo[R], hi[R];
    for (std::size_t r = 0; r < R; ++r) {
        lo[r] = load_vec(c + r * N + n0);
        hi[r] = load_vec(c + r * N + n0 + L);
    }
    for (std::size_t j = 0; j < K; ++j) {
        const Vec<T> b0 = load_vec(b + j * N + n0);
        const Vec<T> b1 = load_vec(b + j * N + n0 + L);
        for (std::size_t r = 0; r < R; ++r) {
            const T av = a[r * a_row + j * a_col];
            lo[r] += av * b0;
            hi[r] += av * b1;
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        store_vec(c + r * N + n0, lo[r]);
        store_vec(c + r * N + n0 + L, hi[r]);
    }
}

template <typename T>
void gemm_accumulate(std::size_t M, std::size_t N, std::size_t K, const T* a, std::size_t a_row,
                     std::size_t a_col, const T* b, T* c)
{
    constexpr std::size_t W = 2 * kLanes<T>;
    const std::size_t full = N - N % W;
    std::size_t m = 0;
    for (; m + 4 <= M; m += 4) {
        for (std::size_t n = 0; n < full; n += W)
            gemm_block<T, 4>(a + m * a_row, a_row, a_col, b, K, N, c + m * N, n);
    }
    for (; m < M; ++m) {
        for (std::size_t n = 0; n < full; n += W)
            gemm_block<T, 1>(a + m * a_row, a_row, a_col, b, K, N, c + m * N, n);
    }
    if (full == N) return;
    for (std::size_t i = 0; i < M; ++i) {
        T* crow = c + i * N;
        for (std::size_t j = 0; j < K; ++j) {
            const T av = a[i * a_row + j * a_col];
            const T* brow = b + j * N;
            for (std::size_t n = full; n < N; ++n) crow[n] += av * brow[n];
        }
    }
}

// out[o][p] = bias[o] + sum_k w[o][k] * col[k][p], accumulated in k order.
template <typename T>
void gemm_bias(const T* w, const T* bias, const T* col, std::size_t rows, std::size_t depth,
               std::size_t pixels, T* out)
{
    for (std::size_t o = 0; o < rows; ++o) std::fill(out + o * pixels, out + (o + 1) * pixels, bias[o]);
    gemm_accumulate(rows, pixels, depth, w, depth, std::size_t{1}, col, out);
}

template <typename T>
T stable_sigmoid(T x)
{
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

struct ResizeTap {
    std::size_t lo, hi;
    double frac;
};

std::vector<ResizeTap> resize_taps(std::size_t in, std::size_t out)
{
    std::vector<ResizeTap> taps(out);
    for (std::size_t i = 0; i < out; ++i) {
        double src = out == 1 ? 0.0
                              : static_cast<double>(i) * static_cast<double>(in - 1) /
                                    static_cast<double>(out - 1);
        auto lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        const std::size_t hi = std::min(lo + 1, in - 1);
        taps[i] = {lo, hi, src - static_cast<double>(lo)};
    }
    return taps;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding)
{
    require_rank(input.shape(), 3, "conv2d", "input");
    require_rank(kernel.shape(), 4, "conv2d", "kernel");
    require_rank(bias.shape(), 1, "conv2d", "bias");
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    const auto& ks = kernel.shape();
    if (ks[2] != ks[3]) {
        throw std::invalid_argument("conv2d: kernel axes 2 and 3 differ (" + std::to_string(ks[2]) +
                                    " vs " + std::to_string(ks[3]) + ")");
    }
    if (ks[2] % 2 == 0) {
        throw std::invalid_argument("conv2d: kernel axis 2 has even size " + std::to_string(ks[2]));
    }
    if (ks[1] != input.dim(0)) {
        throw std::invalid_argument("conv2d: kernel axis 1 (input channels) is " +
                                    std::to_string(ks[1]) + " but input axis 0 is " +
                                    std::to_string(input.dim(0)));
    }
    if (bias.dim(0) != ks[0]) {
        throw std::invalid_argument("conv2d: bias axis 0 is " + std::to_string(bias.dim(0)) +
                                    " but kernel axis 0 (output channels) is " +
                                    std::to_string(ks[0]));
    }
    ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), ks[0], ks[2], stride, padding, 0, 0};
    if (g.in_h + 2 * padding < g.k) {
        throw std::invalid_argument("conv2d: input axis 1 (height " + std::to_string(g.in_h) +
                                    ") smaller than kernel");
    }
    if (g.in_w + 2 * padding < g.k) {
        throw std::invalid_argument("conv2d: input axis 2 (width " + std::to_string(g.in_w) +
                                    ") smaller than kernel");
    }
    g.out_h = (g.in_h + 2 * padding - g.k) / stride + 1;
    g.out_w = (g.in_w + 2 * padding - g.k) / stride + 1;

    const std::size_t pixels = g.pixels();
    const std::size_t depth = g.patch();
    auto col = std::make_shared<std::vector<T>>();
    const T* col_ptr = input.data().data();
    if (!g.is_pointwise()) {
        col->resize(depth * pixels);
        im2col(input.data().data(), g, col->data());
        col_ptr = col->data();
    }
    std::vector<T> out(g.out_c * pixels);
    gemm_bias(kernel.data().data(), bias.data().data(), col_ptr, g.out_c, depth, pixels,
              out.data());

    return record_op<T>(
        {g.out_c, g.out_h, g.out_w}, std::move(out), {input, kernel, bias},
        [input, kernel, bias, g, col](std::span<const T> grad_out) {
            const std::size_t pixels = g.pixels();
            const std::size_t depth = g.patch();
            const T* cols = g.is_pointwise() ? input.data().data() : col->data();
            if (bias.requires_grad()) {
                std::vector<T> gb(g.out_c);
                for (std::size_t o = 0; o < g.out_c; ++o) {
                    T s = 0;
                    for (std::size_t p = 0; p < pixels; ++p) s += grad_out[o * pixels + p];
                    gb[o] = s;
                }
                bias.accumulate_grad(gb);
            }
            if (kernel.requires_grad()) {
                // gw = grad_out * cols^T, via a transposed copy of cols.
                std::vector<T> cols_t(pixels * depth);
                for (std::size_t k = 0; k < depth; ++k)
                    for (std::size_t p = 0; p < pixels; ++p) cols_t[p * depth + k] = cols[k * pixels + p];
                std::vector<T> gw(g.out_c * depth, T(0));
                gemm_accumulate(g.out_c, depth, pixels, grad_out.data(), pixels, std::size_t{1},
                                cols_t.data(), gw.data());
                kernel.accumulate_grad(gw);
            }
            if (input.requires_grad()) {
                // gcol = kernel^T * grad_out.
                std::vector<T> gcol(depth * pixels, T(0));
                gemm_accumulate(depth, pixels, g.out_c, kernel.data().data(), std::size_t{1}, depth,
                                grad_out.data(), gcol.data());
                if (g.is_pointwise()) {
                    input.accumulate_grad(gcol);
                } else {
                    std::vector<T> gin(input.size(), T(0));
                    col2im(gcol.data(), g, gin.data());
                    input.accumulate_grad(gin);
                }
            }
        });
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h, std::size_t out_w)
{
    require_rank(input.shape(), 3, "bilinear_resize", "input");
    if (out_h == 0 || out_w == 0) {
        throw std::invalid_argument("bilinear_resize: output extents must be positive");
    }
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h == out_h && w == out_w) {
        return record_op<T>(input.shape(), std::vector<T>(input.data().begin(), input.data().end()),
                            {input},
                            [input](std::span<const T> grad_out) { input.accumulate_grad(grad_out); });
    }
    auto ty = resize_taps(h, out_h);
    auto tx = resize_taps(w, out_w);
    std::vector<T> out(c * out_h * out_w);
    const T* in = input.data().data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* plane = in + ch * h * w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const T fy = static_cast<T>(ty[y].frac);
            const T* r0 = plane + ty[y].lo * w;
            const T* r1 = plane + ty[y].hi * w;
            T* dst = out.data() + (ch * out_h + y) * out_w;
            for (std::size_t x = 0; x < out_w; ++x) {
                const T fx = static_cast<T>(tx[x].frac);
                const T top = (T(1) - fx) * r0[tx[x].lo] + fx * r0[tx[x].hi];
                const T bottom = (T(1) - fx) * r1[tx[x].lo] + fx * r1[tx[x].hi];
                dst[x] = (T(1) - fy) * top + fy * bottom;
            }
        }
    }
    return record_op<T>(
        {c, out_h, out_w}, std::move(out), {input},
        [input, ty = std::move(ty), tx = std::move(tx), c, h, w, out_h,
         out_w](std::span<const T> grad_out) {
            std::vector<T> gin(c * h * w, T(0));
            for (std::size_t ch = 0; ch < c; ++ch) {
                T* plane = gin.data() + ch * h * w;
                for (std::size_t y = 0; y < out_h; ++y) {
                    const T fy = static_cast<T>(ty[y].frac);
                    T* r0 = plane + ty[y].lo * w;
                    T* r1 = plane + ty[y].hi * w;
                    const T* go = grad_out.data() + (ch * out_h + y) * out_w;
                    for (std::size_t x = 0; x < out_w; ++x) {
                        const T fx = static_cast<T>(tx[x].frac);
                        const T top = (T(1) - fy) * go[x];
                        const T bottom = fy * go[x];
                        r0[tx[x].lo] += (T(1) - fx) * top;
                        r0[tx[x].hi] += fx * top;
                        r1[tx[x].lo] += (T(1) - fx) * bottom;
                        r1[tx[x].hi] += fx * bottom;
                    }
                }
            }
            input.accumulate_grad(gin);
        });
}

template <typename T>
Tensor<T> pointwise(const Tensor<T>& input, Pointwise fn)
{
    const auto x = input.data();
    std::vector<T> out(x.size());
    if (fn == Pointwise::sigmoid) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_sigmoid(x[i]);
        auto y = std::make_shared<std::vector<T>>(out);
        return record_op<T>(input.shape(), std::move(out), {input},
                            [input, y](std::span<const T> grad_out) {
                                std::vector<T> g(grad_out.size());
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                    const T s = (*y)[i];
                                    g[i] = grad_out[i] * s * (T(1) - s);
                                }
                                input.accumulate_grad(g);
                            });
    }
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return record_op<T>(input.shape(), std::move(out), {input},
                        [input](std::span<const T> grad_out) {
                            const auto xs = input.data();
                            std::vector<T> g(grad_out.size());
                            for (std::size_t i = 0; i < g.size(); ++i) {
                                g[i] = xs[i] > T(0) ? grad_out[i] : T(0);
                            }
                            input.accumulate_grad(g);
                        });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b)
{
    require_rank(a.shape(), 3, "concat_channels", "first input");
    require_rank(b.shape(), 3, "concat_channels", "second input");
    for (std::size_t axis = 1; axis < 3; ++axis) {
        if (a.dim(axis) != b.dim(axis)) {
            throw std::invalid_argument("concat_channels: spatial axis " + std::to_string(axis) +
                                        " differs (" + std::to_string(a.dim(axis)) + " vs " +
                                        std::to_string(b.dim(axis)) + ")");
        }
    }
    std::vector<T> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    const std::size_t split = a.size();
    return record_op<T>({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(out), {a, b},
                        [a, b, split](std::span<const T> grad_out) {
                            if (a.requires_grad() && split > 0) {
                                a.accumulate_grad(grad_out.subspan(0, split));
                            }
                            if (b.requires_grad() && grad_out.size() > split) {
                                b.accumulate_grad(grad_out.subspan(split));
                            }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "mul");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return record_op<T>(a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> grad_out) {
        const auto x = a.data();
        const auto y = b.data();
        if (a.requires_grad()) {
            std::vector<T> g(x.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * y[i];
            a.accumulate_grad(g);
        }
        if (b.requires_grad()) {
            std::vector<T> g(x.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * x[i];
            b.accumulate_grad(g);
        }
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "add");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return record_op<T>(a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> grad_out) {
        if (a.requires_grad()) a.accumulate_grad(grad_out);
        if (b.requires_grad()) b.accumulate_grad(grad_out);
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor)
{
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    return record_op<T>(a.shape(), std::move(out), {a}, [a, factor](std::span<const T> grad_out) {
        std::vector<T> g(grad_out.begin(), grad_out.end());
        for (auto& v : g) v *= factor;
        a.accumulate_grad(g);
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input)
{
    T total = 0;
    for (T v : input.data()) total += v;
    return record_op<T>({1}, {total}, {input}, [input](std::span<const T> grad_out) {
        input.accumulate_grad(std::vector<T>(input.size(), grad_out[0]));
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& input)
{
    if (input.size() == 0) throw std::invalid_argument("mean: empty tensor");
    T total = 0;
    for (T v : input.data()) total += v;
    const T n = static_cast<T>(input.size());
    return record_op<T>({1}, {total / n}, {input}, [input, n](std::span<const T> grad_out) {
        input.accumulate_grad(std::vector<T>(input.size(), grad_out[0] / n));
    });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& input, std::span<const std::size_t> rows)
{
    if (input.rank() == 0) throw std::invalid_argument("gather_rows: scalar input");
    const std::size_t count = input.dim(0);
    const std::size_t stride = count == 0 ? 0 : input.size() / count;
    std::vector<std::size_t> picked(rows.begin(), rows.end());
    std::vector<T> out;
    out.reserve(picked.size() * stride);
    for (auto r : picked) {
        if (r >= count) {
            throw std::out_of_range("gather_rows: row " + std::to_string(r) +
                                    " out of range for axis 0 of size " + std::to_string(count));
        }
        auto src = input.data().subspan(r * stride, stride);
        out.insert(out.end(), src.begin(), src.end());
    }
    Shape shape = input.shape();
    shape[0] = picked.size();
    return record_op<T>(std::move(shape), std::move(out), {input},
                        [input, picked = std::move(picked), stride](std::span<const T> grad_out) {
                            std::vector<T> g(input.size(), T(0));
                            for (std::size_t n = 0; n < picked.size(); ++n) {
                                T* dst = g.data() + picked[n] * stride;
                                const T* src = grad_out.data() + n * stride;
                                for (std::size_t i = 0; i < stride; ++i) dst[i] += src[i];
                            }
                            input.accumulate_grad(g);
                        });
}

template <typename T>
Tensor<T> select_channel(const Tensor<T>& input, std::size_t index)
{
    require_rank(input.shape(), 3, "select_channel", "input");
    const std::size_t one[] = {index};
    return reshape(gather_rows(input, one), Shape{input.dim(1), input.dim(2)});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape)
{
    if (numel(shape) != input.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_string(input.shape()) + " as " +
                                    shape_string(shape));
    }
    return record_op<T>(std::move(shape), std::vector<T>(input.data().begin(), input.data().end()),
                        {input},
                        [input](std::span<const T> grad_out) { input.accumulate_grad(grad_out); });
}

template <typename T>
Tensor<T> coordinate_channels(std::size_t h, std::size_t w)
{
    if (h == 0 || w == 0) throw std::invalid_argument("coordinate_channels: extents must be positive");
    // (2i - (n-1)) / (n-1) keeps reversal an exact negation.
    auto coord = [](std::size_t i, std::size_t n) -> T {
        if (n == 1) return T(0);
        const double num = 2.0 * static_cast<double>(i) - static_cast<double>(n - 1);
        return static_cast<T>(num / static_cast<double>(n - 1));
    };
    std::vector<T> out(2 * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            out[y * w + x] = coord(x, w);
            out[h * w + y * w + x] = coord(y, h);
        }
    }
    return Tensor<T>({2, h, w}, std::move(out));
}

#define SOLO_INSTANTIATE_OPS(T)                                                                  \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                              std::size_t);                                                      \
    template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);              \
    template Tensor<T> pointwise(const Tensor<T>&, Pointwise);                                   \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> scale(const Tensor<T>&, T);                                               \
    template Tensor<T> sum(const Tensor<T>&);                                                    \
    template Tensor<T> mean(const Tensor<T>&);                                                   \
    template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);              \
    template Tensor<T> select_channel(const Tensor<T>&, std::size_t);                            \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
    template Tensor<T> coordinate_channels(std::size_t, std::size_t);

SOLO_INSTANTIATE_OPS(float)
SOLO_INSTANTIATE_OPS(double)

#undef SOLO_INSTANTIATE_OPS

}  // namespace solo::ops
