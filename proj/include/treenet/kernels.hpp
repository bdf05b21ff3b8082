#ifndef TREENET_KERNELS_HPP
#define TREENET_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "tensor.hpp"

// Raw per-sample kernels used by Network. All buffers are CHW, row-major.
namespace treenet::kernels {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
using Scratch = std::vector<T, TrackingAllocator<T>>;

/// Unfold output rows [oy0, oy1) of a C x H x W image into
/// (C*k*k) x ((oy1-oy0)*Wo) columns.
template <typename T>
void im2col(const T* img, int channels, int height, int width, int k, int stride, int pad, int out_w, int oy0,
            int oy1, T* col)
{
    const int plane = (oy1 - oy0) * out_w;
    for (int c = 0; c < channels; ++c) {
        const T* src = img + static_cast<std::size_t>(c) * height * width;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* dst = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * plane;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    T* row = dst + static_cast<std::size_t>(oy - oy0) * out_w;
                    if (iy < 0 || iy >= height) {
                        std::fill_n(row, out_w, T(0));
                        continue;
                    }
                    const T* srow = src + static_cast<std::size_t>(iy) * width;
                    if (stride == 1) {
                        const int lo = std::min(out_w, std::max(0, pad - kj));
                        const int hi = std::max(lo, std::min(out_w, width + pad - kj));
                        std::fill(row, row + lo, T(0));
                        std::copy(srow + lo - pad + kj, srow + hi - pad + kj, row + lo);
                        std::fill(row + hi, row + out_w, T(0));
                    } else {
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * stride - pad + kj;
                            row[ox] = (ix >= 0 && ix < width) ? srow[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col over output rows [oy0, oy1): scatter-adds the columns
/// into `img` (not cleared here).
template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int k, int stride, int pad, int out_w, int oy0,
                int oy1, T* img)
{
    const int plane = (oy1 - oy0) * out_w;
    for (int c = 0; c < channels; ++c) {
        T* dst = img + static_cast<std::size_t>(c) * height * width;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* src = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * plane;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= height)
                        continue;
                    const T* row = src + static_cast<std::size_t>(oy - oy0) * out_w;
                    T* drow = dst + static_cast<std::size_t>(iy) * width;
                    if (stride == 1) {
                        const int lo = std::min(out_w, std::max(0, pad - kj));
                        const int hi = std::max(lo, std::min(out_w, width + pad - kj));
                        T* d = drow + lo - pad + kj;
                        for (int ox = lo; ox < hi; ++ox)
                            d[ox - lo] += row[ox];
                    } else {
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * stride - pad + kj;
                            if (ix >= 0 && ix < width)
                                drow[ix] += row[ox];
                        }
                    }
                }
            }
        }
    }
}

struct ConvGeometry {
    int in_c, in_h, in_w;
    int out_c, out_h, out_w;
    int k, stride, pad;

    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

/// Rows of the unfolded plane processed per step, sized so one column tile
/// stays resident in L2.
inline int tile_rows(int unfolded_rows, int width, int height)
{
    constexpr int kTileElements = 1 << 16;
    return std::clamp(kTileElements / std::max(1, unfolded_rows * width), 1, std::max(1, height));
}

/// y = conv(x, W) + b for one sample. W is out_c x (in_c*k*k).
template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y, Scratch<T>& col)
{
    const int rows = g.in_c * g.k * g.k;
    const int plane = g.out_h * g.out_w;
    ConstMatMap<T> w(weight, g.out_c, rows);
    if (g.pointwise()) {
        MatMap<T>(y, g.out_c, plane).noalias() = w * ConstMatMap<T>(x, rows, plane);
    } else {
        const int step = tile_rows(rows, g.out_w, g.out_h);
        col.resize(static_cast<std::size_t>(rows) * step * g.out_w);
        for (int oy0 = 0; oy0 < g.out_h; oy0 += step) {
            const int oy1 = std::min(g.out_h, oy0 + step);
            const int cols = (oy1 - oy0) * g.out_w;
            im2col(x, g.in_c, g.in_h, g.in_w, g.k, g.stride, g.pad, g.out_w, oy0, oy1, col.data());
            StridedMap<T>(y + static_cast<std::size_t>(oy0) * g.out_w, g.out_c, cols, Eigen::OuterStride<>(plane))
                .noalias() = w * ConstMatMap<T>(col.data(), rows, cols);
        }
    }
    MatMap<T> out(y, g.out_c, plane);
    for (int c = 0; c < g.out_c; ++c)
        out.row(c).array() += bias[c];
}

/// Accumulates dW, db; writes dx when non-null.
template <typename T>
void conv_backward(const ConvGeometry& g, const T* x, const T* weight, const T* dy, T* dweight, T* dbias, T* dx,
                   Scratch<T>& col)
{
    const int rows = g.in_c * g.k * g.k;
    const int plane = g.out_h * g.out_w;
    ConstMatMap<T> grad_out(dy, g.out_c, plane);
    ConstMatMap<T> w(weight, g.out_c, rows);
    MatMap<T> dw(dweight, g.out_c, rows);
    for (int c = 0; c < g.out_c; ++c)
        dbias[c] += grad_out.row(c).sum();
    if (g.pointwise()) {
        dw.noalias() += grad_out * ConstMatMap<T>(x, rows, plane).transpose();
        if (dx != nullptr)
            MatMap<T>(dx, rows, plane).noalias() = w.transpose() * grad_out;
        return;
    }
    if (dx != nullptr)
        std::fill_n(dx, static_cast<std::size_t>(g.in_c) * g.in_h * g.in_w, T(0));
    const int step = tile_rows(rows, g.out_w, g.out_h);
    col.resize(static_cast<std::size_t>(rows) * step * g.out_w);
    for (int oy0 = 0; oy0 < g.out_h; oy0 += step) {
        const int oy1 = std::min(g.out_h, oy0 + step);
        const int cols = (oy1 - oy0) * g.out_w;
        ConstStridedMap<T> dy_tile(dy + static_cast<std::size_t>(oy0) * g.out_w, g.out_c, cols,
                                   Eigen::OuterStride<>(plane));
        im2col(x, g.in_c, g.in_h, g.in_w, g.k, g.stride, g.pad, g.out_w, oy0, oy1, col.data());
        MatMap<T> c(col.data(), rows, cols);
        dw.noalias() += dy_tile * c.transpose();
        if (dx == nullptr)
            continue;
        c.noalias() = w.transpose() * dy_tile;
        col2im_add(col.data(), g.in_c, g.in_h, g.in_w, g.k, g.stride, g.pad, g.out_w, oy0, oy1, dx);
    }
}

/// Transposed convolution for one sample. W is in_c x (out_c*k*k). The
/// geometry describes the *output* as the image of an ordinary convolution
/// whose result has the input's spatial size.
template <typename T>
void transposed_conv_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y,
                             Scratch<T>& col)
{
    const int rows = g.out_c * g.k * g.k;
    const int plane = g.in_h * g.in_w;
    const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
    std::fill_n(y, out_plane * g.out_c, T(0));
    ConstMatMap<T> w(weight, g.in_c, rows);
    const int step = tile_rows(rows, g.in_w, g.in_h);
    col.resize(static_cast<std::size_t>(rows) * step * g.in_w);
    for (int iy0 = 0; iy0 < g.in_h; iy0 += step) {
        const int iy1 = std::min(g.in_h, iy0 + step);
        const int cols = (iy1 - iy0) * g.in_w;
        MatMap<T>(col.data(), rows, cols).noalias() =
            w.transpose() *
            ConstStridedMap<T>(x + static_cast<std::size_t>(iy0) * g.in_w, g.in_c, cols, Eigen::OuterStride<>(plane));
        col2im_add(col.data(), g.out_c, g.out_h, g.out_w, g.k, g.stride, g.pad, g.in_w, iy0, iy1, y);
    }
    for (int c = 0; c < g.out_c; ++c) {
        T* p = y + c * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i)
            p[i] += bias[c];
    }
}

template <typename T>
void transposed_conv_backward(const ConvGeometry& g, const T* x, const T* weight, const T* dy, T* dweight,
                              T* dbias, T* dx, Scratch<T>& col)
{
    const int rows = g.out_c * g.k * g.k;
    const int plane = g.in_h * g.in_w;
    const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
    for (int c = 0; c < g.out_c; ++c) {
        const T* p = dy + c * out_plane;
        T s = 0;
        for (std::size_t i = 0; i < out_plane; ++i)
            s += p[i];
        dbias[c] += s;
    }
    ConstMatMap<T> w(weight, g.in_c, rows);
    MatMap<T> dw(dweight, g.in_c, rows);
    const int step = tile_rows(rows, g.in_w, g.in_h);
    col.resize(static_cast<std::size_t>(rows) * step * g.in_w);
    for (int iy0 = 0; iy0 < g.in_h; iy0 += step) {
        const int iy1 = std::min(g.in_h, iy0 + step);
        const int cols = (iy1 - iy0) * g.in_w;
        im2col(dy, g.out_c, g.out_h, g.out_w, g.k, g.stride, g.pad, g.in_w, iy0, iy1, col.data());
        ConstMatMap<T> c(col.data(), rows, cols);
        const std::size_t off = static_cast<std::size_t>(iy0) * g.in_w;
        dw.noalias() += ConstStridedMap<T>(x + off, g.in_c, cols, Eigen::OuterStride<>(plane)) * c.transpose();
        if (dx != nullptr)
            StridedMap<T>(dx + off, g.in_c, cols, Eigen::OuterStride<>(plane)).noalias() = w * c;
    }
}

/// Pooling without padding. `argmax` (max mode) receives the flat input
/// index of each window's winner, for the backward pass.
template <typename T>
void pool_forward(const T* x, int c, int h, int w, int k, int stride, bool max_mode, T* y, int out_h, int out_w,
                  std::int32_t* argmax)
{
    const T inv = T(1) / static_cast<T>(k * k);
    if (max_mode && k == 2 && stride == 2) {
        for (int ch = 0; ch < c; ++ch) {
            const T* src = x + static_cast<std::size_t>(ch) * h * w;
            for (int oy = 0; oy < out_h; ++oy) {
                const T* r0 = src + static_cast<std::size_t>(2 * oy) * w;
                const T* r1 = r0 + w;
                const std::size_t o = (static_cast<std::size_t>(ch) * out_h + oy) * out_w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const int x0 = 2 * ox;
                    int best_i = x0;
                    T best = r0[x0];
                    if (r0[x0 + 1] > best) {
                        best = r0[x0 + 1];
                        best_i = x0 + 1;
                    }
                    if (r1[x0] > best) {
                        best = r1[x0];
                        best_i = w + x0;
                    }
                    if (r1[x0 + 1] > best) {
                        best = r1[x0 + 1];
                        best_i = w + x0 + 1;
                    }
                    y[o + ox] = best;
                    if (argmax != nullptr)
                        argmax[o + ox] = static_cast<std::int32_t>(ch * h * w + 2 * oy * w + best_i);
                }
            }
        }
        return;
    }
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                const std::size_t o = (static_cast<std::size_t>(ch) * out_h + oy) * out_w + ox;
                if (max_mode) {
                    T best = -std::numeric_limits<T>::infinity();
                    int best_i = 0;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int i = (oy * stride + ky) * w + ox * stride + kx;
                            if (src[i] > best) {
                                best = src[i];
                                best_i = i;
                            }
                        }
                    y[o] = best;
                    if (argmax != nullptr)
                        argmax[o] = static_cast<std::int32_t>(ch * h * w + best_i);
                } else {
                    T s = 0;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            s += src[(oy * stride + ky) * w + ox * stride + kx];
                    y[o] = s * inv;
                }
            }
        }
    }
}

template <typename T>
void pool_backward(const T* dy, int c, int h, int w, int k, int stride, bool max_mode, int out_h, int out_w,
                   const std::int32_t* argmax, T* dx)
{
    std::fill_n(dx, static_cast<std::size_t>(c) * h * w, T(0));
    const std::size_t count = static_cast<std::size_t>(c) * out_h * out_w;
    if (max_mode) {
        for (std::size_t o = 0; o < count; ++o)
            dx[argmax[o]] += dy[o];
        return;
    }
    const T inv = T(1) / static_cast<T>(k * k);
    for (int ch = 0; ch < c; ++ch) {
        T* dst = dx + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                const T g = dy[(static_cast<std::size_t>(ch) * out_h + oy) * out_w + ox] * inv;
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx)
                        dst[(oy * stride + ky) * w + ox * stride + kx] += g;
            }
    }
}

template <typename T>
void upsample_nearest_forward(const T* x, int c, int h, int w, int factor, T* y)
{
    const int ow = w * factor;
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < h * factor; ++oy) {
            const T* src = x + (static_cast<std::size_t>(ch) * h + oy / factor) * w;
            T* dst = y + (static_cast<std::size_t>(ch) * h * factor + oy) * ow;
            for (int ox = 0; ox < ow; ++ox)
                dst[ox] = src[ox / factor];
        }
}

template <typename T>
void upsample_nearest_backward(const T* dy, int c, int h, int w, int factor, T* dx)
{
    std::fill_n(dx, static_cast<std::size_t>(c) * h * w, T(0));
    const int ow = w * factor;
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < h * factor; ++oy) {
            T* dst = dx + (static_cast<std::size_t>(ch) * h + oy / factor) * w;
            const T* src = dy + (static_cast<std::size_t>(ch) * h * factor + oy) * ow;
            for (int ox = 0; ox < ow; ++ox)
                dst[ox / factor] += src[ox];
        }
}

/// Source taps for half-pixel-centred bilinear resampling along one axis.
struct LinearTaps {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

inline LinearTaps linear_taps(int in_size, int out_size)
{
    LinearTaps t;
    t.lo.resize(static_cast<std::size_t>(out_size));
    t.hi.resize(static_cast<std::size_t>(out_size));
    t.frac.resize(static_cast<std::size_t>(out_size));
    const double scale = static_cast<double>(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0)
            src = 0;
        int lo = static_cast<int>(src);
        if (lo > in_size - 1)
            lo = in_size - 1;
        t.lo[o] = lo;
        t.hi[o] = std::min(lo + 1, in_size - 1);
        t.frac[o] = src - lo;
    }
    return t;
}

template <typename T>
void bilinear_forward(const T* x, int c, int h, int w, T* y, int out_h, int out_w)
{
    const LinearTaps ty = linear_taps(h, out_h);
    const LinearTaps tx = linear_taps(w, out_w);
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x + static_cast<std::size_t>(ch) * h * w;
        T* dst = y + static_cast<std::size_t>(ch) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const T fy = static_cast<T>(ty.frac[oy]);
            const T* r0 = src + static_cast<std::size_t>(ty.lo[oy]) * w;
            const T* r1 = src + static_cast<std::size_t>(ty.hi[oy]) * w;
            for (int ox = 0; ox < out_w; ++ox) {
                const T fx = static_cast<T>(tx.frac[ox]);
                const int a = tx.lo[ox];
                const int b = tx.hi[ox];
                const T top = r0[a] + fx * (r0[b] - r0[a]);
                const T bottom = r1[a] + fx * (r1[b] - r1[a]);
                dst[static_cast<std::size_t>(oy) * out_w + ox] = top + fy * (bottom - top);
            }
        }
    }
}

template <typename T>
void bilinear_backward(const T* dy, int c, int h, int w, int out_h, int out_w, T* dx)
{
    const LinearTaps ty = linear_taps(h, out_h);
    const LinearTaps tx = linear_taps(w, out_w);
    std::fill_n(dx, static_cast<std::size_t>(c) * h * w, T(0));
    for (int ch = 0; ch < c; ++ch) {
        T* dst = dx + static_cast<std::size_t>(ch) * h * w;
        const T* src = dy + static_cast<std::size_t>(ch) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const T fy = static_cast<T>(ty.frac[oy]);
            T* r0 = dst + static_cast<std::size_t>(ty.lo[oy]) * w;
            T* r1 = dst + static_cast<std::size_t>(ty.hi[oy]) * w;
            for (int ox = 0; ox < out_w; ++ox) {
                const T fx = static_cast<T>(tx.frac[ox]);
                const T g = src[static_cast<std::size_t>(oy) * out_w + ox];
                const int a = tx.lo[ox];
                const int b = tx.hi[ox];
                r0[a] += g * (1 - fy) * (1 - fx);
                r0[b] += g * (1 - fy) * fx;
                r1[a] += g * fy * (1 - fx);
                r1[b] += g * fy * fx;
            }
        }
    }
}

template <typename T>
T sigmoid(T x)
{
    if (x >= 0) {
        const T z = std::exp(-x);
        return T(1) / (T(1) + z);
    }
    const T z = std::exp(x);
    return z / (T(1) + z);
}

} // namespace treenet::kernels

#endif // TREENET_KERNELS_HPP
