#ifndef TREENET_LOSSES_HPP
#define TREENET_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace treenet {

// ---------------------------------------------------------------- metrics

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Pixel confusion counts; `pred` is binarized as pred >= threshold and the
/// ground truth as gt >= 0.5.
template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& gt, double threshold = 0.5)
{
    require(pred.shape() == gt.shape(), ErrorKind::shape,
            "confusion: prediction " + pred.shape().str() + " vs ground truth " + gt.shape().str());
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] >= threshold;
        const bool g = gt[i] >= T(0.5);
        if (p && g)
            ++c.tp;
        else if (p)
            ++c.fp;
        else if (g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

/// 2tp / (2tp + fp + fn); 1 when both masks are empty.
inline double dice(const ConfusionCounts& c)
{
    const double denom = 2.0 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : 2.0 * c.tp / denom;
}

/// tp / (tp + fp + fn); 1 when both masks are empty.
inline double iou(const ConfusionCounts& c)
{
    const double denom = double(c.tp) + c.fp + c.fn;
    return denom == 0 ? 1.0 : c.tp / denom;
}

inline double accuracy(const ConfusionCounts& c)
{
    const double total = static_cast<double>(c.total());
    require(total > 0, ErrorKind::shape, "accuracy of an empty mask");
    return (double(c.tp) + c.tn) / total;
}

// ----------------------------------------------------------------- losses

inline constexpr double kBceEpsilon = 1e-7;
inline constexpr double kIouSmoothing = 1.0;

struct BoundaryWeightOptions {
    int kernel = 31;
    double amplification = 5.0;
};

/// w = 1 + amplification * |avg_pool(gt) - gt|, computed per (sample,
/// channel) plane with a stride-1 zero-padded window whose average always
/// divides by kernel^2.
template <typename T>
Tensor<T> boundary_weights(const Tensor<T>& gt, BoundaryWeightOptions opt = {})
{
    require(opt.kernel >= 1 && opt.kernel % 2 == 1, ErrorKind::config, "boundary weight kernel must be odd");
    const Shape4& s = gt.shape();
    Tensor<T> w(s);
    const int r = opt.kernel / 2;
    const double area = double(opt.kernel) * opt.kernel;
    std::vector<double> sat(static_cast<std::size_t>(s.h + 1) * (s.w + 1));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* g = gt.sample_data(n) + static_cast<std::size_t>(c) * s.h * s.w;
            T* out = w.sample_data(n) + static_cast<std::size_t>(c) * s.h * s.w;
            const auto at = [&](int y, int x) -> double& { return sat[static_cast<std::size_t>(y) * (s.w + 1) + x]; };
            for (int y = 0; y <= s.h; ++y)
                at(y, 0) = 0;
            for (int x = 0; x <= s.w; ++x)
                at(0, x) = 0;
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x)
                    at(y + 1, x + 1) = g[y * s.w + x] + at(y, x + 1) + at(y + 1, x) - at(y, x);
            for (int y = 0; y < s.h; ++y) {
                const int y0 = std::max(0, y - r), y1 = std::min(s.h, y + r + 1);
                for (int x = 0; x < s.w; ++x) {
                    const int x0 = std::max(0, x - r), x1 = std::min(s.w, x + r + 1);
                    const double mean = (at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0)) / area;
                    out[y * s.w + x] = static_cast<T>(1.0 + opt.amplification * std::abs(mean - g[y * s.w + x]));
                }
            }
        }
    return w;
}

namespace detail {

template <typename T>
void check_loss_inputs(const char* what, const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>* w)
{
    require(pred.shape() == target.shape(), ErrorKind::shape,
            std::string(what) + ": prediction " + pred.shape().str() + " vs target " + target.shape().str());
    if (w != nullptr)
        require(w->shape() == pred.shape(), ErrorKind::shape,
                std::string(what) + ": weights " + w->shape().str() + " vs prediction " + pred.shape().str());
    require(pred.size() > 0, ErrorKind::shape, std::string(what) + ": empty tensors");
}

} // namespace detail

/// Weighted binary cross-entropy with soft targets, averaged over
/// (sample, channel) planes: sum(w * bce) / sum(w) per plane.
template <typename T>
double weighted_bce(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& weights,
                    Tensor<T>* grad = nullptr)
{
    detail::check_loss_inputs("weighted_bce", pred, target, &weights);
    const Shape4& s = pred.shape();
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
    if (grad != nullptr)
        *grad = Tensor<T>(s);
    double total = 0;
    for (std::size_t q = 0; q < planes; ++q) {
        const std::size_t off = q * plane;
        double num = 0, den = 0;
        for (std::size_t k = 0; k < plane; ++k) {
            const double p = std::clamp<double>(pred[off + k], kBceEpsilon, 1 - kBceEpsilon);
            const double t = target[off + k];
            num += weights[off + k] * -(t * std::log(p) + (1 - t) * std::log(1 - p));
            den += weights[off + k];
        }
        total += num / den;
        if (grad == nullptr)
            continue;
        for (std::size_t k = 0; k < plane; ++k) {
            const double raw = pred[off + k];
            if (raw < kBceEpsilon || raw > 1 - kBceEpsilon)
                continue;
            const double t = target[off + k];
            (*grad)[off + k] =
                static_cast<T>(weights[off + k] * (-t / raw + (1 - t) / (1 - raw)) / den / double(planes));
        }
    }
    return total / double(planes);
}

/// 1 - (sum(w p t) + 1) / (sum(w (p + t - p t)) + 1), averaged over planes.
template <typename T>
double weighted_iou_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& weights,
                         Tensor<T>* grad = nullptr)
{
    detail::check_loss_inputs("weighted_iou_loss", pred, target, &weights);
    const Shape4& s = pred.shape();
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
    if (grad != nullptr)
        *grad = Tensor<T>(s);
    double total = 0;
    for (std::size_t q = 0; q < planes; ++q) {
        const std::size_t off = q * plane;
        double inter = 0, uni = 0;
        for (std::size_t k = 0; k < plane; ++k) {
            const double p = pred[off + k], t = target[off + k], w = weights[off + k];
            inter += w * p * t;
            uni += w * (p + t - p * t);
        }
        const double a = inter + kIouSmoothing;
        const double b = uni + kIouSmoothing;
        total += 1 - a / b;
        if (grad == nullptr)
            continue;
        for (std::size_t k = 0; k < plane; ++k) {
            const double t = target[off + k], w = weights[off + k];
            (*grad)[off + k] = static_cast<T>(-(w * t * b - a * w * (1 - t)) / (b * b) / double(planes));
        }
    }
    return total / double(planes);
}

struct CompositeLossValue {
    double total = 0;
    double wiou = 0;
    double wbce = 0;
};

/// wIoU + wBCE, with both components reported.
template <typename T>
CompositeLossValue composite_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& weights,
                                  Tensor<T>* grad = nullptr)
{
    CompositeLossValue v;
    if (grad == nullptr) {
        v.wiou = weighted_iou_loss(pred, target, weights);
        v.wbce = weighted_bce(pred, target, weights);
    } else {
        Tensor<T> g_bce;
        v.wiou = weighted_iou_loss(pred, target, weights, grad);
        v.wbce = weighted_bce(pred, target, weights, &g_bce);
        for (std::size_t k = 0; k < grad->size(); ++k)
            (*grad)[k] += g_bce[k];
    }
    v.total = v.wiou + v.wbce;
    return v;
}

/// Mean squared error over all elements.
template <typename T>
double euclidean_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad = nullptr)
{
    detail::check_loss_inputs<T>("euclidean_loss", pred, target, nullptr);
    const double m = double(pred.size());
    double sum = 0;
    if (grad != nullptr)
        *grad = Tensor<T>(pred.shape());
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double d = double(pred[k]) - double(target[k]);
        sum += d * d;
        if (grad != nullptr)
            (*grad)[k] = static_cast<T>(2 * d / m);
    }
    return sum / m;
}

} // namespace treenet

#endif // TREENET_LOSSES_HPP
