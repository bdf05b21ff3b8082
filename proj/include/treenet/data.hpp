#ifndef TREENET_DATA_HPP
#define TREENET_DATA_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "kernels.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace treenet {

/// One image/mask pair. image is 1x3xHxW, mask 1x1xHxW, both in [0, 1].
struct SampleRecord {
    std::string id;
    Tensor<float> image;
    Tensor<float> mask;
};

inline void check_record(const SampleRecord& r)
{
    const Shape4& is = r.image.shape();
    const Shape4& ms = r.mask.shape();
    require(is.n == 1 && is.c == 3 && ms.n == 1 && ms.c == 1, ErrorKind::shape,
            r.id + ": expected 1x3xHxW image and 1x1xHxW mask, got " + is.str() + " / " + ms.str());
    require(is.h == ms.h && is.w == ms.w, ErrorKind::shape,
            r.id + ": image " + is.str() + " and mask " + ms.str() + " differ spatially");
    require(r.image.min() >= 0.f && r.image.max() <= 1.f && r.mask.min() >= 0.f && r.mask.max() <= 1.f,
            ErrorKind::numeric, r.id + ": values outside [0, 1]");
}

/// Bilinear resize of every plane to size x size. Masks are re-binarized
/// at 0.5 afterwards. Same-size input is returned unchanged.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& t, int size, bool is_mask = false)
{
    require(size >= 1, ErrorKind::config, "resize_bilinear: size must be >= 1");
    const Shape4& s = t.shape();
    if (s.h == size && s.w == size)
        return t;
    Tensor<T> out(Shape4(s.n, s.c, size, size));
    for (int n = 0; n < s.n; ++n)
        kernels::bilinear_forward(t.sample_data(n), s.c, s.h, s.w, out.sample_data(n), size, size);
    if (is_mask)
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = out[i] >= T(0.5) ? T(1) : T(0);
    return out;
}

/// Desk-scale stand-in for medical data: a smoothly textured background
/// with 1-3 filled, shaded ellipses; the mask is the union of the ellipse
/// interiors. Pure function of (count, size, seed).
inline std::vector<SampleRecord> generate_synthetic(int count, int size, std::uint64_t seed)
{
    require(count >= 1, ErrorKind::config, "generate_synthetic: count must be >= 1");
    require(size >= 16, ErrorKind::config, "generate_synthetic: size " + std::to_string(size) + " < 16");
    std::vector<SampleRecord> out;
    out.reserve(static_cast<std::size_t>(count));
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        SampleRecord r;
        char id[32];
        std::snprintf(id, sizeof id, "syn_%05d", i);
        r.id = id;
        r.image = Tensor<float>(Shape4(1, 3, size, size));
        r.mask = Tensor<float>(Shape4(1, 1, size, size));

        const std::array<double, 3> base{rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.40), rng.uniform(0.10, 0.35)};
        struct Wave {
            double fx, fy, phase, amp;
        };
        std::array<Wave, 2> waves{};
        for (auto& w : waves)
            w = {rng.uniform(-6, 6) / size, rng.uniform(-6, 6) / size, rng.uniform(0, 2 * M_PI), rng.uniform(0.03, 0.07)};

        struct Ellipse {
            double cx, cy, a, b, cos_t, sin_t;
        };
        std::vector<Ellipse> ellipses(1 + rng.below(3));
        for (auto& e : ellipses) {
            const double theta = rng.uniform(0, M_PI);
            e = {rng.uniform(0.25, 0.75) * size, rng.uniform(0.25, 0.75) * size, rng.uniform(0.08, 0.22) * size,
                 rng.uniform(0.08, 0.22) * size, std::cos(theta), std::sin(theta)};
        }
        const std::array<double, 3> tint{rng.uniform(0.30, 0.45), rng.uniform(0.10, 0.20), rng.uniform(0.0, 0.10)};

        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double texture = 0;
                for (const auto& w : waves)
                    texture += w.amp * std::sin(2 * M_PI * (w.fx * x + w.fy * y) + w.phase);
                double inside = 0; // max normalized depth into any ellipse
                for (const auto& e : ellipses) {
                    const double dx = x + 0.5 - e.cx, dy = y + 0.5 - e.cy;
                    const double u = (dx * e.cos_t + dy * e.sin_t) / e.a;
                    const double v = (-dx * e.sin_t + dy * e.cos_t) / e.b;
                    const double r2 = u * u + v * v;
                    if (r2 <= 1.0)
                        inside = std::max(inside, 1.0 - r2);
                }
                const bool fg = inside > 0;
                const std::size_t k = static_cast<std::size_t>(y) * size + x;
                for (int c = 0; c < 3; ++c) {
                    double v = base[c] + texture + rng.uniform(-0.04, 0.04);
                    if (fg)
                        v += tint[c] * (0.7 + 0.3 * inside);
                    r.image[c * plane + k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
                r.mask[k] = fg ? 1.f : 0.f;
            }
        out.push_back(std::move(r));
    }
    return out;
}

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

enum class Split { train, val, test };

inline const char* to_string(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

/// Seeded permutation of sample ids with train/val/test boundaries.
struct SplitIndex {
    std::uint64_t seed = 0;
    SplitRatios ratios;
    std::vector<std::string> permutation;
    std::array<std::size_t, 3> boundaries{}; // n_train, n_val, n_test

    std::span<const std::string> ids(Split s) const
    {
        const std::span<const std::string> all(permutation);
        switch (s) {
        case Split::train: return all.subspan(0, boundaries[0]);
        case Split::val: return all.subspan(boundaries[0], boundaries[1]);
        case Split::test: return all.subspan(boundaries[0] + boundaries[1], boundaries[2]);
        }
        return {};
    }

    bool operator==(const SplitIndex& o) const
    {
        return seed == o.seed && permutation == o.permutation && boundaries == o.boundaries &&
               ratios.train == o.ratios.train && ratios.val == o.ratios.val && ratios.test == o.ratios.test;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json entries = nlohmann::json::array();
        for (std::size_t i = 0; i < permutation.size(); ++i) {
            const Split s = i < boundaries[0] ? Split::train
                            : i < boundaries[0] + boundaries[1] ? Split::val
                                                                : Split::test;
            entries.push_back({{"id", permutation[i]}, {"split", to_string(s)}});
        }
        return {{"seed", seed},
                {"ratios", {ratios.train, ratios.val, ratios.test}},
                {"boundaries", boundaries},
                {"entries", std::move(entries)}};
    }

    static SplitIndex from_json(const nlohmann::json& j)
    {
        SplitIndex s;
        s.seed = j.at("seed").get<std::uint64_t>();
        s.ratios = {j.at("ratios").at(0).get<double>(), j.at("ratios").at(1).get<double>(),
                    j.at("ratios").at(2).get<double>()};
        s.boundaries = j.at("boundaries").get<std::array<std::size_t, 3>>();
        for (const auto& e : j.at("entries"))
            s.permutation.push_back(e.at("id").get<std::string>());
        require(s.boundaries[0] + s.boundaries[1] + s.boundaries[2] == s.permutation.size(), ErrorKind::config,
                "split index boundaries do not cover its entries");
        return s;
    }

    void save(const std::filesystem::path& path) const
    {
        std::ofstream f(path);
        require(f.good(), ErrorKind::io, "cannot write " + path.string());
        f << to_json().dump(1) << '\n';
    }

    static SplitIndex load(const std::filesystem::path& path)
    {
        std::ifstream f(path);
        require(f.good(), ErrorKind::io, "cannot read " + path.string());
        return from_json(nlohmann::json::parse(f));
    }
};

/// n_train = floor(r_train n), n_val = floor(r_val n), remainder to test.
inline SplitIndex make_split(std::span<const std::string> ids, SplitRatios ratios, std::uint64_t seed)
{
    require(!ids.empty(), ErrorKind::config, "make_split: empty id list");
    require(ratios.train > 0 && ratios.val > 0 && ratios.test > 0, ErrorKind::config,
            "make_split: ratios must be positive");
    require(std::abs(ratios.train + ratios.val + ratios.test - 1.0) <= 1e-9, ErrorKind::config,
            "make_split: ratios must sum to 1");
    std::unordered_set<std::string> unique(ids.begin(), ids.end());
    require(unique.size() == ids.size(), ErrorKind::config, "make_split: duplicate ids");

    SplitIndex s;
    s.seed = seed;
    s.ratios = ratios;
    s.permutation.assign(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(s.permutation);
    const double n = static_cast<double>(ids.size());
    // the 1e-9 guards against products like 0.7 * 10 = 6.9999999999999991
    s.boundaries[0] = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
    s.boundaries[1] = static_cast<std::size_t>(std::floor(ratios.val * n + 1e-9));
    s.boundaries[2] = ids.size() - s.boundaries[0] - s.boundaries[1];
    return s;
}

/// Records of one split, in split-index order.
inline std::vector<const SampleRecord*> select(const std::vector<SampleRecord>& records, const SplitIndex& index,
                                               Split which)
{
    std::unordered_map<std::string, const SampleRecord*> by_id;
    for (const auto& r : records)
        by_id.emplace(r.id, &r);
    std::vector<const SampleRecord*> out;
    for (const auto& id : index.ids(which)) {
        const auto it = by_id.find(id);
        require(it != by_id.end(), ErrorKind::stale, "split index references unknown sample '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

inline Tensor<float> stack_images(const std::vector<const SampleRecord*>& records)
{
    std::vector<const Tensor<float>*> parts;
    for (const auto* r : records)
        parts.push_back(&r->image);
    return Tensor<float>::concat(parts);
}

inline Tensor<float> stack_masks(const std::vector<const SampleRecord*>& records)
{
    std::vector<const Tensor<float>*> parts;
    for (const auto* r : records)
        parts.push_back(&r->mask);
    return Tensor<float>::concat(parts);
}

} // namespace treenet

#endif // TREENET_DATA_HPP
