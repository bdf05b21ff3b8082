#ifndef TREENET_TEST_SUPPORT_HPP
#define TREENET_TEST_SUPPORT_HPP

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <unistd.h>
#include <string>

#include <treenet/network.hpp>

namespace treenet::testing {

template <typename T>
Tensor<T> random_tensor(Shape4 shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    Rng rng(seed);
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

inline double relative_error(double analytic, double numeric)
{
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    return std::abs(analytic - numeric) / scale;
}

/// Central difference of a scalar function of one mutable element.
template <typename T>
double central_difference(T& element, double h, const std::function<double()>& f)
{
    const T saved = element;
    element = static_cast<T>(saved + h);
    const double up = f();
    element = static_cast<T>(saved - h);
    const double down = f();
    element = saved;
    return (up - down) / (2 * h);
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("treenet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace treenet::testing

#endif // TREENET_TEST_SUPPORT_HPP
