#ifndef TREENET_OPTIM_HPP
#define TREENET_OPTIM_HPP

#include <cmath>
#include <vector>

#include "network.hpp"

namespace treenet {

struct AdamWOptions {
    double lr = 1e-3;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// AdamW with decoupled weight decay. Holds moment estimates for the
/// trainable parameters of one or more networks, in registration order.
template <typename T>
class AdamW {
public:
    explicit AdamW(AdamWOptions options) : options_(options) {}

    void add(Network<T>& net)
    {
        for (auto& p : net.parameters())
            if (p.trainable) {
                params_.push_back(&p);
                m_.emplace_back(p.value.size(), 0.0);
                v_.emplace_back(p.value.size(), 0.0);
            }
    }

    void zero_grad()
    {
        for (auto* p : params_)
            p->grad.fill(T(0));
    }

    void step()
    {
        ++t_;
        const double c1 = 1.0 - std::pow(options_.beta1, t_);
        const double c2 = 1.0 - std::pow(options_.beta2, t_);
        const double decay = 1.0 - options_.lr * options_.weight_decay;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& w = params_[i]->value;
            const Tensor<T>& g = params_[i]->grad;
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = g[k];
                m[k] = options_.beta1 * m[k] + (1 - options_.beta1) * gk;
                v[k] = options_.beta2 * v[k] + (1 - options_.beta2) * gk * gk;
                const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + options_.eps);
                w[k] = static_cast<T>(w[k] * decay - options_.lr * update);
            }
        }
    }

    long steps() const { return t_; }

private:
    AdamWOptions options_;
    std::vector<Parameter<T>*> params_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

} // namespace treenet

#endif // TREENET_OPTIM_HPP
