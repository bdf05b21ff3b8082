#ifndef TREENET_TRAINING_HPP
#define TREENET_TRAINING_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "archive.hpp"
#include "network.hpp"
#include "rng.hpp"

namespace treenet {

struct TrainOptions {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int batch = 8;
    int epochs = 100;
    std::uint64_t seed = 42;

    void validate(const char* phase) const
    {
        const std::string p(phase);
        require(lr > 0 && std::isfinite(lr), ErrorKind::config, p + ": learning rate must be positive");
        require(weight_decay >= 0, ErrorKind::config, p + ": weight decay must be >= 0");
        require(batch >= 1, ErrorKind::config, p + ": batch must be >= 1");
        require(epochs >= 1, ErrorKind::config, p + ": epochs must be >= 1");
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = std::numeric_limits<double>::quiet_NaN(); // NaN without validation data

    nlohmann::json to_json() const
    {
        nlohmann::json j{{"epoch", epoch}, {"train_loss", train_loss}};
        j["val_loss"] = std::isnan(val_loss) ? nlohmann::json(nullptr) : nlohmann::json(val_loss);
        return j;
    }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batches of [0, n); the last batch may be short.
inline std::vector<std::vector<int>> epoch_batches(int n, int batch, Rng& rng)
{
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int>> out;
    for (int i = 0; i < n; i += batch)
        out.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch));
    return out;
}

/// Tracks the best epoch by validation loss (training loss when no
/// validation data) and keeps a snapshot of the corresponding weights.
class BestSnapshot {
public:
    bool offer(const EpochRecord& r, std::initializer_list<const Network<float>*> nets)
    {
        const double score = std::isnan(r.val_loss) ? r.train_loss : r.val_loss;
        if (!(score < best_score_))
            return false;
        best_score_ = score;
        best_epoch_ = r.epoch;
        weights_.clear();
        for (const auto* n : nets) {
            auto& values = weights_.emplace_back();
            for (const auto& p : n->parameters())
                values.push_back(p.value);
        }
        return true;
    }

    void restore(std::initializer_list<Network<float>*> nets) const
    {
        std::size_t i = 0;
        for (auto* n : nets) {
            if (i >= weights_.size())
                break;
            auto& params = n->parameters();
            for (std::size_t k = 0; k < params.size(); ++k)
                params[k].value = weights_[i][k];
            ++i;
        }
    }

    int best_epoch() const { return best_epoch_; }

private:
    double best_score_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
    std::vector<std::vector<Tensor<float>>> weights_;
};

inline void check_finite_loss(double loss, const char* phase, int epoch)
{
    require(std::isfinite(loss), ErrorKind::numeric,
            std::string(phase) + ": non-finite loss at epoch " + std::to_string(epoch));
}

} // namespace treenet

#endif // TREENET_TRAINING_HPP
