#ifndef TREENET_ASSEMBLY_HPP
#define TREENET_ASSEMBLY_HPP

#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "archive.hpp"
#include "autoencoder.hpp"
#include "data.hpp"
#include "losses.hpp"

namespace treenet {

/// Encoder half of the input autoencoder, the bridge, and the decoder half
/// of the label autoencoder fused into one inference network.
class AssembledTreeNet {
public:
    AssembledTreeNet() = default;

    AssembledTreeNet(const Autoencoder& enc, const Network<float>& bridge, const Autoencoder& dec,
                     std::array<std::string, 3> provenance = {})
        : shapes_(enc.spec.shape), provenance_(std::move(provenance))
    {
        require(enc.spec.kind == AutoencoderKind::input_encoder && dec.spec.kind == AutoencoderKind::label_decoder,
                ErrorKind::config, "assemble: expects (input encoder, bridge, label decoder)");
        LayerGraph eg = enc.encoder_half.graph();
        LayerGraph bg = bridge.graph();
        LayerGraph dg = dec.decoder_half.graph();
        eg.set_name("encoder_half");
        bg.set_name("bridge");
        dg.set_name("decoder_half");
        net_ = Network<float>(LayerGraph::chain(LayerGraph::chain(eg, bg, "treenet"), dg, "treenet"), 0);
        parts_ = {enc.encoder_half.parameter_count(), bridge.parameter_count(), dec.decoder_half.parameter_count()};
        copy_parameters(enc.encoder_half, net_, 0);
        copy_parameters(bridge, net_, enc.encoder_half.parameters().size());
        copy_parameters(dec.decoder_half, net_, enc.encoder_half.parameters().size() + bridge.parameters().size());
    }

    /// Continuous masks in [0, 1] for a batch of 3xNxN images.
    Tensor<float> predict(const Tensor<float>& images) const
    {
        const TensorShape want{3, shapes_.N, shapes_.N};
        require(images.shape().sample() == want, ErrorKind::shape,
                "predict expects " + want.str() + " images, got " + images.shape().sample().str());
        return net_.infer(images);
    }

    const Network<float>& network() const { return net_; }
    const LayerGraph& graph() const { return net_.graph(); }
    const ShapeSpec& shapes() const { return shapes_; }
    std::size_t parameter_count() const { return net_.parameter_count(); }

    /// Parameters of the encoder half, bridge and decoder half.
    const std::array<std::size_t, 3>& part_parameters() const { return parts_; }
    const std::array<std::string, 3>& provenance() const { return provenance_; }

private:
    ShapeSpec shapes_;
    Network<float> net_;
    std::array<std::size_t, 3> parts_{};
    std::array<std::string, 3> provenance_;
};

inline AssembledTreeNet assemble(const Autoencoder& enc, const Network<float>& bridge, const Autoencoder& dec,
                                 std::array<std::string, 3> provenance = {})
{
    return AssembledTreeNet(enc, bridge, dec, std::move(provenance));
}

// ------------------------------------------------------------- evaluation

struct MetricRow {
    std::string id;
    double dice = 0;
    double iou = 0;
    double acc = 0;
};

struct MetricsReport {
    std::string model;
    std::string dataset;
    double threshold = 0.5;
    std::vector<MetricRow> rows;

    double mean_dice() const { return mean(&MetricRow::dice); }
    double mean_iou() const { return mean(&MetricRow::iou); }
    double mean_acc() const { return mean(&MetricRow::acc); }

    bool operator==(const MetricsReport& o) const
    {
        if (model != o.model || dataset != o.dataset || rows.size() != o.rows.size())
            return false;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].id != o.rows[i].id || rows[i].dice != o.rows[i].dice || rows[i].iou != o.rows[i].iou ||
                rows[i].acc != o.rows[i].acc)
                return false;
        return true;
    }

    /// One record per image, then one summary record.
    std::vector<nlohmann::json> to_records() const
    {
        std::vector<nlohmann::json> out;
        for (const auto& r : rows)
            out.push_back({{"type", "image"},
                           {"model", model},
                           {"dataset", dataset},
                           {"id", r.id},
                           {"dice", r.dice},
                           {"iou", r.iou},
                           {"acc", r.acc}});
        out.push_back({{"type", "summary"},
                       {"model", model},
                       {"dataset", dataset},
                       {"threshold", threshold},
                       {"count", rows.size()},
                       {"dice", mean_dice()},
                       {"iou", mean_iou()},
                       {"acc", mean_acc()}});
        return out;
    }

    /// Rebuilds reports from "image" records, grouped by (model, dataset)
    /// in order of first appearance.
    static std::vector<MetricsReport> from_records(const std::vector<nlohmann::json>& records)
    {
        std::vector<MetricsReport> out;
        for (const auto& j : records) {
            if (j.value("type", "") != "image")
                continue;
            const auto model = j.at("model").get<std::string>();
            const auto dataset = j.at("dataset").get<std::string>();
            auto it = std::find_if(out.begin(), out.end(),
                                   [&](const MetricsReport& r) { return r.model == model && r.dataset == dataset; });
            if (it == out.end()) {
                out.push_back({model, dataset, 0.5, {}});
                it = out.end() - 1;
            }
            it->rows.push_back({j.at("id").get<std::string>(), j.at("dice").get<double>(), j.at("iou").get<double>(),
                                j.at("acc").get<double>()});
        }
        return out;
    }

private:
    double mean(double MetricRow::*field) const
    {
        double s = 0;
        for (const auto& r : rows)
            s += r.*field;
        return rows.empty() ? 0.0 : s / double(rows.size());
    }
};

using Predictor = std::function<Tensor<float>(const Tensor<float>&)>;

/// Per-image Dice/IoU/accuracy of `predict` over `records`. Means are taken
/// over images.
inline MetricsReport evaluate(const std::string& model, const std::string& dataset, const Predictor& predict,
                              const std::vector<const SampleRecord*>& records, double threshold = 0.5, int batch = 8)
{
    require(!records.empty(), ErrorKind::config, "evaluate: empty split for " + model);
    require(batch >= 1, ErrorKind::config, "evaluate: batch must be >= 1");
    MetricsReport report{model, dataset, threshold, {}};
    for (std::size_t i = 0; i < records.size(); i += std::size_t(batch)) {
        const std::vector<const SampleRecord*> part(records.begin() + long(i),
                                                    records.begin() + long(std::min(records.size(), i + batch)));
        const Tensor<float> pred = predict(stack_images(part));
        for (std::size_t k = 0; k < part.size(); ++k) {
            const auto c = confusion(pred.slice(int(k), 1), part[k]->mask, threshold);
            report.rows.push_back({part[k]->id, dice(c), iou(c), accuracy(c)});
        }
    }
    return report;
}

inline MetricsReport evaluate(const AssembledTreeNet& model, const std::vector<const SampleRecord*>& records,
                              double threshold = 0.5, const std::string& name = "Tree-NET",
                              const std::string& dataset = "test", int batch = 8)
{
    return evaluate(name, dataset, [&](const Tensor<float>& x) { return model.predict(x); }, records, threshold,
                    batch);
}

/// Model rows against per-dataset Dice / IoU / Acc columns.
inline std::string render_metrics_table(const std::vector<MetricsReport>& reports)
{
    std::vector<std::string> models, datasets;
    std::map<std::pair<std::string, std::string>, const MetricsReport*> cell;
    for (const auto& r : reports) {
        if (std::find(models.begin(), models.end(), r.model) == models.end())
            models.push_back(r.model);
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
            datasets.push_back(r.dataset);
        cell[{r.model, r.dataset}] = &r;
    }
    std::size_t width = 5;
    for (const auto& m : models)
        width = std::max(width, m.size());
    std::ostringstream out;
    out << std::left << std::setw(int(width)) << "Model";
    for (const auto& d : datasets)
        out << " | " << std::setw(26) << d;
    out << '\n' << std::setw(int(width)) << "";
    for (std::size_t i = 0; i < datasets.size(); ++i)
        out << " | " << std::setw(8) << "Dice" << ' ' << std::setw(8) << "IoU" << ' ' << std::setw(8) << "Acc";
    out << '\n' << std::string(width + datasets.size() * 29, '-') << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& m : models) {
        out << std::setw(int(width)) << m;
        for (const auto& d : datasets) {
            const auto it = cell.find({m, d});
            if (it == cell.end())
                out << " | " << std::setw(26) << "-";
            else
                out << " | " << std::setw(8) << it->second->mean_dice() << ' ' << std::setw(8)
                    << it->second->mean_iou() << ' ' << std::setw(8) << it->second->mean_acc();
        }
        out << '\n';
    }
    return out.str();
}

} // namespace treenet

#endif // TREENET_ASSEMBLY_HPP
