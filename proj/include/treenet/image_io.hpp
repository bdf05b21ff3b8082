#ifndef TREENET_IMAGE_IO_HPP
#define TREENET_IMAGE_IO_HPP

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "data.hpp"

namespace treenet {

namespace fs = std::filesystem;

struct IngestResult {
    std::vector<SampleRecord> records;
    std::optional<SplitIndex> presplit; // set for <root>/{train,val,test}/ layouts
};

namespace detail {

inline bool is_image_file(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff" || ext == ".bmp";
}

/// stem -> path, sorted by stem.
inline std::map<std::string, fs::path> list_images(const fs::path& dir)
{
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir))
        return out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path()))
            out.emplace(entry.path().stem().string(), entry.path());
    return out;
}

inline cv::Mat read_or_throw(const fs::path& path, int flags)
{
    cv::Mat m = cv::imread(path.string(), flags);
    require(!m.empty(), ErrorKind::io, "unreadable image file " + path.string());
    if (m.depth() != CV_8U)
        m.convertTo(m, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 255.0);
    return m;
}

inline SampleRecord load_pair(const std::string& id, const fs::path& image_path, const fs::path& mask_path, int size)
{
    const cv::Mat img = read_or_throw(image_path, cv::IMREAD_COLOR);
    const cv::Mat msk = read_or_throw(mask_path, cv::IMREAD_GRAYSCALE);
    require(img.rows == msk.rows && img.cols == msk.cols, ErrorKind::shape,
            id + ": image and mask sizes differ (" + image_path.string() + ")");
    Tensor<float> image(Shape4(1, 3, img.rows, img.cols));
    Tensor<float> mask(Shape4(1, 1, msk.rows, msk.cols));
    const std::size_t plane = static_cast<std::size_t>(img.rows) * img.cols;
    for (int y = 0; y < img.rows; ++y) {
        const auto* row = img.ptr<cv::Vec3b>(y);
        const auto* mrow = msk.ptr<unsigned char>(y);
        for (int x = 0; x < img.cols; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * img.cols + x;
            for (int c = 0; c < 3; ++c)
                image[c * plane + k] = row[x][2 - c] / 255.f; // BGR -> RGB
            mask[k] = mrow[x] / 255.f >= 0.5f ? 1.f : 0.f;
        }
    }
    return {id, resize_bilinear(image, size), resize_bilinear(mask, size, true)};
}

inline std::vector<SampleRecord> ingest_flat(const fs::path& root, int size)
{
    const auto images = list_images(root / "images");
    const auto masks = list_images(root / "masks");
    std::vector<std::string> unpaired;
    for (const auto& [stem, _] : images)
        if (!masks.count(stem))
            unpaired.push_back(stem);
    for (const auto& [stem, _] : masks)
        if (!images.count(stem))
            unpaired.push_back(stem);
    if (!unpaired.empty()) {
        std::string list;
        for (const auto& s : unpaired)
            list += (list.empty() ? "" : ", ") + s;
        fail(ErrorKind::io, "unpaired samples in " + root.string() + ": " + list);
    }
    std::vector<SampleRecord> out;
    for (const auto& [stem, path] : images)
        out.push_back(load_pair(stem, path, masks.at(stem), size));
    return out;
}

} // namespace detail

/// Load paired image/mask files, resized to size x size and normalized to
/// [0, 1]. Records come back in lexicographic stem order (per split for
/// pre-split layouts: train, then val, then test).
inline IngestResult ingest_directory(const fs::path& root, int size, std::uint64_t seed = 42)
{
    require(size >= 1, ErrorKind::config, "ingest_directory: target size must be >= 1");
    require(fs::is_directory(root), ErrorKind::io, "dataset directory not found: " + root.string());
    IngestResult result;
    if (fs::is_directory(root / "train")) {
        SplitIndex index;
        index.seed = seed;
        const std::array<Split, 3> order{Split::train, Split::val, Split::test};
        for (std::size_t s = 0; s < order.size(); ++s) {
            auto part = detail::ingest_flat(root / to_string(order[s]), size);
            index.boundaries[s] = part.size();
            for (auto& r : part) {
                index.permutation.push_back(r.id);
                result.records.push_back(std::move(r));
            }
        }
        const double n = static_cast<double>(result.records.size());
        if (n > 0)
            index.ratios = {index.boundaries[0] / n, index.boundaries[1] / n, index.boundaries[2] / n};
        result.presplit = std::move(index);
    } else {
        result.records = detail::ingest_flat(root, size);
    }
    require(!result.records.empty(), ErrorKind::io, "no samples found in " + root.string());
    for (const auto& r : result.records)
        check_record(r);
    return result;
}

} // namespace treenet

#endif // TREENET_IMAGE_IO_HPP
