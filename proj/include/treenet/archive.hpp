#ifndef TREENET_ARCHIVE_HPP
#define TREENET_ARCHIVE_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "digest.hpp"
#include "network.hpp"
#include "tensor.hpp"

namespace treenet {

/// Named float32 arrays plus a JSON header. Layout: 8-byte magic, u64
/// header length, header JSON, then the arrays back to back in
/// little-endian order.
struct Archive {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>& at(const std::string& name) const
    {
        for (const auto& [n, t] : tensors)
            if (n == name)
                return t;
        fail(ErrorKind::io, "archive has no tensor '" + name + "'");
    }
};

inline constexpr char kArchiveMagic[8] = {'T', 'N', 'A', 'R', 'C', 'H', '0', '1'};

/// Written to a temporary file and renamed, so readers never observe a
/// partial archive.
inline void save_archive(const std::filesystem::path& path, const Archive& a)
{
    nlohmann::json header;
    header["meta"] = a.meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : a.tensors) {
        const auto& s = t.shape();
        header["tensors"].push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}});
    }
    const std::string text = header.dump();
    const std::uint64_t len = text.size();

    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require(f.good(), ErrorKind::io, "cannot write " + tmp.string());
        f.write(kArchiveMagic, sizeof kArchiveMagic);
        f.write(reinterpret_cast<const char*>(&len), sizeof len);
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, t] : a.tensors)
            f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        require(f.good(), ErrorKind::io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Archive load_archive(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::io, "cannot read " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    f.read(magic, sizeof magic);
    f.read(reinterpret_cast<char*>(&len), sizeof len);
    require(f.good() && std::memcmp(magic, kArchiveMagic, sizeof magic) == 0 && len < (1u << 30), ErrorKind::io,
            path.string() + " is not a treenet archive");
    std::string text(len, '\0');
    f.read(text.data(), static_cast<std::streamsize>(len));
    const auto header = nlohmann::json::parse(text, nullptr, false);
    require(!header.is_discarded(), ErrorKind::io, "corrupt archive header in " + path.string());

    Archive a;
    a.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
        const auto s = entry.at("shape");
        Tensor<float> t(Shape4(s[0].get<int>(), s[1].get<int>(), s[2].get<int>(), s[3].get<int>()));
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        require(f.good(), ErrorKind::io, "truncated archive " + path.string());
        a.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
    return a;
}

/// Digest of a network's graph and every parameter value (running
/// statistics included).
inline std::string weights_hash(const Network<float>& net)
{
    Sha256 h;
    h.update(net.graph().to_json().dump());
    for (const auto& p : net.parameters()) {
        h.update(p.name);
        h.update(p.value.data(), p.value.size() * sizeof(float));
    }
    return h.hex();
}

inline void save_network(const std::filesystem::path& path, const Network<float>& net,
                         nlohmann::json meta = nlohmann::json::object())
{
    Archive a;
    a.meta = std::move(meta);
    a.meta["graph"] = net.graph().to_json();
    a.meta["weights_hash"] = weights_hash(net);
    for (const auto& p : net.parameters())
        a.tensors.emplace_back(p.name, p.value);
    save_archive(path, a);
}

struct LoadedNetwork {
    Network<float> net;
    nlohmann::json meta;
};

inline LoadedNetwork load_network(const std::filesystem::path& path)
{
    Archive a = load_archive(path);
    require(a.meta.contains("graph"), ErrorKind::io, path.string() + " holds no network");
    LoadedNetwork out{Network<float>(LayerGraph::from_json(a.meta.at("graph")), 0), std::move(a.meta)};
    auto& params = out.net.parameters();
    require(params.size() == a.tensors.size(), ErrorKind::io, "parameter count mismatch in " + path.string());
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, value] = a.tensors[i];
        require(name == params[i].name && value.shape() == params[i].value.shape(), ErrorKind::io,
                "parameter '" + name + "' does not match the stored graph in " + path.string());
        params[i].value = std::move(value);
    }
    require(weights_hash(out.net) == out.meta.value("weights_hash", std::string()), ErrorKind::stale,
            "weights in " + path.string() + " do not match their recorded hash");
    return out;
}

/// Copy parameter values between networks with identical layouts (or a
/// prefix-compatible layout when `offset` is given).
inline void copy_parameters(const Network<float>& from, Network<float>& to, std::size_t offset = 0)
{
    const auto& src = from.parameters();
    auto& dst = to.parameters();
    require(offset + src.size() <= dst.size(), ErrorKind::shape, "copy_parameters: destination too small");
    for (std::size_t i = 0; i < src.size(); ++i) {
        require(src[i].value.shape() == dst[offset + i].value.shape(), ErrorKind::shape,
                "copy_parameters: '" + src[i].name + "' vs '" + dst[offset + i].name + "'");
        dst[offset + i].value = src[i].value;
    }
}

} // namespace treenet

#endif // TREENET_ARCHIVE_HPP
