#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypercl/error.hpp"
#include "hypercl/model.hpp"

// Checkpoint layout:
//   bytes 0..7   magic "HYPERCL1"
//   bytes 8..15  header length N, uint64 little-endian
//   next N bytes JSON header: mode, nh, nk, dropout_p, use_bias, tau_kgc, learn_tau and a tensor
//                manifest [{name, shape, offset}] with offsets relative to the payload start
//   payload      float32 little-endian values, tensors back to back in manifest order

namespace hypercl {

inline constexpr std::array<char, 8> kCheckpointMagic = {'H', 'Y', 'P', 'E', 'R', 'C', 'L', '1'};

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64_le(std::istream& is) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = is.get();
        if (c == EOF) throw FormatError("checkpoint: truncated header length");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

inline void put_f32_le(std::ostream& os, float f) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline float get_f32_le(std::istream& is) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        const int c = is.get();
        if (c == EOF) throw FormatError("checkpoint: truncated payload");
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return std::bit_cast<float>(bits);
}

}  // namespace detail

inline void save_checkpoint(const Model& model, std::ostream& os) {
    Model copy = model;
    auto tensors = copy.net.tensors();
    nlohmann::json header;
    header["mode"] = std::string(to_string(model.net.mode));
    header["nh"] = model.net.nh;
    header["nk"] = model.net.nk;
    header["dropout_p"] = model.net.dropout_p;
    header["use_bias"] = model.net.use_bias;
    header["tau_kgc"] = model.tau_kgc;
    header["learn_tau"] = model.learn_tau;
    auto& manifest = header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
        manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.data.size() * sizeof(float);
    }
    const std::string text = header.dump();
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_u64_le(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors) {
        for (double x : t.data) detail::put_f32_le(os, static_cast<float>(x));
    }
    if (!os) throw FormatError("checkpoint: write failed");
}

inline void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("checkpoint: cannot open for writing: " + path);
    save_checkpoint(model, os);
}

inline Model load_checkpoint(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (is.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kCheckpointMagic) {
        throw FormatError("checkpoint: bad magic (expected HYPERCL1)");
    }
    const std::uint64_t len = detail::get_u64_le(is);
    if (len > (1ULL << 30)) throw FormatError("checkpoint: implausible header length");
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (is.gcount() != static_cast<std::streamsize>(len)) throw FormatError("checkpoint: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad header JSON: ") + e.what());
    }

    Model model;
    try {
        const auto mode = parse_hyper_mode(header.at("mode").get<std::string>());
        const auto nh = header.at("nh").get<std::size_t>();
        const auto nk = header.at("nk").get<std::size_t>();
        InitOptions opts;
        opts.use_bias = header.value("use_bias", true);
        opts.dropout_p = header.value("dropout_p", 0.0);
        model.net = init_params(mode, nh, mode == HyperMode::lowrank ? nk : 0, 0, opts);
        model.net.dropout_p = opts.dropout_p;
        model.tau_kgc = header.value("tau_kgc", 0.05);
        model.learn_tau = header.value("learn_tau", false);

        auto tensors = model.net.tensors();
        const auto& manifest = header.at("tensors");
        if (manifest.size() != tensors.size()) throw FormatError("checkpoint: tensor manifest size mismatch");
        std::uint64_t expected_offset = 0;
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            const auto& entry = manifest[k];
            if (entry.at("name").get<std::string>() != tensors[k].name ||
                entry.at("shape").get<std::vector<std::size_t>>() != tensors[k].shape ||
                entry.at("offset").get<std::uint64_t>() != expected_offset) {
                throw FormatError("checkpoint: manifest entry " + std::to_string(k) + " does not match mode " +
                                  std::string(to_string(mode)));
            }
            for (double& x : tensors[k].data) x = static_cast<double>(detail::get_f32_le(is));
            expected_offset += tensors[k].data.size() * sizeof(float);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad header field: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return model;
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open " + path);
    return load_checkpoint(is);
}

}  // namespace hypercl
