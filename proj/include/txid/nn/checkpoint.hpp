// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint:
//
//   "TXIDCKPT"                8 bytes magic
//   u32 version (=1)
//   u32 input_length, u32 input_channels
//   u32 n_conv, then n_conv x (u32 channels, u32 kernel, u32 pool)
//   u32 n_dense, then n_dense x u32 width
//   float32 tensors in declaration order (conv w,b per layer, dense w,b per
//   layer), each tensor in column-major element order
//
// All integers and floats little-endian.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "txid/dataset.hpp"
#include "txid/error.hpp"
#include "txid/nn/network.hpp"
#include "txid/nn/train.hpp"

namespace txid::nn {

inline constexpr std::array<char, 8> kCheckpointMagic = {'T', 'X', 'I', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                       static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    os.write(b, 4);
}

class Reader {
public:
    explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}
    std::uint32_t u32() {
        need(4);
        const auto* p = bytes_.data() + pos_;
        pos_ += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    float f32() {
        need(4);
        const float v = io::get_f32_le(bytes_.data() + pos_);
        pos_ += 4;
        return v;
    }
    void magic() {
        need(8);
        for (std::size_t i = 0; i < 8; ++i)
            if (static_cast<char>(bytes_[i]) != kCheckpointMagic[i]) throw Error("not a checkpoint file");
        pos_ = 8;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw Error("truncated checkpoint");
    }
    std::vector<unsigned char> bytes_;
    std::size_t pos_ = 0;
};
} // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Params<float>& p) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_u32(os, kCheckpointVersion);
    const auto& a = p.arch;
    detail::put_u32(os, static_cast<std::uint32_t>(a.input_length));
    detail::put_u32(os, static_cast<std::uint32_t>(a.input_channels));
    detail::put_u32(os, static_cast<std::uint32_t>(a.conv.size()));
    for (const auto& c : a.conv) {
        detail::put_u32(os, static_cast<std::uint32_t>(c.channels));
        detail::put_u32(os, static_cast<std::uint32_t>(c.kernel));
        detail::put_u32(os, static_cast<std::uint32_t>(c.pool));
    }
    detail::put_u32(os, static_cast<std::uint32_t>(a.dense.size()));
    for (auto w : a.dense) detail::put_u32(os, static_cast<std::uint32_t>(w));
    for (auto t : p.tensors())
        for (float v : t) io::put_f32_le(os, v);
    if (!os) throw Error("write failed for " + path.string());
}

inline Params<float> load_checkpoint(const std::filesystem::path& path) {
    detail::Reader r(io::read_file(path));
    r.magic();
    if (r.u32() != kCheckpointVersion) throw Error("unsupported checkpoint version");
    Architecture a;
    a.input_length = r.u32();
    a.input_channels = r.u32();
    a.conv.resize(r.u32());
    for (auto& c : a.conv) {
        c.channels = r.u32();
        c.kernel = r.u32();
        c.pool = r.u32();
    }
    a.dense.resize(r.u32());
    for (auto& w : a.dense) w = r.u32();
    Params<float> p = Params<float>::zeros(a);
    for (auto t : p.tensors())
        for (float& v : t) v = r.f32();
    if (!r.done()) throw Error("trailing bytes in checkpoint");
    return p;
}

/// epoch,train_loss,val_acc with fixed formatting so re-runs are byte-identical.
inline void save_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    os << "epoch,train_loss,val_acc\n";
    char line[96];
    for (const auto& h : history) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", h.epoch, h.train_loss, h.val_acc);
        os << line;
    }
}

} // namespace txid::nn
