#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lmc/curvature.hpp"
#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/network.hpp"
#include "lmc/weights.hpp"

namespace lmc {

// LMCW container, little-endian:
//   magic "LMCW", version u32, layer count u32,
//   per layer: out u32, in u32, rank u32, bias u8, act u8, adapter scale f64,
//   then f64 weights in layout order,
//   then optional sections: tag (4 bytes), f64 count u32, payload.
// Snapshots reuse the container with sections QFAC, HFAC, FDIA, META.

inline constexpr std::uint32_t kLmcwVersion = 1;

namespace detail {

struct LmcwLayerDesc {
    std::uint32_t out = 0, in = 0, rank = 0;
    bool bias = false;
    std::uint8_t act = 0;
    double scale = 1.0;
};

inline void write_lmcw_header(std::ostream& os, const std::vector<LmcwLayerDesc>& layers) {
    os.write("LMCW", 4);
    write_u32(os, kLmcwVersion);
    write_u32(os, static_cast<std::uint32_t>(layers.size()));
    for (const auto& d : layers) {
        write_u32(os, d.out);
        write_u32(os, d.in);
        write_u32(os, d.rank);
        unsigned char bias = d.bias ? 1 : 0;
        os.write(reinterpret_cast<const char*>(&bias), 1);
        os.write(reinterpret_cast<const char*>(&d.act), 1);
        write_f64(os, d.scale);
    }
}

inline std::vector<LmcwLayerDesc> read_lmcw_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "LMCW", 4) != 0) throw IoError("bad magic in " + path);
    std::uint32_t version = read_u32(is);
    if (version != kLmcwVersion) throw IoError("unsupported LMCW version in " + path);
    std::uint32_t count = read_u32(is);
    std::vector<LmcwLayerDesc> layers(count);
    for (auto& d : layers) {
        d.out = read_u32(is);
        d.in = read_u32(is);
        d.rank = read_u32(is);
        unsigned char bias, act;
        is.read(reinterpret_cast<char*>(&bias), 1);
        is.read(reinterpret_cast<char*>(&act), 1);
        if (!is) throw IoError("truncated header in " + path);
        d.bias = bias != 0;
        d.act = act;
        d.scale = read_f64(is);
    }
    return layers;
}

inline void write_section(std::ostream& os, const char tag[4], const Eigen::VectorXd& payload) {
    os.write(tag, 4);
    write_u32(os, static_cast<std::uint32_t>(payload.size()));
    for (Eigen::Index i = 0; i < payload.size(); ++i) write_f64(os, payload(i));
}

struct LmcwSection {
    std::string tag;
    Eigen::VectorXd payload;
};

inline std::vector<LmcwSection> read_sections(std::istream& is, const std::string& path) {
    std::vector<LmcwSection> sections;
    char tag[4];
    while (is.read(tag, 4)) {
        LmcwSection sec;
        sec.tag.assign(tag, 4);
        std::uint32_t count = read_u32(is);
        sec.payload.resize(count);
        for (std::uint32_t i = 0; i < count; ++i) sec.payload(i) = read_f64(is);
        sections.push_back(std::move(sec));
    }
    return sections;
}

}  // namespace detail

inline void save_checkpoint(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    std::vector<detail::LmcwLayerDesc> descs;
    for (const auto& layer : net.layers()) {
        detail::LmcwLayerDesc d;
        d.out = static_cast<std::uint32_t>(layer.out());
        d.in = static_cast<std::uint32_t>(layer.in());
        d.rank = layer.adapter ? static_cast<std::uint32_t>(layer.adapter->rank()) : 0;
        d.bias = layer.has_bias();
        d.act = layer.act == Activation::relu ? 1 : 0;
        d.scale = layer.adapter ? layer.adapter->scale : 1.0;
        descs.push_back(d);
    }
    detail::write_lmcw_header(os, descs);
    WeightVector w = net.flatten();
    for (Eigen::Index i = 0; i < w.size(); ++i) detail::write_f64(os, w.values()(i));
    if (!os) throw IoError("write failed: " + path);
}

inline Network load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    auto descs = detail::read_lmcw_header(is, path);
    std::vector<DenseLayer> layers;
    for (const auto& d : descs) {
        DenseLayer layer;
        layer.W.setZero(d.out, d.in);
        if (d.bias) layer.b = Eigen::VectorXd::Zero(d.out);
        layer.act = d.act == 1 ? Activation::relu : Activation::identity;
        if (d.rank > 0) {
            LoraAdapter ad;
            ad.scale = d.scale;
            ad.A.setZero(d.rank, d.in);
            ad.B.setZero(d.out, d.rank);
            layer.adapter = std::move(ad);
        }
        layers.push_back(std::move(layer));
    }
    Network net(std::move(layers));
    WeightVector w(net.layout());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.values()(i) = detail::read_f64(is);
        if (!is) throw IoError("truncated weights in " + path);
    }
    net.set_weights(w);
    return net;
}

inline void save_snapshot(const CurvatureSnapshot& snap, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    const WeightLayout& layout = snap.anchor.layout();
    std::vector<detail::LmcwLayerDesc> descs;
    for (const auto& blk : layout.layers()) {
        detail::LmcwLayerDesc d;
        d.out = static_cast<std::uint32_t>(blk.out);
        d.in = static_cast<std::uint32_t>(blk.in);
        d.rank = static_cast<std::uint32_t>(blk.rank);
        d.bias = blk.has_bias();
        descs.push_back(d);
    }
    detail::write_lmcw_header(os, descs);
    for (Eigen::Index i = 0; i < snap.anchor.size(); ++i)
        detail::write_f64(os, snap.anchor.values()(i));

    Eigen::Index q_total = 0, h_total = 0;
    for (const auto& f : snap.factors) {
        q_total += f.Q.size();
        h_total += f.H.size();
    }
    Eigen::VectorXd q_flat(q_total), h_flat(h_total);
    Eigen::Index qo = 0, ho = 0;
    for (const auto& f : snap.factors) {
        q_flat.segment(qo, f.Q.size()) = Eigen::Map<const Eigen::VectorXd>(f.Q.data(), f.Q.size());
        h_flat.segment(ho, f.H.size()) = Eigen::Map<const Eigen::VectorXd>(f.H.data(), f.H.size());
        qo += f.Q.size();
        ho += f.H.size();
    }
    detail::write_section(os, "QFAC", q_flat);
    detail::write_section(os, "HFAC", h_flat);
    if (snap.fisher_diag) detail::write_section(os, "FDIA", *snap.fisher_diag);
    Eigen::VectorXd meta(2);
    meta(0) = static_cast<double>(snap.sample_count);
    meta(1) = snap.factors.empty() ? 0.0 : snap.factors.front().damping;
    detail::write_section(os, "META", meta);
    if (!os) throw IoError("write failed: " + path);
}

inline CurvatureSnapshot load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    auto descs = detail::read_lmcw_header(is, path);
    auto layout = std::make_shared<WeightLayout>();
    for (const auto& d : descs) layout->add_layer(d.out, d.in, d.bias, d.rank);

    CurvatureSnapshot snap;
    snap.anchor = WeightVector(layout);
    for (Eigen::Index i = 0; i < snap.anchor.size(); ++i) {
        snap.anchor.values()(i) = detail::read_f64(is);
        if (!is) throw IoError("truncated weights in " + path);
    }
    auto sections = detail::read_sections(is, path);
    const Eigen::VectorXd* q_flat = nullptr;
    const Eigen::VectorXd* h_flat = nullptr;
    for (const auto& sec : sections) {
        if (sec.tag == "QFAC") q_flat = &sec.payload;
        else if (sec.tag == "HFAC") h_flat = &sec.payload;
        else if (sec.tag == "FDIA") snap.fisher_diag = sec.payload;
        else if (sec.tag == "META") {
            if (sec.payload.size() != 2) throw IoError("bad META section in " + path);
            snap.sample_count = static_cast<std::int64_t>(sec.payload(0));
        }
    }
    if (!q_flat || !h_flat) throw IoError("snapshot missing factor sections in " + path);
    double damping = 0.0;
    for (const auto& sec : sections)
        if (sec.tag == "META") damping = sec.payload(1);
    Eigen::Index qo = 0, ho = 0;
    for (const auto& blk : layout->layers()) {
        LayerFactors f;
        f.damping = damping;
        if (qo + blk.in * blk.in > q_flat->size() || ho + blk.out * blk.out > h_flat->size())
            throw IoError("factor sections too short in " + path);
        f.Q = Eigen::Map<const Eigen::MatrixXd>(q_flat->data() + qo, blk.in, blk.in);
        f.H = Eigen::Map<const Eigen::MatrixXd>(h_flat->data() + ho, blk.out, blk.out);
        qo += blk.in * blk.in;
        ho += blk.out * blk.out;
        snap.factors.push_back(std::move(f));
    }
    if (qo != q_flat->size() || ho != h_flat->size())
        throw IoError("factor sections size mismatch in " + path);
    return snap;
}

}  // namespace lmc
