#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lmc/errors.hpp"
#include "lmc/format.hpp"

namespace lmc {

enum class Representation { vector, raster16 };

inline std::string to_string(Representation r) {
    return r == Representation::vector ? "vector" : "raster16";
}

inline Representation representation_from_string(const std::string& s) {
    if (s == "vector") return Representation::vector;
    if (s == "raster16") return Representation::raster16;
    throw ConfigError("unknown representation: " + s);
}

/// One column per sample; labels in {0,1}.
struct Batch {
    Eigen::MatrixXd inputs;  // dim x n
    Eigen::VectorXd labels;  // n

    Eigen::Index size() const { return inputs.cols(); }
    Eigen::Index dim() const { return inputs.rows(); }

    Batch select(const std::vector<Eigen::Index>& idx) const {
        Batch out;
        out.inputs.resize(dim(), static_cast<Eigen::Index>(idx.size()));
        out.labels.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out.inputs.col(static_cast<Eigen::Index>(k)) = inputs.col(idx[k]);
            out.labels(static_cast<Eigen::Index>(k)) = labels(idx[k]);
        }
        return out;
    }

    void append(const Batch& other) {
        if (size() == 0) {
            *this = other;
            return;
        }
        if (other.size() == 0) return;
        if (other.dim() != dim()) throw ContractError("Batch::append: dim mismatch");
        Eigen::Index n0 = size();
        inputs.conservativeResize(Eigen::NoChange, n0 + other.size());
        inputs.rightCols(other.size()) = other.inputs;
        labels.conservativeResize(n0 + other.size());
        labels.tail(other.size()) = other.labels;
    }
};

/// Descriptor of the generator that synthesized a task (kept for reporting).
struct DriftMeta {
    double angle_deg = 0.0;
    double warp_freq = 0.0;
    std::string family;
};

struct TaskDataset {
    int id = 0;
    Batch train;
    Batch test;
    DriftMeta meta;
};

// ---- CLDS binary format -------------------------------------------------
// little-endian: magic "CLDS", version u32, n u32, dim u32,
// then per sample: label u8, features f32 x dim.

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of file reading u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
    std::uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u32(os, static_cast<std::uint32_t>(bits & 0xffffffffu));
    write_u32(os, static_cast<std::uint32_t>(bits >> 32));
}

inline double read_f64(std::istream& is) {
    std::uint64_t lo = read_u32(is);
    std::uint64_t hi = read_u32(is);
    std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline constexpr std::uint32_t kCldsVersion = 1;

inline void save_clds(const Batch& batch, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write("CLDS", 4);
    detail::write_u32(os, kCldsVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(batch.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(batch.dim()));
    for (Eigen::Index j = 0; j < batch.size(); ++j) {
        unsigned char label = batch.labels(j) > 0.5 ? 1 : 0;
        os.write(reinterpret_cast<const char*>(&label), 1);
        for (Eigen::Index i = 0; i < batch.dim(); ++i)
            detail::write_f32(os, static_cast<float>(batch.inputs(i, j)));
    }
    if (!os) throw IoError("write failed: " + path);
}

inline Batch load_clds(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CLDS", 4) != 0)
        throw IoError("bad magic in " + path);
    std::uint32_t version = detail::read_u32(is);
    if (version != kCldsVersion)
        throw IoError("unsupported CLDS version in " + path);
    std::uint32_t n = detail::read_u32(is);
    std::uint32_t dim = detail::read_u32(is);
    Batch batch;
    batch.inputs.resize(dim, n);
    batch.labels.resize(n);
    for (std::uint32_t j = 0; j < n; ++j) {
        unsigned char label;
        is.read(reinterpret_cast<char*>(&label), 1);
        if (!is) throw IoError("unexpected end of file in " + path);
        if (label > 1) throw IoError("label out of range in " + path);
        batch.labels(j) = label;
        for (std::uint32_t i = 0; i < dim; ++i)
            batch.inputs(i, j) = detail::read_f32(is);
    }
    return batch;
}

// ---- CSV format ----------------------------------------------------------
// header `label,f0,...,f{dim-1}`, one sample per row, %.9g floats. Features
// are f32-valued like CLDS, and nine significant digits pin down any f32
// uniquely, so the loader parses cells through float to round-trip exactly.

inline void save_csv(const Batch& batch, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "label";
    for (Eigen::Index i = 0; i < batch.dim(); ++i) os << ",f" << i;
    os << "\n";
    for (Eigen::Index j = 0; j < batch.size(); ++j) {
        os << (batch.labels(j) > 0.5 ? 1 : 0);
        for (Eigen::Index i = 0; i < batch.dim(); ++i) os << "," << g9(batch.inputs(i, j));
        os << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

inline Batch load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty csv: " + path);
    if (line.rfind("label", 0) != 0) throw IoError("bad csv header in " + path);
    Eigen::Index dim = -1;
    std::vector<double> labels;
    std::vector<double> features;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(static_cast<double>(std::stof(cell)));
        if (row.empty()) continue;
        if (dim < 0) dim = static_cast<Eigen::Index>(row.size()) - 1;
        if (static_cast<Eigen::Index>(row.size()) != dim + 1)
            throw IoError("ragged csv row in " + path);
        if (row[0] != 0.0 && row[0] != 1.0) throw IoError("label out of range in " + path);
        labels.push_back(row[0]);
        features.insert(features.end(), row.begin() + 1, row.end());
    }
    Batch batch;
    Eigen::Index n = static_cast<Eigen::Index>(labels.size());
    if (n == 0) throw IoError("csv has no samples: " + path);
    batch.inputs.resize(dim, n);
    batch.labels.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        batch.labels(j) = labels[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < dim; ++i)
            batch.inputs(i, j) = features[static_cast<std::size_t>(j * dim + i)];
    }
    return batch;
}

inline void save_dataset(const Batch& batch, const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
        save_csv(batch, path);
    else
        save_clds(batch, path);
}

inline Batch load_dataset(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
        return load_csv(path);
    return load_clds(path);
}

}  // namespace lmc
