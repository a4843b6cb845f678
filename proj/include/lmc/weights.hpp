#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "lmc/errors.hpp"

namespace lmc {

/// Offsets of one layer's parameter blocks inside the flat vector.
/// Matrices are stored column-major, so a block is exactly vec(M) under
/// the column-stacking convention used by the curvature code.
struct LayerBlocks {
    Eigen::Index out = 0;
    Eigen::Index in = 0;
    Eigen::Index rank = 0;            // 0 when no adapter
    std::ptrdiff_t w_offset = -1;     // out x in
    std::ptrdiff_t bias_offset = -1;  // out, -1 when absent
    std::ptrdiff_t a_offset = -1;     // rank x in
    std::ptrdiff_t b_offset = -1;     // out x rank

    bool has_bias() const { return bias_offset >= 0; }
    bool has_adapter() const { return rank > 0; }
    bool operator==(const LayerBlocks&) const = default;
};

class WeightLayout {
  public:
    Eigen::Index add_layer(Eigen::Index out, Eigen::Index in, bool bias, Eigen::Index rank) {
        LayerBlocks blk;
        blk.out = out;
        blk.in = in;
        blk.rank = rank;
        blk.w_offset = total_;
        total_ += out * in;
        if (bias) {
            blk.bias_offset = total_;
            total_ += out;
        }
        if (rank > 0) {
            blk.a_offset = total_;
            total_ += rank * in;
            blk.b_offset = total_;
            total_ += out * rank;
        }
        layers_.push_back(blk);
        return static_cast<Eigen::Index>(layers_.size()) - 1;
    }

    Eigen::Index total_size() const { return total_; }
    std::size_t layer_count() const { return layers_.size(); }
    const LayerBlocks& layer(std::size_t m) const { return layers_[m]; }
    const std::vector<LayerBlocks>& layers() const { return layers_; }

    bool operator==(const WeightLayout& other) const {
        return total_ == other.total_ && layers_ == other.layers_;
    }

  private:
    std::vector<LayerBlocks> layers_;
    Eigen::Index total_ = 0;
};

/// Flat view of every network parameter, with layout-checked algebra.
class WeightVector {
  public:
    WeightVector() = default;
    explicit WeightVector(std::shared_ptr<const WeightLayout> layout)
        : layout_(std::move(layout)),
          values_(Eigen::VectorXd::Zero(layout_->total_size())) {}
    WeightVector(std::shared_ptr<const WeightLayout> layout, Eigen::VectorXd values)
        : layout_(std::move(layout)), values_(std::move(values)) {
        if (values_.size() != layout_->total_size())
            throw ContractError("WeightVector: value count does not match layout");
    }

    const Eigen::VectorXd& values() const { return values_; }
    Eigen::VectorXd& values() { return values_; }
    Eigen::Index size() const { return values_.size(); }
    const WeightLayout& layout() const { return *layout_; }
    std::shared_ptr<const WeightLayout> layout_ptr() const { return layout_; }

    bool same_layout(const WeightVector& other) const {
        return layout_ == other.layout_ ||
               (layout_ && other.layout_ && *layout_ == *other.layout_);
    }

    /// Column-major map over layer m's weight matrix block.
    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t m) const {
        const auto& blk = layout_->layer(m);
        return {values_.data() + blk.w_offset, blk.out, blk.in};
    }
    Eigen::Map<Eigen::MatrixXd> weight(std::size_t m) {
        const auto& blk = layout_->layer(m);
        return {values_.data() + blk.w_offset, blk.out, blk.in};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t m) const {
        const auto& blk = layout_->layer(m);
        return {values_.data() + blk.bias_offset, blk.out};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t m) {
        const auto& blk = layout_->layer(m);
        return {values_.data() + blk.bias_offset, blk.out};
    }
    Eigen::Map<const Eigen::MatrixXd> adapter_a(std::size_t m) const {
        const auto& blk = layout_->layer(m);
        return {values_.data() + blk.a_offset, blk.rank, blk.in};
    }
    Eigen::Map<Eigen::MatrixXd> adapter_a(std::size_t m) {
        const auto& blk = layout_->layer(m);
        return {values_.data() + blk.a_offset, blk.rank, blk.in};
    }
    Eigen::Map<const Eigen::MatrixXd> adapter_b(std::size_t m) const {
        const auto& blk = layout_->layer(m);
        return {values_.data() + blk.b_offset, blk.out, blk.rank};
    }
    Eigen::Map<Eigen::MatrixXd> adapter_b(std::size_t m) {
        const auto& blk = layout_->layer(m);
        return {values_.data() + blk.b_offset, blk.out, blk.rank};
    }

    WeightVector& operator+=(const WeightVector& rhs) {
        check(rhs);
        values_ += rhs.values_;
        return *this;
    }
    WeightVector& operator-=(const WeightVector& rhs) {
        check(rhs);
        values_ -= rhs.values_;
        return *this;
    }
    WeightVector& operator*=(double s) {
        values_ *= s;
        return *this;
    }

    friend WeightVector operator+(WeightVector a, const WeightVector& b) { return a += b; }
    friend WeightVector operator-(WeightVector a, const WeightVector& b) { return a -= b; }
    friend WeightVector operator*(WeightVector a, double s) { return a *= s; }
    friend WeightVector operator*(double s, WeightVector a) { return a *= s; }

    double dot(const WeightVector& other) const {
        check(other);
        return values_.dot(other.values_);
    }
    double norm() const { return values_.norm(); }
    double squared_norm() const { return values_.squaredNorm(); }

    bool operator==(const WeightVector& other) const {
        return same_layout(other) && values_ == other.values_;
    }

  private:
    void check(const WeightVector& other) const {
        if (!same_layout(other))
            throw ContractError("WeightVector: layout mismatch");
    }

    std::shared_ptr<const WeightLayout> layout_;
    Eigen::VectorXd values_;
};

}  // namespace lmc
