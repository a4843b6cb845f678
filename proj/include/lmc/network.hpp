#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/loss.hpp"
#include "lmc/rng.hpp"
#include "lmc/weights.hpp"

namespace lmc {

enum class Activation { identity, relu };

inline std::string to_string(Activation a) {
    return a == Activation::identity ? "identity" : "relu";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation: " + s);
}

inline double act_apply(Activation a, double h) {
    return a == Activation::relu ? std::max(h, 0.0) : h;
}

/// Derivative at the pre-activation; relu uses f'(0) = 0.
inline double act_deriv(Activation a, double h) {
    return a == Activation::relu ? (h > 0.0 ? 1.0 : 0.0) : 1.0;
}

struct LoraAdapter {
    Eigen::MatrixXd A;  // rank x in
    Eigen::MatrixXd B;  // out x rank, zero at construction
    double scale = 1.0;

    Eigen::Index rank() const { return A.rows(); }
};

struct DenseLayer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;  // empty when the layer has no bias
    Activation act = Activation::identity;
    std::optional<LoraAdapter> adapter;

    Eigen::Index out() const { return W.rows(); }
    Eigen::Index in() const { return W.cols(); }
    bool has_bias() const { return b.size() > 0; }

    Eigen::MatrixXd effective_weight() const {
        if (adapter) return W + adapter->scale * adapter->B * adapter->A;
        return W;
    }
};

/// Returns an adapter-free layer with W' = W + scale * B * A.
inline DenseLayer lora_merge(const DenseLayer& layer) {
    if (!layer.adapter) throw ContractError("lora_merge: layer has no adapter");
    DenseLayer merged = layer;
    merged.W = layer.effective_weight();
    merged.adapter.reset();
    return merged;
}

struct ForwardTrace {
    std::vector<Eigen::MatrixXd> a;  // a[0] = inputs, a[m] = layer m activation output
    std::vector<Eigen::MatrixXd> h;  // h[m] = layer m+1 pre-activation

    const Eigen::MatrixXd& logits() const { return h.back(); }
};

class Network {
  public:
    Network() = default;
    explicit Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {}

    /// Fully connected net with given dims; hidden layers relu, output identity.
    static Network mlp(const std::vector<Eigen::Index>& dims, bool bias, Rng& rng) {
        if (dims.size() < 2) throw ConfigError("mlp needs at least two dims");
        std::vector<DenseLayer> layers;
        for (std::size_t m = 0; m + 1 < dims.size(); ++m) {
            DenseLayer layer;
            Eigen::Index in = dims[m], out = dims[m + 1];
            bool last = (m + 2 == dims.size());
            layer.act = last ? Activation::identity : Activation::relu;
            double std_dev = std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(in));
            layer.W.resize(out, in);
            for (Eigen::Index j = 0; j < in; ++j)
                for (Eigen::Index i = 0; i < out; ++i) layer.W(i, j) = rng.normal(0.0, std_dev);
            if (bias) layer.b = Eigen::VectorXd::Zero(out);
            layers.push_back(std::move(layer));
        }
        return Network(std::move(layers));
    }

    std::size_t layer_count() const { return layers_.size(); }
    const DenseLayer& layer(std::size_t m) const { return layers_[m]; }
    DenseLayer& layer(std::size_t m) {
        layout_.reset();  // caller may change structure
        return layers_[m];
    }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    Eigen::Index input_dim() const { return layers_.front().in(); }
    Eigen::Index output_dim() const { return layers_.back().out(); }

    /// Attach a fresh zero-B adapter; forward outputs are unchanged until B trains.
    void attach_adapter(std::size_t m, Eigen::Index rank, double scale, Rng& rng) {
        DenseLayer& layer = layers_[m];
        if (layer.adapter) throw ContractError("attach_adapter: adapter already present");
        if (rank <= 0 || rank >= std::min(layer.in(), layer.out()))
            throw ConfigError("adapter rank must satisfy 0 < r < min(in, out)");
        LoraAdapter ad;
        ad.scale = scale;
        ad.A.resize(rank, layer.in());
        double std_dev = 1.0 / std::sqrt(static_cast<double>(layer.in()));
        for (Eigen::Index j = 0; j < layer.in(); ++j)
            for (Eigen::Index i = 0; i < rank; ++i) ad.A(i, j) = rng.normal(0.0, std_dev);
        ad.B = Eigen::MatrixXd::Zero(layer.out(), rank);
        layer.adapter = std::move(ad);
        layout_.reset();
    }

    void merge_adapters() {
        for (auto& layer : layers_)
            if (layer.adapter) layer = lora_merge(layer);
        layout_.reset();
    }

    bool has_adapters() const {
        for (const auto& layer : layers_)
            if (layer.adapter) return true;
        return false;
    }

    std::shared_ptr<const WeightLayout> layout() const {
        if (!layout_) {
            auto lay = std::make_shared<WeightLayout>();
            for (const auto& layer : layers_)
                lay->add_layer(layer.out(), layer.in(), layer.has_bias(),
                               layer.adapter ? layer.adapter->rank() : 0);
            layout_ = std::move(lay);
        }
        return layout_;
    }

    WeightVector flatten() const {
        WeightVector w(layout());
        for (std::size_t m = 0; m < layers_.size(); ++m) {
            const auto& layer = layers_[m];
            w.weight(m) = layer.W;
            if (layer.has_bias()) w.bias(m) = layer.b;
            if (layer.adapter) {
                w.adapter_a(m) = layer.adapter->A;
                w.adapter_b(m) = layer.adapter->B;
            }
        }
        return w;
    }

    void set_weights(const WeightVector& w) {
        if (!(w.layout() == *layout()))
            throw ContractError("set_weights: layout mismatch");
        for (std::size_t m = 0; m < layers_.size(); ++m) {
            auto& layer = layers_[m];
            layer.W = w.weight(m);
            if (layer.has_bias()) layer.b = w.bias(m);
            if (layer.adapter) {
                layer.adapter->A = w.adapter_a(m);
                layer.adapter->B = w.adapter_b(m);
            }
        }
    }

  private:
    std::vector<DenseLayer> layers_;
    mutable std::shared_ptr<const WeightLayout> layout_;
};

inline ForwardTrace forward(const Network& net, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != net.input_dim())
        throw ConfigError("forward: input dim mismatch");
    ForwardTrace trace;
    trace.a.reserve(net.layer_count() + 1);
    trace.h.reserve(net.layer_count());
    trace.a.push_back(inputs);
    for (std::size_t m = 0; m < net.layer_count(); ++m) {
        const DenseLayer& layer = net.layer(m);
        Eigen::MatrixXd h = layer.effective_weight() * trace.a.back();
        if (layer.has_bias()) h.colwise() += layer.b;
        if (!h.allFinite())
            throw NumericError("forward: non-finite pre-activation at layer " + std::to_string(m));
        Eigen::MatrixXd a = h.unaryExpr([&](double v) { return act_apply(layer.act, v); });
        trace.h.push_back(std::move(h));
        trace.a.push_back(std::move(a));
    }
    return trace;
}

inline ForwardTrace forward(const Network& net, const Batch& batch) {
    return forward(net, batch.inputs);
}

struct BackwardResult {
    WeightVector grads;              // gradient of the scalar loss fed in via dlogits
    std::vector<Eigen::MatrixXd> dh; // per-layer dL/dh_m, one column per sample
};

/// Reverse pass from an arbitrary dL/dlogits matrix (out x n). Layers with an
/// adapter keep base W and bias frozen: their gradient blocks stay zero.
inline BackwardResult backward_from(const Network& net, const ForwardTrace& trace,
                                    const Eigen::MatrixXd& dlogits) {
    std::size_t M = net.layer_count();
    BackwardResult res;
    res.grads = WeightVector(net.layout());
    res.dh.resize(M);
    Eigen::MatrixXd dh = dlogits;
    for (std::size_t mi = M; mi-- > 0;) {
        const DenseLayer& layer = net.layer(mi);
        if (mi + 1 != M) {
            // incoming dh holds dL/da_mi; pull it through the activation
            dh = dh.cwiseProduct(trace.h[mi].unaryExpr(
                [&](double v) { return act_deriv(layer.act, v); }));
        }
        if (!dh.allFinite())
            throw NumericError("backward: non-finite gradient at layer " + std::to_string(mi));
        res.dh[mi] = dh;
        Eigen::MatrixXd dWeff = dh * trace.a[mi].transpose();
        if (layer.adapter) {
            res.grads.adapter_b(mi) = layer.adapter->scale * dWeff * layer.adapter->A.transpose();
            res.grads.adapter_a(mi) = layer.adapter->scale * layer.adapter->B.transpose() * dWeff;
        } else {
            res.grads.weight(mi) = dWeff;
            if (layer.has_bias()) res.grads.bias(mi) = dh.rowwise().sum();
        }
        if (mi > 0) dh = layer.effective_weight().transpose() * dh;
    }
    return res;
}

/// Mean BCE gradient over the batch.
inline BackwardResult backward(const Network& net, const Batch& batch) {
    ForwardTrace trace = forward(net, batch);
    const Eigen::MatrixXd& z = trace.logits();
    Eigen::MatrixXd dlogits(z.rows(), z.cols());
    double inv_n = 1.0 / static_cast<double>(batch.size());
    for (Eigen::Index j = 0; j < z.cols(); ++j)
        dlogits(0, j) = bce_grad(z(0, j), batch.labels(j)) * inv_n;
    return backward_from(net, trace, dlogits);
}

/// Mean BCE over the batch.
inline double loss_bce(const Network& net, const Batch& batch) {
    ForwardTrace trace = forward(net, batch);
    const Eigen::MatrixXd& z = trace.logits();
    double total = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) total += loss_bce(z(0, j), batch.labels(j));
    return total / static_cast<double>(batch.size());
}

/// Prediction rule: class 1 iff sigma(z) > 0.5; ties count as class 0.
inline double evaluate(const Network& net, const Batch& batch) {
    if (batch.size() == 0) throw ContractError("evaluate: empty dataset");
    ForwardTrace trace = forward(net, batch);
    const Eigen::MatrixXd& z = trace.logits();
    Eigen::Index correct = 0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        int pred = z(0, j) > 0.0 ? 1 : 0;
        if (pred == static_cast<int>(batch.labels(j))) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

inline double evaluate(const Network& net, const TaskDataset& task) {
    return evaluate(net, task.test);
}

}  // namespace lmc
