#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmc/augment.hpp"
#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/network.hpp"
#include "lmc/strategy.hpp"

namespace lmc {

struct DriftSchedule {
    double angle_start_deg = 0.0;
    double angle_step_deg = 50.0;
    double warp_start = 1.0;
    double warp_step = 0.7;
    int family_switch_task = 5;  // 1-based task where the fake family flips; 0 = never
    bool no_drift = false;
};

struct ExperimentConfig {
    // stream
    int tasks = 6;
    int train_per_task = 256;
    int test_per_task = 256;
    Representation representation = Representation::vector;
    DriftSchedule drift;
    // network
    std::vector<Eigen::Index> dims = {2, 16, 16, 1};
    bool bias = true;
    int lora_rank = 8;
    std::vector<bool> lora_mask;  // defaults to adapters on every layer the rank fits
    // training
    StrategyConfig strategy;
    AugmentationSpec augmentation;
    int offline_epochs = 50;
    // scan
    int scan_points = 21;
    bool scan_each_task = false;
    // run
    std::uint64_t seed = 1;
    std::string out_dir = "out";
};

namespace cfg_detail {

using nlohmann::ordered_json;

inline void reject_unknown(const ordered_json& obj, const std::set<std::string>& allowed,
                           const std::string& scope) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key: " + (scope.empty() ? it.key() : scope + "." + it.key()));
}

template <class T>
void read_field(const ordered_json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("bad value type for key: ") + key);
    }
}

}  // namespace cfg_detail

inline void validate(const ExperimentConfig& c) {
    if (c.tasks < 1) throw ConfigError("stream.tasks must be >= 1");
    if (c.train_per_task < 4) throw ConfigError("stream.train_per_task must be >= 4");
    if (c.test_per_task < 2) throw ConfigError("stream.test_per_task must be >= 2");
    if (!c.drift.no_drift && c.drift.angle_step_deg == 0.0 && c.drift.warp_step == 0.0 &&
        c.drift.family_switch_task == 0)
        throw ConfigError("stream.drift: later tasks must drift unless no_drift is set");
    if (c.drift.family_switch_task < 0)
        throw ConfigError("stream.drift.family_switch_task must be >= 0");

    if (c.dims.size() < 2) throw ConfigError("network.dims needs at least two entries");
    for (Eigen::Index d : c.dims)
        if (d < 1) throw ConfigError("network.dims entries must be positive");
    if (c.dims.back() != 1) throw ConfigError("network.dims must end with the 1-logit output");
    Eigen::Index want_dim = c.representation == Representation::vector ? 2 : 256;
    if (c.dims.front() != want_dim)
        throw ConfigError("network.dims front must match the representation dim (" +
                          std::to_string(want_dim) + ")");
    if (c.lora_rank < 1) throw ConfigError("network.lora_rank must be >= 1");
    std::size_t layers = c.dims.size() - 1;
    if (!c.lora_mask.empty() && c.lora_mask.size() != layers)
        throw ConfigError("network.lora_mask length must equal the layer count");
    for (std::size_t m = 0; m < c.lora_mask.size(); ++m)
        if (c.lora_mask[m] && c.lora_rank >= std::min(c.dims[m], c.dims[m + 1]))
            throw ConfigError("network.lora_mask: rank does not fit layer " + std::to_string(m));

    validate(c.strategy);
    validate_augmentation(c.augmentation, c.representation, c.dims.front());
    if (c.offline_epochs < 1) throw ConfigError("offline_epochs must be >= 1");
    if (c.scan_points < 2) throw ConfigError("scan.points must be >= 2");
    if (c.out_dir.empty()) throw ConfigError("out_dir must be nonempty");
}

/// Mask defaulting: adapters wherever the rank fits the layer.
inline std::vector<bool> effective_lora_mask(const ExperimentConfig& c) {
    if (!c.lora_mask.empty()) return c.lora_mask;
    std::vector<bool> mask(c.dims.size() - 1);
    for (std::size_t m = 0; m + 1 < c.dims.size(); ++m)
        mask[m] = c.lora_rank < std::min(c.dims[m], c.dims[m + 1]);
    return mask;
}

inline ExperimentConfig parse_config(const nlohmann::ordered_json& root) {
    using cfg_detail::read_field;
    using cfg_detail::reject_unknown;
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown(root, {"stream", "network", "strategy", "augmentation", "offline_epochs",
                          "scan", "seed", "out_dir"},
                   "");
    ExperimentConfig c;

    if (root.contains("stream")) {
        const auto& s = root.at("stream");
        reject_unknown(s, {"tasks", "train_per_task", "test_per_task", "representation", "drift"},
                       "stream");
        read_field(s, "tasks", c.tasks);
        read_field(s, "train_per_task", c.train_per_task);
        read_field(s, "test_per_task", c.test_per_task);
        if (s.contains("representation"))
            c.representation = representation_from_string(s.at("representation").get<std::string>());
        if (s.contains("drift")) {
            const auto& d = s.at("drift");
            reject_unknown(d,
                           {"angle_start_deg", "angle_step_deg", "warp_start", "warp_step",
                            "family_switch_task", "no_drift"},
                           "stream.drift");
            read_field(d, "angle_start_deg", c.drift.angle_start_deg);
            read_field(d, "angle_step_deg", c.drift.angle_step_deg);
            read_field(d, "warp_start", c.drift.warp_start);
            read_field(d, "warp_step", c.drift.warp_step);
            read_field(d, "family_switch_task", c.drift.family_switch_task);
            read_field(d, "no_drift", c.drift.no_drift);
        }
    }

    if (root.contains("network")) {
        const auto& n = root.at("network");
        reject_unknown(n, {"dims", "bias", "lora_rank", "lora_mask"}, "network");
        if (n.contains("dims")) {
            c.dims.clear();
            for (const auto& v : n.at("dims")) c.dims.push_back(v.get<Eigen::Index>());
        }
        read_field(n, "bias", c.bias);
        read_field(n, "lora_rank", c.lora_rank);
        if (n.contains("lora_mask")) {
            c.lora_mask.clear();
            for (const auto& v : n.at("lora_mask")) c.lora_mask.push_back(v.get<bool>());
        }
    }

    if (root.contains("strategy")) {
        const auto& s = root.at("strategy");
        reject_unknown(s,
                       {"mode", "use_kfac", "use_ac", "use_linear_merge", "use_replay", "use_ewc",
                        "lambda_ac", "gamma", "ewc_strength", "trigger_threshold", "epochs", "lr",
                        "batch_size", "damping", "replay_capacity", "kfac_inverse_weighting",
                        "kfac_accumulate", "kfac_include_replay"},
                       "strategy");
        if (s.contains("mode")) {
            std::string mode = s.at("mode").get<std::string>();
            if (mode == "sequential") {
                c.strategy.sequential = true;
            } else if (mode == "joint") {
                c.strategy.joint_retrain = true;
            } else if (mode != "regularized") {
                throw ConfigError("strategy.mode must be sequential|joint|regularized");
            }
        }
        read_field(s, "use_kfac", c.strategy.use_kfac);
        read_field(s, "use_ac", c.strategy.use_ac);
        read_field(s, "use_linear_merge", c.strategy.use_linear_merge);
        read_field(s, "use_replay", c.strategy.use_replay);
        read_field(s, "use_ewc", c.strategy.use_ewc);
        read_field(s, "lambda_ac", c.strategy.lambda_ac);
        if (c.strategy.lambda_ac < 0.0) throw ConfigError("strategy.lambda_ac must satisfy lambda_ac >= 0");
        read_field(s, "gamma", c.strategy.gamma);
        if (c.strategy.gamma < 0.0) throw ConfigError("strategy.gamma must satisfy gamma >= 0");
        read_field(s, "ewc_strength", c.strategy.ewc_strength);
        read_field(s, "trigger_threshold", c.strategy.trigger_threshold);
        read_field(s, "epochs", c.strategy.epochs);
        read_field(s, "lr", c.strategy.lr);
        read_field(s, "batch_size", c.strategy.batch_size);
        read_field(s, "damping", c.strategy.damping);
        read_field(s, "replay_capacity", c.strategy.replay_capacity);
        read_field(s, "kfac_inverse_weighting", c.strategy.kfac_inverse_weighting);
        read_field(s, "kfac_accumulate", c.strategy.kfac_accumulate);
        read_field(s, "kfac_include_replay", c.strategy.kfac_include_replay);
    }

    if (root.contains("augmentation")) {
        const auto& a = root.at("augmentation");
        reject_unknown(a,
                       {"flip_prob", "rotate_deg", "translate_frac", "scale_lo", "scale_hi",
                        "shear_deg", "rand_n", "rand_m", "pool"},
                       "augmentation");
        read_field(a, "flip_prob", c.augmentation.flip_prob);
        read_field(a, "rotate_deg", c.augmentation.rotate_deg);
        read_field(a, "translate_frac", c.augmentation.translate_frac);
        read_field(a, "scale_lo", c.augmentation.scale_lo);
        read_field(a, "scale_hi", c.augmentation.scale_hi);
        read_field(a, "shear_deg", c.augmentation.shear_deg);
        read_field(a, "rand_n", c.augmentation.rand_n);
        read_field(a, "rand_m", c.augmentation.rand_m);
        if (a.contains("pool")) {
            c.augmentation.pool.clear();
            for (const auto& v : a.at("pool"))
                c.augmentation.pool.push_back(pool_op_from_string(v.get<std::string>()));
        }
    }

    read_field(root, "offline_epochs", c.offline_epochs);
    if (root.contains("scan")) {
        const auto& s = root.at("scan");
        reject_unknown(s, {"points", "each_task"}, "scan");
        read_field(s, "points", c.scan_points);
        read_field(s, "each_task", c.scan_each_task);
    }
    read_field(root, "seed", c.seed);
    read_field(root, "out_dir", c.out_dir);

    validate(c);
    return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    nlohmann::ordered_json root;
    try {
        is >> root;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(root);
}

/// Full echo with every effective value filled in; parse(echo(c)) == c.
inline nlohmann::ordered_json echo_config(const ExperimentConfig& c) {
    nlohmann::ordered_json root;
    auto& stream = root["stream"];
    stream["tasks"] = c.tasks;
    stream["train_per_task"] = c.train_per_task;
    stream["test_per_task"] = c.test_per_task;
    stream["representation"] = to_string(c.representation);
    auto& drift = stream["drift"];
    drift["angle_start_deg"] = c.drift.angle_start_deg;
    drift["angle_step_deg"] = c.drift.angle_step_deg;
    drift["warp_start"] = c.drift.warp_start;
    drift["warp_step"] = c.drift.warp_step;
    drift["family_switch_task"] = c.drift.family_switch_task;
    drift["no_drift"] = c.drift.no_drift;

    auto& net = root["network"];
    net["dims"] = c.dims;
    net["bias"] = c.bias;
    net["lora_rank"] = c.lora_rank;
    net["lora_mask"] = effective_lora_mask(c);

    auto& strat = root["strategy"];
    strat["mode"] = c.strategy.sequential ? "sequential"
                    : c.strategy.joint_retrain ? "joint"
                                               : "regularized";
    strat["use_kfac"] = c.strategy.use_kfac;
    strat["use_ac"] = c.strategy.use_ac;
    strat["use_linear_merge"] = c.strategy.use_linear_merge;
    strat["use_replay"] = c.strategy.use_replay;
    strat["use_ewc"] = c.strategy.use_ewc;
    strat["lambda_ac"] = c.strategy.lambda_ac;
    strat["gamma"] = c.strategy.gamma;
    strat["ewc_strength"] = c.strategy.ewc_strength;
    strat["trigger_threshold"] = c.strategy.trigger_threshold;
    strat["epochs"] = c.strategy.epochs;
    strat["lr"] = c.strategy.lr;
    strat["batch_size"] = c.strategy.batch_size;
    strat["damping"] = c.strategy.damping;
    strat["replay_capacity"] = c.strategy.replay_capacity;
    strat["kfac_inverse_weighting"] = c.strategy.kfac_inverse_weighting;
    strat["kfac_accumulate"] = c.strategy.kfac_accumulate;
    strat["kfac_include_replay"] = c.strategy.kfac_include_replay;

    auto& aug = root["augmentation"];
    aug["flip_prob"] = c.augmentation.flip_prob;
    aug["rotate_deg"] = c.augmentation.rotate_deg;
    aug["translate_frac"] = c.augmentation.translate_frac;
    aug["scale_lo"] = c.augmentation.scale_lo;
    aug["scale_hi"] = c.augmentation.scale_hi;
    aug["shear_deg"] = c.augmentation.shear_deg;
    aug["rand_n"] = c.augmentation.rand_n;
    aug["rand_m"] = c.augmentation.rand_m;
    std::vector<std::string> pool;
    for (PoolOp op : c.augmentation.pool) pool.push_back(to_string(op));
    aug["pool"] = pool;

    root["offline_epochs"] = c.offline_epochs;
    auto& scan = root["scan"];
    scan["points"] = c.scan_points;
    scan["each_task"] = c.scan_each_task;
    root["seed"] = c.seed;
    root["out_dir"] = c.out_dir;
    return root;
}

}  // namespace lmc
