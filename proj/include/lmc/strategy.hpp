#pragma once

#include <string>

#include "lmc/errors.hpp"

namespace lmc {

/// Mode is exactly one of sequential, joint_retrain, or regularized
/// (neither flag set; the use_* toggles then select the regularizers).
struct StrategyConfig {
    bool sequential = false;
    bool joint_retrain = false;
    bool use_kfac = false;
    bool use_ac = false;
    bool use_linear_merge = false;
    bool use_replay = false;
    bool use_ewc = false;
    double lambda_ac = 0.2;
    double gamma = 0.5;
    double ewc_strength = 50.0;
    double trigger_threshold = 0.90;
    int epochs = 5;
    double lr = 1e-4;
    int batch_size = 32;
    double damping = 1e-4;
    int replay_capacity = 500;
    bool kfac_inverse_weighting = false;
    bool kfac_accumulate = false;
    bool kfac_include_replay = false;
};

inline void validate(const StrategyConfig& s) {
    if (s.sequential && s.joint_retrain)
        throw ConfigError("strategy: sequential and joint_retrain are mutually exclusive");
    bool any_reg = s.use_kfac || s.use_ac || s.use_linear_merge || s.use_replay || s.use_ewc;
    if ((s.sequential || s.joint_retrain) && any_reg)
        throw ConfigError("strategy: regularizer flags require the regularized mode");
    if (s.lambda_ac < 0.0) throw ConfigError("strategy: lambda_ac >= 0");
    if (s.gamma < 0.0) throw ConfigError("strategy: gamma >= 0");
    if (s.ewc_strength < 0.0) throw ConfigError("strategy: ewc_strength >= 0");
    if (s.trigger_threshold <= 0.0 || s.trigger_threshold >= 1.0)
        throw ConfigError("strategy: trigger_threshold must lie in (0,1)");
    if (s.epochs <= 0) throw ConfigError("strategy: epochs must be positive");
    if (s.lr <= 0.0) throw ConfigError("strategy: lr must be positive");
    if (s.batch_size <= 0) throw ConfigError("strategy: batch_size must be positive");
    if (s.damping <= 0.0) throw ConfigError("strategy: damping must be positive");
    if (s.replay_capacity <= 0) throw ConfigError("strategy: replay_capacity must be positive");
}

inline std::string strategy_tag(const StrategyConfig& s) {
    if (s.sequential) return "sequential";
    if (s.joint_retrain) return "joint";
    std::string tag;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!tag.empty()) tag += '+';
        tag += name;
    };
    add(s.use_kfac, "kfac");
    add(s.use_ac, "ac");
    add(s.use_linear_merge, "linear");
    add(s.use_replay, "replay");
    add(s.use_ewc, "ewc");
    return tag.empty() ? "plain" : tag;
}

}  // namespace lmc
