#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nslora/signals.hpp"

namespace nslora {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class RunMode { Neurosymbolic, NumericalOnly, SymbolicOnly, TwoStage };

inline std::string to_string(RunMode m) {
    switch (m) {
        case RunMode::Neurosymbolic: return "neurosymbolic";
        case RunMode::NumericalOnly: return "numerical_only";
        case RunMode::SymbolicOnly: return "symbolic_only";
        case RunMode::TwoStage: return "two_stage";
    }
    return "?";
}

enum class RewriterKind { MockHint, MockNoop, Http };

inline std::string to_string(RewriterKind k) {
    switch (k) {
        case RewriterKind::MockHint: return "mock_hint";
        case RewriterKind::MockNoop: return "mock_noop";
        case RewriterKind::Http: return "http";
    }
    return "?";
}

struct RunConfig {
    int epochs = 10;
    double lr = 0.1;
    int batch_size = 8;
    CriterionKind criterion = CriterionKind::LossChangeRatio;
    double p = 0.1;
    double k = 0.05;
    int min_misclassified = 1;
    int max_symbolic_iters = 3;
    bool system_prompt_learning = false;
    RunMode mode = RunMode::Neurosymbolic;
    std::uint64_t seed = 0;
    RatioRanking ratio_ranking = RatioRanking::AbsNearZero;
    SelectionBase selection_base = SelectionBase::Corpus;
    bool revert_failed_rewrites = false;

    std::size_t feature_dim = 1024;
    std::size_t rank = 4;
    double alpha = 1.0;
    std::uint64_t hash_seed = 17;
    std::string system_prompt = "answer with a single number";

    RewriterKind rewriter = RewriterKind::MockHint;
    std::string endpoint_url;
    std::string endpoint_model = "gpt-4o";
    double temperature = 0.0;
    int timeout_ms = 30000;
    int max_retries = 3;
    int backoff_base_ms = 500;

    std::string reward_model_path;
    double tau_quantile = 0.9;

    SaturationPolicy saturation_policy() const {
        SaturationPolicy policy;
        policy.kind = criterion;
        policy.k = k;
        policy.p = p;
        policy.min_misclassified = min_misclassified;
        policy.ranking = ratio_ranking;
        policy.base = selection_base;
        policy.batch_size = batch_size;
        return policy;
    }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("invalid boolean for " + key + ": " + v);
}

inline CriterionKind parse_criterion(const std::string& v) {
    if (v == "loss_change_ratio") return CriterionKind::LossChangeRatio;
    if (v == "grad_norm") return CriterionKind::GradNorm;
    if (v == "random") return CriterionKind::Random;
    if (v == "reward_classifier") return CriterionKind::RewardClassifier;
    throw ConfigError("invalid criterion: " + v);
}

inline RunMode parse_mode(const std::string& v) {
    if (v == "neurosymbolic") return RunMode::Neurosymbolic;
    if (v == "numerical_only") return RunMode::NumericalOnly;
    if (v == "symbolic_only") return RunMode::SymbolicOnly;
    if (v == "two_stage") return RunMode::TwoStage;
    throw ConfigError("invalid mode: " + v);
}

inline RewriterKind parse_rewriter(const std::string& v) {
    if (v == "mock_hint") return RewriterKind::MockHint;
    if (v == "mock_noop") return RewriterKind::MockNoop;
    if (v == "http") return RewriterKind::Http;
    throw ConfigError("invalid rewriter: " + v);
}

}  // namespace detail

// Flat key=value map, as parsed from a config file plus --set overrides.
using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ConfigMap map;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string trimmed;
        // strip surrounding whitespace around "key = value"
        auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        auto strip = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        map[key] = value;
    }
    return map;
}

inline void apply_override(ConfigMap& map, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be KEY=VALUE: " + kv);
    map[kv.substr(0, eq)] = kv.substr(eq + 1);
}

// Unknown keys are errors, not warnings.
inline RunConfig run_config_from_map(const ConfigMap& map) {
    RunConfig cfg;
    for (const auto& [key, value] : map) {
        try {
            if (key == "epochs") cfg.epochs = std::stoi(value);
            else if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "batch_size") cfg.batch_size = std::stoi(value);
            else if (key == "criterion") cfg.criterion = detail::parse_criterion(value);
            else if (key == "p") cfg.p = std::stod(value);
            else if (key == "k") cfg.k = std::stod(value);
            else if (key == "min_misclassified") cfg.min_misclassified = std::stoi(value);
            else if (key == "max_symbolic_iters") cfg.max_symbolic_iters = std::stoi(value);
            else if (key == "system_prompt_learning")
                cfg.system_prompt_learning = detail::parse_bool(value, key);
            else if (key == "mode") cfg.mode = detail::parse_mode(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "ratio_ranking")
                cfg.ratio_ranking = value == "signed" ? RatioRanking::Signed
                                                      : value == "abs" ? RatioRanking::AbsNearZero
                                                                       : throw ConfigError("invalid ratio_ranking: " + value);
            else if (key == "selection_base")
                cfg.selection_base = value == "batch" ? SelectionBase::Batch
                                                      : value == "corpus" ? SelectionBase::Corpus
                                                                          : throw ConfigError("invalid selection_base: " + value);
            else if (key == "revert_failed_rewrites")
                cfg.revert_failed_rewrites = detail::parse_bool(value, key);
            else if (key == "feature_dim") cfg.feature_dim = std::stoul(value);
            else if (key == "rank") cfg.rank = std::stoul(value);
            else if (key == "alpha") cfg.alpha = std::stod(value);
            else if (key == "hash_seed") cfg.hash_seed = std::stoull(value);
            else if (key == "system_prompt") cfg.system_prompt = value;
            else if (key == "rewriter") cfg.rewriter = detail::parse_rewriter(value);
            else if (key == "endpoint_url") cfg.endpoint_url = value;
            else if (key == "endpoint_model") cfg.endpoint_model = value;
            else if (key == "temperature") cfg.temperature = std::stod(value);
            else if (key == "timeout_ms") cfg.timeout_ms = std::stoi(value);
            else if (key == "max_retries") cfg.max_retries = std::stoi(value);
            else if (key == "backoff_base_ms") cfg.backoff_base_ms = std::stoi(value);
            else if (key == "reward_model_path") cfg.reward_model_path = value;
            else if (key == "tau_quantile") cfg.tau_quantile = std::stod(value);
            else throw ConfigError("unknown config key: " + key);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("invalid value for " + key + ": " + value);
        }
    }
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.max_symbolic_iters < 1) throw ConfigError("max_symbolic_iters must be >= 1");
    if (cfg.p < 0.0 || cfg.p > 1.0) throw ConfigError("p must be in [0, 1]");
    if (cfg.k < 0.0) throw ConfigError("k must be >= 0");
    return cfg;
}

// Effective config as a map; echoed into the run log header and expected
// to re-parse to an identical config.
inline ConfigMap run_config_to_map(const RunConfig& cfg) {
    ConfigMap map;
    auto fmt = [](double d) {
        std::ostringstream os;
        os.precision(17);
        os << d;
        return os.str();
    };
    map["epochs"] = std::to_string(cfg.epochs);
    map["lr"] = fmt(cfg.lr);
    map["batch_size"] = std::to_string(cfg.batch_size);
    map["criterion"] = to_string(cfg.criterion);
    map["p"] = fmt(cfg.p);
    map["k"] = fmt(cfg.k);
    map["min_misclassified"] = std::to_string(cfg.min_misclassified);
    map["max_symbolic_iters"] = std::to_string(cfg.max_symbolic_iters);
    map["system_prompt_learning"] = cfg.system_prompt_learning ? "true" : "false";
    map["mode"] = to_string(cfg.mode);
    map["seed"] = std::to_string(cfg.seed);
    map["ratio_ranking"] = cfg.ratio_ranking == RatioRanking::Signed ? "signed" : "abs";
    map["selection_base"] = cfg.selection_base == SelectionBase::Batch ? "batch" : "corpus";
    map["revert_failed_rewrites"] = cfg.revert_failed_rewrites ? "true" : "false";
    map["feature_dim"] = std::to_string(cfg.feature_dim);
    map["rank"] = std::to_string(cfg.rank);
    map["alpha"] = fmt(cfg.alpha);
    map["hash_seed"] = std::to_string(cfg.hash_seed);
    map["system_prompt"] = cfg.system_prompt;
    map["rewriter"] = to_string(cfg.rewriter);
    map["endpoint_url"] = cfg.endpoint_url;
    map["endpoint_model"] = cfg.endpoint_model;
    map["temperature"] = fmt(cfg.temperature);
    map["timeout_ms"] = std::to_string(cfg.timeout_ms);
    map["max_retries"] = std::to_string(cfg.max_retries);
    map["backoff_base_ms"] = std::to_string(cfg.backoff_base_ms);
    map["reward_model_path"] = cfg.reward_model_path;
    map["tau_quantile"] = fmt(cfg.tau_quantile);
    return map;
}

}  // namespace nslora
