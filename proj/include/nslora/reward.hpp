#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nslora/featurize.hpp"
#include "nslora/hash.hpp"

namespace nslora {

struct RewardError : std::runtime_error {
    enum class Kind { InsufficientData, NonFiniteLoss, Io };
    Kind kind;
    RewardError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// One scored sample from a monitoring run: text is the concatenated
// question and answer, value is the criterion recorded for it.
struct RewardExample {
    std::string id;
    std::string text;  // Q || A
    double criterion_value = 0.0;
};

struct PreferencePair {
    std::string positive_text;  // higher criterion value
    std::string negative_text;
    double margin = 0.0;  // criterion difference, > 0
};

enum class Route { Numerical, Symbolic };

struct RoutingDecision {
    std::string sample_id;
    double reward = 0.0;
    Route route = Route::Numerical;
    double tau = 0.0;
};

struct RewardGradients {
    std::vector<double> weights;
    double bias = 0.0;
};

class RewardModel {
public:
    RewardModel() = default;
    RewardModel(std::size_t feature_dim, std::uint64_t hash_seed)
        : dim_(feature_dim), hash_seed_(hash_seed), weights_(feature_dim, 0.0) {}

    std::size_t feature_dim() const { return dim_; }
    std::uint64_t hash_seed() const { return hash_seed_; }
    const std::vector<double>& weights() const { return weights_; }
    double bias() const { return bias_; }

    FeatureVector features(const std::string& text) const {
        return featurize("", text, dim_, hash_seed_);
    }

    double score(const std::string& text) const {
        FeatureVector x = features(text);
        double acc = bias_;
        for (std::size_t i = 0; i < dim_; ++i) acc += weights_[i] * x[i];
        return acc;
    }

    void apply_update(const RewardGradients& g, double lr) {
        for (std::size_t i = 0; i < dim_; ++i) weights_[i] -= lr * g.weights[i];
        bias_ -= lr * g.bias;
    }

    void save(const std::string& path) const {
        nlohmann::json j;
        j["format"] = "nslora-reward";
        j["version"] = 1;
        j["feature_dim"] = dim_;
        j["hash_seed"] = hash_seed_;
        j["weights"] = weights_;
        j["bias"] = bias_;
        std::ofstream out(path);
        if (!out) throw RewardError(RewardError::Kind::Io, "cannot write " + path);
        out << j.dump() << "\n";
    }

    static RewardModel load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw RewardError(RewardError::Kind::Io, "cannot open " + path);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || j.value("format", "") != "nslora-reward")
            throw RewardError(RewardError::Kind::Io, "not a reward checkpoint: " + path);
        RewardModel m(j["feature_dim"].get<std::size_t>(), j["hash_seed"].get<std::uint64_t>());
        m.weights_ = j["weights"].get<std::vector<double>>();
        m.bias_ = j["bias"].get<double>();
        return m;
    }

private:
    std::size_t dim_ = 0;
    std::uint64_t hash_seed_ = 0;
    std::vector<double> weights_;
    double bias_ = 0.0;
};

// Uniform seeded sampling of oriented pairs with distinct criterion values.
inline std::vector<PreferencePair> build_pairs(const std::vector<RewardExample>& examples,
                                               std::size_t max_pairs, std::uint64_t seed) {
    bool distinct = false;
    for (std::size_t i = 1; i < examples.size() && !distinct; ++i)
        distinct = examples[i].criterion_value != examples[0].criterion_value;
    if (examples.size() < 2 || !distinct)
        throw RewardError(RewardError::Kind::InsufficientData,
                          "need >= 2 examples with distinct criterion values");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, examples.size() - 1);
    std::vector<PreferencePair> pairs;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 100 * max_pairs + 100;
    while (pairs.size() < max_pairs && attempts < max_attempts) {
        ++attempts;
        const auto& a = examples[pick(rng)];
        const auto& b = examples[pick(rng)];
        if (a.criterion_value == b.criterion_value) continue;  // zero margin, skip
        const auto& pos = a.criterion_value > b.criterion_value ? a : b;
        const auto& neg = a.criterion_value > b.criterion_value ? b : a;
        pairs.push_back({pos.text, neg.text, pos.criterion_value - neg.criterion_value});
    }
    return pairs;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Pairwise ranking loss. Default is -log sigmoid(r+ - r-); the literal
// sigmoid objective is kept behind a flag for ablation.
inline double pairwise_loss(const RewardModel& model, const PreferencePair& pair,
                            RewardGradients* grads = nullptr, bool literal_sigmoid = false) {
    FeatureVector xp = model.features(pair.positive_text);
    FeatureVector xn = model.features(pair.negative_text);
    double rp = model.bias(), rn = model.bias();
    for (std::size_t i = 0; i < model.feature_dim(); ++i) {
        rp += model.weights()[i] * xp[i];
        rn += model.weights()[i] * xn[i];
    }
    const double delta = rp - rn;
    double loss, dloss_ddelta;
    if (literal_sigmoid) {
        loss = sigmoid(delta);
        dloss_ddelta = loss * (1.0 - loss);
    } else {
        loss = softplus(-delta);           // -log sigmoid(delta)
        dloss_ddelta = -sigmoid(-delta);
    }
    if (grads) {
        grads->weights.assign(model.feature_dim(), 0.0);
        for (std::size_t i = 0; i < model.feature_dim(); ++i)
            grads->weights[i] = dloss_ddelta * (xp[i] - xn[i]);
        grads->bias = 0.0;  // bias cancels in the difference
    }
    return loss;
}

struct RewardTrainResult {
    RewardModel model;
    double final_loss = 0.0;
    double pairwise_accuracy = 0.0;  // fraction of pairs with r+ > r-
};

inline RewardTrainResult train_reward(const std::vector<PreferencePair>& pairs, int epochs,
                                      double lr, std::uint64_t seed, std::size_t feature_dim,
                                      std::uint64_t hash_seed, bool literal_sigmoid = false) {
    if (pairs.empty())
        throw RewardError(RewardError::Kind::InsufficientData, "no preference pairs");
    RewardTrainResult result;
    result.model = RewardModel(feature_dim, hash_seed);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            RewardGradients g;
            double loss = pairwise_loss(result.model, pairs[idx], &g, literal_sigmoid);
            if (!std::isfinite(loss))
                throw RewardError(RewardError::Kind::NonFiniteLoss,
                                  "non-finite pairwise loss at epoch " + std::to_string(e));
            result.model.apply_update(g, lr);
            epoch_loss += loss;
        }
        result.final_loss = epoch_loss / static_cast<double>(pairs.size());
    }
    std::size_t hits = 0;
    for (const auto& p : pairs)
        if (result.model.score(p.positive_text) > result.model.score(p.negative_text)) ++hits;
    result.pairwise_accuracy = static_cast<double>(hits) / static_cast<double>(pairs.size());
    return result;
}

inline RoutingDecision route(const RewardModel& model, const std::string& sample_id,
                             const std::string& question, const std::string& answer,
                             double tau) {
    RoutingDecision d;
    d.sample_id = sample_id;
    d.tau = tau;
    d.reward = model.score(question + " " + answer);
    d.route = d.reward >= tau ? Route::Symbolic : Route::Numerical;  // boundary inclusive
    return d;
}

// q-th quantile (nearest-rank) of a reward sample, for tau calibration.
inline double reward_quantile(std::vector<double> rewards, double q) {
    if (rewards.empty())
        throw RewardError(RewardError::Kind::InsufficientData, "no rewards for quantile");
    std::sort(rewards.begin(), rewards.end());
    double rank = q * static_cast<double>(rewards.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    std::size_t hi = std::min(lo + 1, rewards.size() - 1);
    double frac = rank - static_cast<double>(lo);
    return rewards[lo] * (1.0 - frac) + rewards[hi] * frac;
}

}  // namespace nslora
