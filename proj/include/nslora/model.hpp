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

#include "nslora/corpus.hpp"
#include "nslora/featurize.hpp"
#include "nslora/hash.hpp"

namespace nslora {

struct ModelError : std::runtime_error {
    enum class Kind {
        DimensionMismatch,
        NonFiniteGradient,
        UnknownLabelSpace,
        CheckpointCorrupt,
    };
    Kind kind;
    ModelError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct GradientReport {
    double loss = 0.0;
    double grad_norm = 0.0;
    bool correct = false;
};

// Gradients with respect to the trainable factors only.
struct AdapterGradients {
    std::vector<double> factor_down;  // rank x dim
    std::vector<double> factor_up;    // vocab x rank
};

// Frozen linear scorer over hashed token features plus trainable low-rank
// factors. Effective weights: W = W0 + alpha * up * down, with up zeroed
// at init so training starts exactly at the frozen base.
class AdapterModel {
public:
    AdapterModel() = default;

    AdapterModel(std::vector<std::string> answer_vocab, std::size_t feature_dim,
                 std::size_t rank, double alpha, std::uint64_t hash_seed,
                 std::uint64_t seed)
        : vocab_(std::move(answer_vocab)),
          dim_(feature_dim),
          rank_(rank),
          alpha_(alpha),
          hash_seed_(hash_seed),
          seed_(seed) {
        if (vocab_.empty())
            throw ModelError(ModelError::Kind::UnknownLabelSpace, "empty answer vocab");
        if (rank_ > std::min(vocab_.size(), dim_))
            throw ModelError(ModelError::Kind::DimensionMismatch,
                             "rank exceeds min(vocab, dim)");
        base_ = init_base(vocab_.size(), dim_, seed_);
        base_checksum_ = checksum_doubles(base_);
        std::mt19937_64 rng(seed_ ^ 0x5bf03635ull);
        std::uniform_real_distribution<double> u(-1.0 / std::sqrt(double(dim_)),
                                                 1.0 / std::sqrt(double(dim_)));
        down_.resize(rank_ * dim_);
        for (auto& w : down_) w = u(rng);
        up_.assign(vocab_.size() * rank_, 0.0);
    }

    const std::vector<std::string>& answer_vocab() const { return vocab_; }
    std::size_t feature_dim() const { return dim_; }
    std::size_t rank() const { return rank_; }
    double alpha() const { return alpha_; }
    std::uint64_t hash_seed() const { return hash_seed_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t base_checksum() const { return base_checksum_; }
    const std::vector<double>& base_weights() const { return base_; }
    const std::vector<double>& factor_down() const { return down_; }
    const std::vector<double>& factor_up() const { return up_; }

    // Hash over the trainable parameters; changes iff an update landed.
    std::uint64_t parameter_hash() const {
        return combine_hash(checksum_doubles(down_), checksum_doubles(up_));
    }

    // logits = W0*x + alpha * up * (down * x), factor-first, ascending
    // index summation throughout.
    std::vector<double> forward(const FeatureVector& x) const {
        if (x.size() != dim_)
            throw ModelError(ModelError::Kind::DimensionMismatch, "feature length != dim");
        const std::size_t v = vocab_.size();
        std::vector<double> z(rank_, 0.0);  // down * x
        for (std::size_t r = 0; r < rank_; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) acc += down_[r * dim_ + j] * x[j];
            z[r] = acc;
        }
        std::vector<double> logits(v, 0.0);
        for (std::size_t c = 0; c < v; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) acc += base_[c * dim_ + j] * x[j];
            double adapt = 0.0;
            for (std::size_t r = 0; r < rank_; ++r) adapt += up_[c * rank_ + r] * z[r];
            logits[c] = acc + alpha_ * adapt;
        }
        return logits;
    }

    static std::size_t argmax(const std::vector<double>& logits) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = i;  // ties keep lowest index
        return best;
    }

    GradientReport loss_and_grad(const FeatureVector& x, std::size_t label,
                                 AdapterGradients* grads = nullptr) const {
        if (label >= vocab_.size())
            throw ModelError(ModelError::Kind::DimensionMismatch, "label out of range");
        const std::size_t v = vocab_.size();
        std::vector<double> logits = forward(x);
        std::vector<double> p = softmax(logits);

        GradientReport rep;
        rep.loss = -std::log(std::max(p[label], 1e-300));
        rep.correct = argmax(logits) == label;

        // dlogits = softmax - onehot
        std::vector<double> dlogits = p;
        dlogits[label] -= 1.0;

        std::vector<double> z(rank_, 0.0);  // down * x
        for (std::size_t r = 0; r < rank_; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) acc += down_[r * dim_ + j] * x[j];
            z[r] = acc;
        }
        // dUp = alpha * dlogits ⊗ z ; dDown = alpha * (Upᵀ dlogits) ⊗ x
        std::vector<double> dup(v * rank_, 0.0);
        for (std::size_t c = 0; c < v; ++c)
            for (std::size_t r = 0; r < rank_; ++r)
                dup[c * rank_ + r] = alpha_ * dlogits[c] * z[r];
        std::vector<double> ut_d(rank_, 0.0);
        for (std::size_t r = 0; r < rank_; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < v; ++c) acc += up_[c * rank_ + r] * dlogits[c];
            ut_d[r] = acc;
        }
        std::vector<double> ddown(rank_ * dim_, 0.0);
        for (std::size_t r = 0; r < rank_; ++r)
            for (std::size_t j = 0; j < dim_; ++j)
                ddown[r * dim_ + j] = alpha_ * ut_d[r] * x[j];

        double sq = 0.0;
        for (double g : ddown) sq += g * g;
        for (double g : dup) sq += g * g;
        rep.grad_norm = std::sqrt(sq);

        if (grads) {
            grads->factor_down = std::move(ddown);
            grads->factor_up = std::move(dup);
        }
        return rep;
    }

    void apply_update(const AdapterGradients& grads, double lr) {
        if (grads.factor_down.size() != down_.size() || grads.factor_up.size() != up_.size())
            throw ModelError(ModelError::Kind::DimensionMismatch, "gradient shape mismatch");
        for (double g : grads.factor_down)
            if (!std::isfinite(g))
                throw ModelError(ModelError::Kind::NonFiniteGradient, "non-finite gradient");
        for (double g : grads.factor_up)
            if (!std::isfinite(g))
                throw ModelError(ModelError::Kind::NonFiniteGradient, "non-finite gradient");
        for (std::size_t i = 0; i < down_.size(); ++i) down_[i] -= lr * grads.factor_down[i];
        for (std::size_t i = 0; i < up_.size(); ++i) up_[i] -= lr * grads.factor_up[i];
    }

    std::string predict_answer(const std::string& system_prompt,
                               const std::string& question) const {
        if (vocab_.empty())
            throw ModelError(ModelError::Kind::UnknownLabelSpace, "empty answer vocab");
        FeatureVector x = featurize(system_prompt, question, dim_, hash_seed_);
        return vocab_[argmax(forward(x))];
    }

    std::string predict_answer(const Corpus& corpus, const Sample& s) const {
        return predict_answer(corpus.resolve_system_prompt(s), s.effective_question());
    }

    // -1 when the ground truth is outside the vocab.
    int label_index(const std::string& answer) const {
        for (std::size_t i = 0; i < vocab_.size(); ++i)
            if (vocab_[i] == answer) return static_cast<int>(i);
        return -1;
    }

    // State dump: W0 is stored as checksum only and re-derived from the
    // seed on load, then verified.
    nlohmann::json state_json() const {
        if (checksum_doubles(base_) != base_checksum_)
            throw ModelError(ModelError::Kind::CheckpointCorrupt,
                             "frozen base weights changed");
        nlohmann::json j;
        j["format"] = "nslora-checkpoint";
        j["version"] = 1;
        j["base_checksum"] = base_checksum_;
        j["factor_down"] = down_;
        j["factor_up"] = up_;
        j["alpha"] = alpha_;
        j["rank"] = rank_;
        j["feature_dim"] = dim_;
        j["hash_seed"] = hash_seed_;
        j["seed"] = seed_;
        j["answer_vocab"] = vocab_;
        return j;
    }

    static AdapterModel from_state_json(const nlohmann::json& j) {
        if (j.value("format", "") != "nslora-checkpoint")
            throw ModelError(ModelError::Kind::CheckpointCorrupt, "not a model checkpoint");
        AdapterModel m(j["answer_vocab"].get<std::vector<std::string>>(),
                       j["feature_dim"].get<std::size_t>(), j["rank"].get<std::size_t>(),
                       j["alpha"].get<double>(), j["hash_seed"].get<std::uint64_t>(),
                       j["seed"].get<std::uint64_t>());
        m.down_ = j["factor_down"].get<std::vector<double>>();
        m.up_ = j["factor_up"].get<std::vector<double>>();
        if (m.down_.size() != m.rank_ * m.dim_ || m.up_.size() != m.vocab_.size() * m.rank_)
            throw ModelError(ModelError::Kind::CheckpointCorrupt, "factor shape mismatch");
        if (m.base_checksum_ != j["base_checksum"].get<std::uint64_t>())
            throw ModelError(ModelError::Kind::CheckpointCorrupt,
                             "frozen base checksum mismatch");
        return m;
    }

    void save_checkpoint(const std::string& path) const {
        std::ofstream out(path);
        if (!out)
            throw ModelError(ModelError::Kind::CheckpointCorrupt,
                             "cannot write checkpoint: " + path);
        out << state_json().dump() << "\n";
    }

    static AdapterModel load_checkpoint(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw ModelError(ModelError::Kind::CheckpointCorrupt,
                             "cannot open checkpoint: " + path);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded())
            throw ModelError(ModelError::Kind::CheckpointCorrupt,
                             "not a model checkpoint: " + path);
        return from_state_json(j);
    }

    static std::vector<double> softmax(const std::vector<double>& logits) {
        double mx = logits[0];
        for (double l : logits) mx = std::max(mx, l);
        std::vector<double> p(logits.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            p[i] = std::exp(logits[i] - mx);
            sum += p[i];
        }
        for (auto& q : p) q /= sum;
        return p;
    }

private:
    static std::vector<double> init_base(std::size_t v, std::size_t d, std::uint64_t seed) {
        std::mt19937_64 rng(seed ^ 0xb0a5e0ull);
        std::uniform_real_distribution<double> u(-0.01, 0.01);
        std::vector<double> w(v * d);
        for (auto& x : w) x = u(rng);
        return w;
    }

    std::vector<std::string> vocab_;
    std::size_t dim_ = 0;
    std::size_t rank_ = 0;
    double alpha_ = 1.0;
    std::uint64_t hash_seed_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> base_;  // vocab x dim, frozen
    std::uint64_t base_checksum_ = 0;
    std::vector<double> down_;  // rank x dim
    std::vector<double> up_;    // vocab x rank
};

// Answer vocabulary: sorted unique ground truths of the corpus.
inline std::vector<std::string> build_answer_vocab(const Corpus& corpus) {
    std::vector<std::string> vocab;
    for (const auto& s : corpus.samples) vocab.push_back(s.ground_truth);
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    return vocab;
}

}  // namespace nslora
