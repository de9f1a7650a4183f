#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nslora/hash.hpp"

namespace nslora {

struct SignalError : std::runtime_error {
    enum class Kind { DegenerateDenominator, EmptyEpoch };
    Kind kind;
    SignalError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

enum class CriterionKind { LossChangeRatio, GradNorm, Random, RewardClassifier };

inline std::string to_string(CriterionKind k) {
    switch (k) {
        case CriterionKind::LossChangeRatio: return "loss_change_ratio";
        case CriterionKind::GradNorm: return "grad_norm";
        case CriterionKind::Random: return "random";
        case CriterionKind::RewardClassifier: return "reward_classifier";
    }
    return "?";
}

struct CriterionRecord {
    std::string sample_id;
    int epoch = 0;
    CriterionKind kind = CriterionKind::LossChangeRatio;
    double value = 0.0;
    double loss = 0.0;
    bool correct = false;
    bool degenerate = false;  // no usable previous loss; excluded from ranking
};

enum class RatioRanking { AbsNearZero, Signed };
enum class SelectionBase { Corpus, Batch };

struct SaturationPolicy {
    CriterionKind kind = CriterionKind::LossChangeRatio;
    double k = 0.05;
    double p = 0.1;
    int min_misclassified = 1;
    RatioRanking ranking = RatioRanking::AbsNearZero;
    SelectionBase base = SelectionBase::Corpus;
    int batch_size = 8;  // only used when base == Batch
};

struct SelectionResult {
    std::vector<std::string> selected_ids;  // ascending by criterion value, ties by id
    std::size_t pool_size = 0;
    bool triggered = false;
};

inline constexpr double kRatioEpsilon = 1e-9;

inline double loss_change_ratio(double prev_loss, double cur_loss) {
    if (prev_loss <= kRatioEpsilon)
        throw SignalError(SignalError::Kind::DegenerateDenominator,
                          "previous loss too small for ratio");
    return (cur_loss - prev_loss) / prev_loss;
}

// Stateless seeded stream for the random criterion: one draw per
// (sample, epoch), uniform in [0, 1).
inline double random_criterion_value(std::uint64_t seed, const std::string& sample_id,
                                     int epoch) {
    std::uint64_t h = fnv1a64(sample_id, seed ^ 0xc81c5e1ec7ed0ull);
    h = combine_hash(h, static_cast<std::uint64_t>(epoch) * 0x9e3779b97f4a7c15ull);
    return u01_from_hash(h);
}

inline bool detect_saturation(const std::vector<CriterionRecord>& records,
                              const SaturationPolicy& policy) {
    if (records.empty())
        throw SignalError(SignalError::Kind::EmptyEpoch, "no criterion records in epoch");
    switch (policy.kind) {
        case CriterionKind::Random:
            return true;  // criterion (1) rewrites at every epoch
        case CriterionKind::GradNorm: {
            double sum = 0.0;
            for (const auto& r : records) sum += r.value;
            return sum / static_cast<double>(records.size()) < policy.k;
        }
        case CriterionKind::LossChangeRatio: {
            int hit = 0;
            for (const auto& r : records)
                if (!r.correct && !r.degenerate && std::abs(r.value) <= policy.k) ++hit;
            return hit >= policy.min_misclassified;
        }
        case CriterionKind::RewardClassifier:
            // Routed per sample by the controller, not via this check.
            return false;
    }
    return false;
}

inline std::size_t selection_budget(const SaturationPolicy& policy, std::size_t corpus_size) {
    double base = policy.base == SelectionBase::Corpus
                      ? static_cast<double>(corpus_size)
                      : static_cast<double>(std::min<std::size_t>(policy.batch_size, corpus_size));
    return static_cast<std::size_t>(std::ceil(policy.p * base));
}

inline SelectionResult select_bottom_p(const std::vector<CriterionRecord>& records,
                                       const SaturationPolicy& policy,
                                       std::size_t corpus_size) {
    SelectionResult result;
    result.triggered = true;
    const std::size_t budget = selection_budget(policy, corpus_size);

    struct Keyed {
        double key;
        const CriterionRecord* rec;
    };
    std::vector<Keyed> pool;
    for (const auto& r : records) {
        if (policy.kind == CriterionKind::Random) {
            pool.push_back({r.value, &r});  // full corpus, pre-drawn uniform values
        } else if (!r.correct && !r.degenerate) {
            double key = r.value;
            if (policy.kind == CriterionKind::LossChangeRatio &&
                policy.ranking == RatioRanking::AbsNearZero)
                key = std::abs(key);
            pool.push_back({key, &r});
        }
    }
    result.pool_size = pool.size();
    std::sort(pool.begin(), pool.end(), [](const Keyed& a, const Keyed& b) {
        if (a.key != b.key) return a.key < b.key;
        return a.rec->sample_id < b.rec->sample_id;
    });
    const std::size_t take = std::min(budget, pool.size());
    result.selected_ids.reserve(take);
    for (std::size_t i = 0; i < take; ++i) result.selected_ids.push_back(pool[i].rec->sample_id);
    return result;
}

}  // namespace nslora
