#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "nslora/signals.hpp"

using namespace nslora;

namespace {

CriterionRecord rec(std::string id, double value, bool correct = false,
                    bool degenerate = false) {
    CriterionRecord r;
    r.sample_id = std::move(id);
    r.value = value;
    r.correct = correct;
    r.degenerate = degenerate;
    return r;
}

// Exhaustive reference: filter, key, stable sort, slice.
std::vector<std::string> oracle_select(const std::vector<CriterionRecord>& records,
                                       const SaturationPolicy& policy,
                                       std::size_t corpus_size) {
    struct K {
        double key;
        std::string id;
    };
    std::vector<K> pool;
    for (const auto& r : records) {
        if (policy.kind == CriterionKind::Random) {
            pool.push_back({r.value, r.sample_id});
        } else if (!r.correct && !r.degenerate) {
            double key = r.value;
            if (policy.kind == CriterionKind::LossChangeRatio &&
                policy.ranking == RatioRanking::AbsNearZero)
                key = std::abs(key);
            pool.push_back({key, r.sample_id});
        }
    }
    std::sort(pool.begin(), pool.end(), [](const K& a, const K& b) {
        return a.key != b.key ? a.key < b.key : a.id < b.id;
    });
    std::size_t take = std::min(selection_budget(policy, corpus_size), pool.size());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < take; ++i) ids.push_back(pool[i].id);
    return ids;
}

}  // namespace

TEST_CASE("loss_change_ratio matches its definition", "[signals]") {
    CHECK(loss_change_ratio(2.0, 1.0) == -0.5);
    CHECK(loss_change_ratio(1.0, 1.0) == 0.0);
    CHECK(loss_change_ratio(0.5, 1.0) == 1.0);
    try {
        loss_change_ratio(0.0, 1.0);
        FAIL("expected SignalError");
    } catch (const SignalError& e) {
        CHECK(e.kind == SignalError::Kind::DegenerateDenominator);
    }
}

TEST_CASE("random criterion values are deterministic and uniform-range", "[signals]") {
    double v = random_criterion_value(7, "q0001", 3);
    CHECK(v == random_criterion_value(7, "q0001", 3));
    CHECK(v != random_criterion_value(7, "q0001", 4));
    CHECK(v != random_criterion_value(8, "q0001", 3));
    for (int e = 0; e < 100; ++e) {
        double u = random_criterion_value(1, "s", e);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("detect_saturation per criterion kind", "[signals]") {
    SaturationPolicy policy;
    policy.k = 0.05;
    policy.min_misclassified = 1;

    SECTION("empty epoch is an error") {
        try {
            detect_saturation({}, policy);
            FAIL("expected SignalError");
        } catch (const SignalError& e) {
            CHECK(e.kind == SignalError::Kind::EmptyEpoch);
        }
    }
    SECTION("loss_change_ratio: misclassified sample within k of zero triggers") {
        policy.kind = CriterionKind::LossChangeRatio;
        CHECK_FALSE(detect_saturation({rec("a", 0.2), rec("b", -0.3)}, policy));
        CHECK(detect_saturation({rec("a", 0.2), rec("b", -0.04)}, policy));
        CHECK(detect_saturation({rec("a", 0.05)}, policy));  // boundary inclusive
        // correct or degenerate records cannot trigger
        CHECK_FALSE(detect_saturation({rec("a", 0.0, true), rec("b", 0.0, false, true)}, policy));
        policy.min_misclassified = 2;
        CHECK_FALSE(detect_saturation({rec("a", 0.01), rec("b", 0.5)}, policy));
        CHECK(detect_saturation({rec("a", 0.01), rec("b", -0.02)}, policy));
    }
    SECTION("grad_norm: mean below k triggers") {
        policy.kind = CriterionKind::GradNorm;
        CHECK(detect_saturation({rec("a", 0.01), rec("b", 0.02)}, policy));
        CHECK_FALSE(detect_saturation({rec("a", 0.01), rec("b", 0.2)}, policy));
    }
    SECTION("random: always triggers; reward_classifier: never here") {
        policy.kind = CriterionKind::Random;
        CHECK(detect_saturation({rec("a", 0.99)}, policy));
        policy.kind = CriterionKind::RewardClassifier;
        CHECK_FALSE(detect_saturation({rec("a", 0.0)}, policy));
    }
}

TEST_CASE("selection budget is ceil(p * base)", "[signals]") {
    SaturationPolicy policy;
    policy.p = 0.1;
    CHECK(selection_budget(policy, 400) == 40);
    CHECK(selection_budget(policy, 401) == 41);
    CHECK(selection_budget(policy, 0) == 0);
    policy.base = SelectionBase::Batch;
    policy.batch_size = 8;
    CHECK(selection_budget(policy, 400) == 1);  // ceil(0.1 * 8)
    CHECK(selection_budget(policy, 4) == 1);    // batch capped at corpus
}

TEST_CASE("select_bottom_p basics: filtering, abs ranking, tie order", "[signals]") {
    SaturationPolicy policy;
    policy.kind = CriterionKind::LossChangeRatio;
    policy.p = 0.5;

    std::vector<CriterionRecord> records = {
        rec("d", -0.01), rec("a", 0.02),  rec("b", -0.02),
        rec("c", 0.9),   rec("e", 0.0, true),  // correct, excluded
        rec("f", 0.0, false, true),            // degenerate, excluded
    };
    auto result = select_bottom_p(records, policy, records.size());
    CHECK(result.triggered);
    CHECK(result.pool_size == 4);
    // budget ceil(0.5*6)=3; |−0.01| < |0.02| == |−0.02| (tie by id: a before b)
    CHECK(result.selected_ids == std::vector<std::string>{"d", "a", "b"});

    policy.ranking = RatioRanking::Signed;
    auto signed_result = select_bottom_p(records, policy, records.size());
    CHECK(signed_result.selected_ids == std::vector<std::string>{"b", "d", "a"});
}

TEST_CASE("select_bottom_p random criterion uses the full corpus", "[signals]") {
    SaturationPolicy policy;
    policy.kind = CriterionKind::Random;
    policy.p = 0.25;
    std::vector<CriterionRecord> records = {rec("a", 0.9, true), rec("b", 0.1), rec("c", 0.5)};
    auto result = select_bottom_p(records, policy, records.size());
    CHECK(result.pool_size == 3);  // correct samples stay eligible
    CHECK(result.selected_ids == std::vector<std::string>{"b"});
}

TEST_CASE("select_bottom_p equals the sort-and-slice oracle on random corpora",
          "[signals][oracle]") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size_d(1, 100);
    std::uniform_real_distribution<double> val_d(-1.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 3);
    std::uniform_real_distribution<double> p_d(0.0, 1.0);

    for (int trial = 0; trial < 1000; ++trial) {
        SaturationPolicy policy;
        switch (coin(rng)) {
            case 0: policy.kind = CriterionKind::LossChangeRatio; break;
            case 1: policy.kind = CriterionKind::GradNorm; break;
            case 2: policy.kind = CriterionKind::Random; break;
            default:
                policy.kind = CriterionKind::LossChangeRatio;
                policy.ranking = RatioRanking::Signed;
        }
        policy.p = p_d(rng);
        if (coin(rng) == 0) {
            policy.base = SelectionBase::Batch;
            policy.batch_size = 1 + coin(rng) * 4;
        }
        int n = size_d(rng);
        std::vector<CriterionRecord> records;
        for (int i = 0; i < n; ++i) {
            // quantized values force frequent ties
            double v = std::round(val_d(rng) * 4.0) / 4.0;
            records.push_back(rec("s" + std::to_string(i), v, coin(rng) == 0,
                                  coin(rng) == 1));
        }
        auto got = select_bottom_p(records, policy, records.size());
        auto want = oracle_select(records, policy, records.size());
        REQUIRE(got.selected_ids == want);
    }
}
