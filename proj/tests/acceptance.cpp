// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Runs fully offline with the deterministic mock rewriter.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nslora/controller.hpp"
#include "nslora/synthetic.hpp"

using namespace nslora;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail,
            double seconds) {
    std::printf("%s  %-28s %s  (%.1fs)\n", ok ? "PASS" : "FAIL", name.c_str(),
                detail.c_str(), seconds);
    if (!ok) ++g_failures;
}

double now_s() {
    using clock = std::chrono::steady_clock;
    static const auto t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// ---- criterion 1: gradient oracle --------------------------------------

bool model_gradient_oracle(std::string& detail) {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        AdapterModel m({"0", "1", "2", "3"}, 24, 3, 1.5, 11, 500 + trial);
        FeatureVector x(m.feature_dim());
        for (auto& v : x) v = u(rng);
        std::size_t label = rng() % 4;
        if (trial % 2) {  // leave the zero-up-factor point
            AdapterGradients warm;
            m.loss_and_grad(x, label, &warm);
            m.apply_update(warm, 0.3);
        }
        AdapterGradients g;
        m.loss_and_grad(x, label, &g);
        auto fd = [&](bool up, std::size_t i) {
            AdapterGradients step;
            step.factor_down.assign(g.factor_down.size(), 0.0);
            step.factor_up.assign(g.factor_up.size(), 0.0);
            auto& coord = up ? step.factor_up[i] : step.factor_down[i];
            AdapterModel plus = m, minus = m;
            coord = -h;
            plus.apply_update(step, 1.0);
            coord = h;
            minus.apply_update(step, 1.0);
            return (plus.loss_and_grad(x, label).loss - minus.loss_and_grad(x, label).loss) /
                   (2.0 * h);
        };
        for (std::size_t i = 0; i < g.factor_down.size(); ++i)
            worst = std::max(worst, std::abs(g.factor_down[i] - fd(false, i)));
        for (std::size_t i = 0; i < g.factor_up.size(); ++i)
            worst = std::max(worst, std::abs(g.factor_up[i] - fd(true, i)));
    }
    detail = "model max err " + std::to_string(worst);
    return worst < 1e-6;
}

bool reward_gradient_oracle(std::string& detail) {
    std::mt19937_64 rng(102);
    double worst = 0.0;
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        RewardModel m(24, trial);
        PreferencePair pair{"tok" + std::to_string(rng() % 40) + " good",
                            "tok" + std::to_string(rng() % 40) + " bad", 1.0};
        RewardGradients warm;
        pairwise_loss(m, pair, &warm);
        m.apply_update(warm, 0.7);
        RewardGradients g;
        pairwise_loss(m, pair, &g);
        for (std::size_t i = 0; i < m.feature_dim(); ++i) {
            RewardGradients step;
            step.weights.assign(m.feature_dim(), 0.0);
            RewardModel plus = m, minus = m;
            step.weights[i] = -h;
            plus.apply_update(step, 1.0);
            step.weights[i] = h;
            minus.apply_update(step, 1.0);
            double fd = (pairwise_loss(plus, pair) - pairwise_loss(minus, pair)) / (2.0 * h);
            worst = std::max(worst, std::abs(g.weights[i] - fd));
        }
    }
    detail += ", reward max err " + std::to_string(worst);
    return worst < 1e-6;
}

// ---- criterion 2: selection oracle -------------------------------------

std::vector<std::string> oracle_select(const std::vector<CriterionRecord>& records,
                                       const SaturationPolicy& policy) {
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
    std::size_t take = std::min(selection_budget(policy, records.size()), pool.size());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < take; ++i) ids.push_back(pool[i].id);
    return ids;
}

bool selection_oracle(std::string& detail) {
    std::mt19937_64 rng(103);
    std::uniform_int_distribution<int> size_d(1, 100);
    std::uniform_real_distribution<double> val_d(-1.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 3);
    std::uniform_real_distribution<double> p_d(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        SaturationPolicy policy;
        policy.kind = std::array{CriterionKind::LossChangeRatio, CriterionKind::GradNorm,
                                 CriterionKind::Random,
                                 CriterionKind::LossChangeRatio}[coin(rng)];
        if (coin(rng) == 0) policy.ranking = RatioRanking::Signed;
        policy.p = p_d(rng);
        std::vector<CriterionRecord> records;
        int n = size_d(rng);
        for (int i = 0; i < n; ++i) {
            CriterionRecord r;
            r.sample_id = "s" + std::to_string(i);
            r.value = std::round(val_d(rng) * 4.0) / 4.0;  // quantized: frequent ties
            r.correct = coin(rng) == 0;
            r.degenerate = coin(rng) == 1;
            records.push_back(r);
        }
        auto got = select_bottom_p(records, policy, records.size());
        if (got.selected_ids != oracle_select(records, policy)) {
            detail = "mismatch at trial " + std::to_string(trial);
            return false;
        }
    }
    detail = "1000 corpora matched";
    return true;
}

// ---- criterion 3: schedule faithfulness --------------------------------

bool schedule_faithfulness(std::string& detail) {
    std::mt19937_64 rng(104);
    for (int trial = 0; trial < 50; ++trial) {
        RunConfig cfg;
        cfg.epochs = 2 + static_cast<int>(rng() % 3);
        cfg.lr = 0.1 + 0.4 * u01_from_hash(rng());
        cfg.batch_size = 1 + static_cast<int>(rng() % 12);
        cfg.feature_dim = 128;
        cfg.rank = 3;
        cfg.alpha = 1.0;
        cfg.seed = rng();
        cfg.p = 0.05 + 0.3 * u01_from_hash(rng());
        cfg.k = 0.01 + 0.2 * u01_from_hash(rng());
        cfg.criterion = std::array{CriterionKind::LossChangeRatio, CriterionKind::GradNorm,
                                   CriterionKind::Random,
                                   CriterionKind::RewardClassifier}[rng() % 4];
        cfg.mode = std::array{RunMode::Neurosymbolic, RunMode::NumericalOnly,
                              RunMode::SymbolicOnly, RunMode::TwoStage}[rng() % 4];
        cfg.ratio_ranking = rng() % 2 ? RatioRanking::Signed : RatioRanking::AbsNearZero;
        cfg.selection_base = rng() % 2 ? SelectionBase::Batch : SelectionBase::Corpus;
        cfg.revert_failed_rewrites = rng() % 2 == 0;
        cfg.system_prompt_learning = rng() % 2 == 0;
        cfg.max_symbolic_iters = 1 + static_cast<int>(rng() % 3);

        Corpus corpus = gen_synthetic(16 + static_cast<int>(rng() % 24), rng(), 0.4);
        MockRewriter client(rng() % 2 ? MockRewriter::Strategy::Hint
                                      : MockRewriter::Strategy::Noop,
                            cfg.seed);
        RewardModel reward(cfg.feature_dim, cfg.hash_seed);
        RunResult result = run(cfg, corpus, client, "",
                               cfg.criterion == CriterionKind::RewardClassifier ? &reward
                                                                                : nullptr);
        auto violations = validate_log(result.log);
        if (!violations.empty()) {
            detail = "config " + std::to_string(trial) + ": " + violations.front();
            return false;
        }
    }
    detail = "50 random configs replayed cleanly";
    return true;
}

// ---- criterion 4: determinism ------------------------------------------

bool determinism(std::string& detail) {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "nslora_acceptance_det";
    fs::remove_all(base);
    fs::create_directories(base);
    Corpus corpus = gen_synthetic(60, 5, 0.4);
    RunConfig cfg;
    cfg.epochs = 5;
    cfg.lr = 0.5;
    cfg.batch_size = 8;
    cfg.feature_dim = 512;
    cfg.rank = 6;
    cfg.alpha = 1.5;
    cfg.seed = 7;

    auto run_once = [&](const std::string& dir) {
        MockRewriter client(MockRewriter::Strategy::Hint, cfg.seed);
        return run(cfg, corpus, client, (base / dir).string());
    };
    RunResult a = run_once("a");
    RunResult b = run_once("b");
    bool ok = a.log.serialize() == b.log.serialize() &&
              read_file((base / "a/checkpoint_final.json").string()) ==
                  read_file((base / "b/checkpoint_final.json").string());
    detail = ok ? "repeat runs bitwise identical" : "repeat runs diverged";
    if (ok) {
        MockRewriter client(MockRewriter::Strategy::Hint, cfg.seed);
        resume_run((base / "a/checkpoint_ep003.json").string(), client,
                   (base / "resumed").string());
        ok = read_file((base / "a/checkpoint_final.json").string()) ==
             read_file((base / "resumed/checkpoint_final.json").string());
        detail = ok ? "repeat and resumed runs bitwise identical" : "resume diverged";
    }
    fs::remove_all(base);
    return ok;
}

// ---- criteria 5 and 7: mechanism experiment + augmentation reuse -------

RunConfig mechanism_config(RunMode mode, CriterionKind criterion, std::uint64_t model_seed) {
    RunConfig cfg;
    cfg.epochs = 10;
    cfg.lr = 0.5;
    cfg.batch_size = 8;
    cfg.feature_dim = 4096;
    cfg.rank = 9;
    cfg.alpha = 2.0;
    cfg.seed = model_seed;
    cfg.p = 0.1;
    cfg.k = 0.05;
    cfg.mode = mode;
    cfg.criterion = criterion;
    return cfg;
}

double held_accuracy(const RunResult& result, Corpus held) {
    held.shared_system_prompt = result.corpus.shared_system_prompt;
    return evaluate(result.model, held);
}

// Epoch stats of the arm, keyed by epoch, plus the first triggered epoch.
struct ArmTrace {
    std::vector<std::pair<int, double>> epoch_loss;
    int first_trigger = 0;  // 0 = never
};

ArmTrace trace_of(const RunLog& log) {
    ArmTrace t;
    for (const auto& e : log.events()) {
        const std::string type = e.value("event", "");
        if (type == "epoch_stats")
            t.epoch_loss.emplace_back(e.at("epoch").get<int>(),
                                      e.at("mean_loss").get<double>());
        else if (type == "saturation_check" && !t.first_trigger &&
                 e.at("triggered").get<bool>())
            t.first_trigger = e.at("epoch").get<int>();
    }
    return t;
}

struct MechanismOutcome {
    bool ordering_ok = false;
    bool pre_trigger_identical = false;
    double acc_numerical = 0.0, acc_ns3 = 0.0, acc_ns1 = 0.0, acc_symbolic = 0.0;
    Corpus ns3_corpus;  // final revision state, reused by criterion 7
};

MechanismOutcome run_mechanism(std::uint64_t gen_seed) {
    const std::uint64_t kModelSeed = 7, kMockSeed = 7;
    Corpus train = gen_synthetic(400, gen_seed, 0.4);
    Corpus held = gen_synthetic(100, gen_seed + 1, 0.4);

    struct Arm {
        RunMode mode;
        CriterionKind criterion;
    };
    const Arm arms[4] = {{RunMode::NumericalOnly, CriterionKind::LossChangeRatio},
                         {RunMode::Neurosymbolic, CriterionKind::LossChangeRatio},
                         {RunMode::Neurosymbolic, CriterionKind::Random},
                         {RunMode::SymbolicOnly, CriterionKind::LossChangeRatio}};
    double acc[4];
    ArmTrace traces[4];
    MechanismOutcome out;
    for (int i = 0; i < 4; ++i) {
        RunConfig cfg = mechanism_config(arms[i].mode, arms[i].criterion, kModelSeed);
        MockRewriter client(MockRewriter::Strategy::Hint, kMockSeed);
        RunResult result = run(cfg, train, client);
        acc[i] = held_accuracy(result, held);
        traces[i] = trace_of(result.log);
        if (i == 1) out.ns3_corpus = result.corpus;
    }
    out.acc_numerical = acc[0];
    out.acc_ns3 = acc[1];
    out.acc_ns1 = acc[2];
    out.acc_symbolic = acc[3];
    out.ordering_ok =
        acc[1] >= acc[0] + 0.05 - 1e-9 && acc[1] >= acc[2] - 1e-9;

    // the numerically-updating arms must match exactly until NS(3) first
    // triggers a symbolic phase
    out.pre_trigger_identical = true;
    const int cut = traces[1].first_trigger;
    for (const auto& [epoch, loss] : traces[1].epoch_loss) {
        if (cut && epoch >= cut) continue;
        for (int other : {0, 2}) {
            if (other == 2 && traces[2].first_trigger && epoch >= traces[2].first_trigger)
                continue;
            for (const auto& [e2, l2] : traces[other].epoch_loss)
                if (e2 == epoch && l2 != loss) out.pre_trigger_identical = false;
        }
    }
    return out;
}

// Criterion 7 for one generator seed: fresh model fine-tuned on the
// overlaid augmented corpus vs. the original corpus.
bool augmentation_reuse(std::uint64_t gen_seed, const Corpus& ns3_corpus, double& margin) {
    namespace fs = std::filesystem;
    const std::uint64_t kFreshSeed = 13, kMockSeed = 7;
    Corpus train = gen_synthetic(400, gen_seed, 0.4);
    Corpus held = gen_synthetic(100, gen_seed + 1, 0.4);

    const std::string aug_path =
        (fs::temp_directory_path() / ("nslora_acc_aug_" + std::to_string(gen_seed) + ".jsonl"))
            .string();
    export_augmented(ns3_corpus, aug_path);
    Corpus merged = train;
    apply_augmented(merged, aug_path);
    fs::remove(aug_path);

    RunConfig cfg = mechanism_config(RunMode::NumericalOnly, CriterionKind::LossChangeRatio,
                                     kFreshSeed);
    MockRewriter c1(MockRewriter::Strategy::Hint, kMockSeed);
    double aug_acc = held_accuracy(run(cfg, merged, c1), held);
    MockRewriter c2(MockRewriter::Strategy::Hint, kMockSeed);
    double orig_acc = held_accuracy(run(cfg, train, c2), held);
    margin = aug_acc - orig_acc;
    return aug_acc >= orig_acc + 0.03 - 1e-9;
}

// ---- criterion 6: reward classifier ------------------------------------

bool reward_classifier(std::string& detail) {
    std::mt19937_64 rng(106);
    std::vector<RewardExample> examples;
    for (int i = 0; i < 120; ++i) {
        bool pos = i % 2 == 0;
        examples.push_back({"e" + std::to_string(i),
                            "question " + std::to_string(rng() % 60) + " answer " +
                                std::to_string(rng() % 10) + (pos ? " stylemarker" : ""),
                            pos ? 1.0 : 0.0});
    }
    auto pairs = build_pairs(examples, 400, 106);
    auto trained = train_reward(pairs, 30, 0.5, 106, 512, 9);
    if (trained.pairwise_accuracy < 0.95) {
        detail = "pairwise accuracy " + std::to_string(trained.pairwise_accuracy);
        return false;
    }
    std::vector<std::string> held;
    for (int i = 0; i < 100; ++i)
        held.push_back("held question " + std::to_string(rng() % 100) +
                       (rng() % 10 == 0 ? " stylemarker" : ""));
    std::vector<double> scores;
    for (const auto& t : held) scores.push_back(trained.model.score(t));
    double tau = reward_quantile(scores, 0.9);
    int symbolic = 0;
    for (const auto& t : held)
        if (route(trained.model, "x", t, "", tau).route == Route::Symbolic) ++symbolic;
    std::ostringstream os;
    os << "pairwise acc " << trained.pairwise_accuracy << ", routed " << symbolic << "/100";
    detail = os.str();
    return symbolic >= 7 && symbolic <= 13;
}

// ---- criterion 8: trivial values ---------------------------------------

bool trivial_values(std::string& detail) {
    bool ok = loss_change_ratio(2.0, 1.0) == -0.5;

    RewardModel zero(64, 5);
    ok = ok && std::abs(pairwise_loss(zero, {"p", "n", 1.0}) - std::log(2.0)) < 1e-12;

    AdapterModel fresh({"a", "b", "c"}, 48, 2, 3.0, 11, 77);
    std::mt19937_64 rng(108);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FeatureVector x(fresh.feature_dim());
    for (auto& v : x) v = u(rng);
    auto logits = fresh.forward(x);
    const auto& w0 = fresh.base_weights();
    for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < fresh.feature_dim(); ++j)
            acc += w0[c * fresh.feature_dim() + j] * x[j];
        ok = ok && std::abs(logits[c] - acc) < 1e-12;
    }
    detail = "ratio/ln2/fresh-forward exact";
    return ok;
}

// ---- calibration invariant (generator contract) ------------------------

bool calibration_invariant(std::string& detail) {
    Corpus train = gen_synthetic(400, 7, 0.1);
    RunConfig cfg = mechanism_config(RunMode::NumericalOnly, CriterionKind::LossChangeRatio, 7);
    MockRewriter client(MockRewriter::Strategy::Hint, 7);
    RunResult result = run(cfg, train, client);
    int plain_hits = 0, plain_n = 0, obf_hits = 0, obf_n = 0;
    for (const auto& s : result.corpus.samples) {
        bool hit = exact_match(result.model.predict_answer(result.corpus, s), s.ground_truth);
        if (s.question.rfind("riddle", 0) == 0) {
            ++obf_n;
            obf_hits += hit;
        } else {
            ++plain_n;
            plain_hits += hit;
        }
    }
    double plain = static_cast<double>(plain_hits) / plain_n;
    double obf = obf_n ? static_cast<double>(obf_hits) / obf_n : 0.0;
    std::ostringstream os;
    os << "plain " << plain << " (>=0.90), obfuscated " << obf << " (<=0.60)";
    detail = os.str();
    return plain >= 0.90 && obf <= 0.60;
}

}  // namespace

int main() {
    std::string detail;
    double t0, t1;

    t0 = now_s();
    bool g1 = model_gradient_oracle(detail);
    bool g2 = reward_gradient_oracle(detail);
    t1 = now_s();
    report("1 gradient-oracle", g1 && g2 && (t1 - t0) < 10.0, detail, t1 - t0);

    t0 = now_s();
    bool sel = selection_oracle(detail);
    t1 = now_s();
    report("2 selection-oracle", sel && (t1 - t0) < 5.0, detail, t1 - t0);

    t0 = now_s();
    bool sched = schedule_faithfulness(detail);
    t1 = now_s();
    report("3 schedule-faithfulness", sched, detail, t1 - t0);

    t0 = now_s();
    bool det = determinism(detail);
    t1 = now_s();
    report("4 determinism", det, detail, t1 - t0);

    // criteria 5 and 7 share the five mechanism runs
    const std::uint64_t gen_seeds[5] = {7, 17, 57, 87, 147};
    t0 = now_s();
    int ordering_pass = 0, identical_pass = 0, reuse_pass = 0;
    std::ostringstream mech_detail, reuse_detail;
    std::vector<Corpus> ns3_corpora;
    for (std::uint64_t gs : gen_seeds) {
        MechanismOutcome out = run_mechanism(gs);
        ordering_pass += out.ordering_ok;
        identical_pass += out.pre_trigger_identical;
        ns3_corpora.push_back(std::move(out.ns3_corpus));
        mech_detail << " s" << gs << "[num " << out.acc_numerical << " ns3 " << out.acc_ns3
                    << " ns1 " << out.acc_ns1 << " sym " << out.acc_symbolic << "]";
    }
    t1 = now_s();
    {
        std::ostringstream os;
        os << "ordering " << ordering_pass << "/5, pre-trigger identical " << identical_pass
           << "/5:" << mech_detail.str();
        report("5 mechanism-experiment",
               ordering_pass >= 4 && identical_pass == 5 && (t1 - t0) < 120.0, os.str(),
               t1 - t0);
    }

    t0 = now_s();
    bool rc = reward_classifier(detail);
    t1 = now_s();
    report("6 reward-classifier", rc, detail, t1 - t0);

    t0 = now_s();
    for (int i = 0; i < 5; ++i) {
        double margin = 0.0;
        reuse_pass += augmentation_reuse(gen_seeds[i], ns3_corpora[i], margin);
        reuse_detail << " s" << gen_seeds[i] << "[" << (margin >= 0 ? "+" : "") << margin
                     << "]";
    }
    t1 = now_s();
    report("7 augmentation-reuse", reuse_pass >= 4,
           std::to_string(reuse_pass) + "/5 margins >= 0.03:" + reuse_detail.str(), t1 - t0);

    t0 = now_s();
    bool triv = trivial_values(detail);
    t1 = now_s();
    report("8 trivial-values", triv, detail, t1 - t0);

    t0 = now_s();
    bool calib = calibration_invariant(detail);
    t1 = now_s();
    report("9 generator-calibration", calib, detail, t1 - t0);

    if (g_failures) {
        std::printf("ACCEPTANCE: %d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("ACCEPTANCE: all criteria passed\n");
    return 0;
}
