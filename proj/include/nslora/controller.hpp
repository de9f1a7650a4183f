#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nslora/config.hpp"
#include "nslora/corpus.hpp"
#include "nslora/eval.hpp"
#include "nslora/model.hpp"
#include "nslora/reward.hpp"
#include "nslora/rewriter.hpp"
#include "nslora/runlog.hpp"
#include "nslora/signals.hpp"

namespace nslora {

struct ControllerError : std::runtime_error {
    enum class Kind { EmptyCorpus, BadConfig, CheckpointCorrupt };
    Kind kind;
    ControllerError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double mean_grad_norm = 0.0;
    double train_accuracy = 0.0;
    int n_rewritten = 0;
    int n_accepted_rewrites = 0;
};

struct RunResult {
    AdapterModel model;
    Corpus corpus;  // final revision state
    RunLog log;
    std::vector<EpochStats> stats;
};

namespace detail {

struct RunState {
    AdapterModel model;
    Corpus corpus;
    std::map<std::string, double> prev_losses;  // per-sample loss of previous epoch
    std::vector<EpochStats> stats;
    int last_completed_epoch = 0;
};

// Batch order is one seeded permutation, fixed for the whole run, so
// per-sample losses align across epochs.
inline std::vector<std::size_t> run_permutation(std::uint64_t seed, std::size_t n) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

struct SamplePass {
    double loss = 0.0;
    double grad_norm = 0.0;
    bool correct = false;
};

// One numerical pass: per-sample pre-update loss/gradient records, one
// mean-reduced update per batch (unless updates are disabled).
inline std::vector<SamplePass> numerical_pass(RunState& state, const RunConfig& cfg,
                                              const std::vector<std::size_t>& perm,
                                              int epoch, bool apply_updates, RunLog& log) {
    Corpus& corpus = state.corpus;
    AdapterModel& model = state.model;
    std::vector<SamplePass> passes(corpus.size());

    const std::size_t n = corpus.size();
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
        AdapterGradients acc;
        acc.factor_down.assign(model.rank() * model.feature_dim(), 0.0);
        acc.factor_up.assign(model.answer_vocab().size() * model.rank(), 0.0);
        double batch_loss = 0.0, batch_grad = 0.0;
        for (std::size_t i = start; i < end; ++i) {
            const std::size_t idx = perm[i];
            const Sample& s = corpus.samples[idx];
            FeatureVector x = featurize(corpus.resolve_system_prompt(s),
                                        s.effective_question(), model.feature_dim(),
                                        model.hash_seed());
            int label = model.label_index(s.ground_truth);
            if (label < 0)
                throw ControllerError(ControllerError::Kind::BadConfig,
                                      "ground truth outside answer vocab: " + s.ground_truth);
            AdapterGradients g;
            GradientReport rep = model.loss_and_grad(x, static_cast<std::size_t>(label), &g);
            passes[idx] = {rep.loss, rep.grad_norm, rep.correct};
            batch_loss += rep.loss;
            batch_grad += rep.grad_norm;
            for (std::size_t j = 0; j < acc.factor_down.size(); ++j)
                acc.factor_down[j] += g.factor_down[j];
            for (std::size_t j = 0; j < acc.factor_up.size(); ++j)
                acc.factor_up[j] += g.factor_up[j];
        }
        const double inv = 1.0 / static_cast<double>(end - start);
        log.append({{"event", "batch_update"},
                    {"epoch", epoch},
                    {"batch", start / cfg.batch_size},
                    {"loss", batch_loss * inv},
                    {"grad_norm", batch_grad * inv}});
        if (apply_updates) {
            for (auto& g : acc.factor_down) g *= inv;
            for (auto& g : acc.factor_up) g *= inv;
            model.apply_update(acc, cfg.lr);
        }
    }
    return passes;
}

// Criterion signals are measured on the frozen end-of-epoch model so the
// loss-change ratio reflects model drift, not batch-timing noise.
inline std::vector<SamplePass> frozen_sweep(const RunState& state) {
    const Corpus& corpus = state.corpus;
    const AdapterModel& model = state.model;
    std::vector<SamplePass> sweep(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Sample& s = corpus.samples[i];
        FeatureVector x = featurize(corpus.resolve_system_prompt(s), s.effective_question(),
                                    model.feature_dim(), model.hash_seed());
        int label = model.label_index(s.ground_truth);
        if (label < 0)
            throw ControllerError(ControllerError::Kind::BadConfig,
                                  "ground truth outside answer vocab: " + s.ground_truth);
        GradientReport rep = model.loss_and_grad(x, static_cast<std::size_t>(label), nullptr);
        sweep[i] = {rep.loss, rep.grad_norm, rep.correct};
    }
    return sweep;
}

inline std::vector<CriterionRecord> build_records(const RunState& state, const RunConfig& cfg,
                                                  const std::vector<SamplePass>& passes,
                                                  int epoch, const RewardModel* reward) {
    std::vector<CriterionRecord> records;
    records.reserve(state.corpus.size());
    for (std::size_t i = 0; i < state.corpus.size(); ++i) {
        const Sample& s = state.corpus.samples[i];
        CriterionRecord r;
        r.sample_id = s.id;
        r.epoch = epoch;
        r.kind = cfg.criterion;
        r.loss = passes[i].loss;
        r.correct = passes[i].correct;
        switch (cfg.criterion) {
            case CriterionKind::LossChangeRatio: {
                auto it = state.prev_losses.find(s.id);
                if (it == state.prev_losses.end() || it->second <= kRatioEpsilon) {
                    r.degenerate = true;
                    r.value = 0.0;
                } else {
                    r.value = loss_change_ratio(it->second, passes[i].loss);
                }
                break;
            }
            case CriterionKind::GradNorm:
                r.value = passes[i].grad_norm;
                break;
            case CriterionKind::Random:
                r.value = random_criterion_value(cfg.seed, s.id, epoch);
                break;
            case CriterionKind::RewardClassifier: {
                if (reward) {
                    std::string answer = state.model.predict_answer(state.corpus, s);
                    r.value = reward->score(s.effective_question() + " " + answer);
                }
                break;
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

// Misclassified samples with the highest reward, up to the p budget.
inline SelectionResult reward_selection(const std::vector<CriterionRecord>& records,
                                        const SaturationPolicy& policy,
                                        std::size_t corpus_size) {
    SelectionResult result;
    std::vector<const CriterionRecord*> pool;
    for (const auto& r : records)
        if (!r.correct) pool.push_back(&r);
    result.pool_size = pool.size();
    std::sort(pool.begin(), pool.end(), [](const CriterionRecord* a, const CriterionRecord* b) {
        if (a->value != b->value) return a->value > b->value;
        return a->sample_id < b->sample_id;
    });
    const std::size_t take = std::min(selection_budget(policy, corpus_size), pool.size());
    for (std::size_t i = 0; i < take; ++i) result.selected_ids.push_back(pool[i]->sample_id);
    result.triggered = !result.selected_ids.empty();
    return result;
}

inline nlohmann::json sample_state_json(const Sample& s) {
    nlohmann::json j;
    j["id"] = s.id;
    j["question"] = s.question;
    j["ground_truth"] = s.ground_truth;
    if (s.system_prompt) j["system_prompt"] = *s.system_prompt;
    if (s.revised_question) j["revised_question"] = *s.revised_question;
    j["revision_count"] = s.revision_count;
    j["last_revision_iterations"] = s.last_revision_iterations;
    j["epoch_revised"] = s.epoch_revised;
    return j;
}

inline Sample sample_from_state_json(const nlohmann::json& j) {
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.question = j.at("question").get<std::string>();
    s.ground_truth = j.at("ground_truth").get<std::string>();
    if (j.contains("system_prompt")) s.system_prompt = j["system_prompt"].get<std::string>();
    if (j.contains("revised_question"))
        s.revised_question = j["revised_question"].get<std::string>();
    s.revision_count = j.at("revision_count").get<int>();
    s.last_revision_iterations = j.at("last_revision_iterations").get<int>();
    s.epoch_revised = j.at("epoch_revised").get<int>();
    return s;
}

inline void save_run_checkpoint(const RunState& state, const RunConfig& cfg,
                                const std::string& path) {
    nlohmann::json j;
    j["format"] = "nslora-runstate";
    j["version"] = 1;
    j["config"] = run_config_to_map(cfg);
    j["last_completed_epoch"] = state.last_completed_epoch;
    j["model"] = state.model.state_json();
    j["prev_losses"] = state.prev_losses;
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : state.corpus.samples) samples.push_back(sample_state_json(s));
    j["corpus"]["samples"] = std::move(samples);
    if (state.corpus.shared_system_prompt)
        j["corpus"]["shared_system_prompt"] = *state.corpus.shared_system_prompt;
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& st : state.stats)
        stats.push_back({{"epoch", st.epoch},
                         {"mean_loss", st.mean_loss},
                         {"mean_grad_norm", st.mean_grad_norm},
                         {"train_accuracy", st.train_accuracy},
                         {"n_rewritten", st.n_rewritten},
                         {"n_accepted_rewrites", st.n_accepted_rewrites}});
    j["stats"] = std::move(stats);
    std::ofstream out(path);
    if (!out)
        throw ControllerError(ControllerError::Kind::CheckpointCorrupt,
                              "cannot write run checkpoint: " + path);
    out << j.dump() << "\n";
}

inline std::pair<RunState, RunConfig> load_run_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ControllerError(ControllerError::Kind::CheckpointCorrupt,
                              "cannot open run checkpoint: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "nslora-runstate")
        throw ControllerError(ControllerError::Kind::CheckpointCorrupt,
                              "not a run checkpoint: " + path);
    RunConfig cfg = run_config_from_map(j.at("config").get<ConfigMap>());
    RunState state;
    state.model = AdapterModel::from_state_json(j.at("model"));
    state.prev_losses = j.at("prev_losses").get<std::map<std::string, double>>();
    state.last_completed_epoch = j.at("last_completed_epoch").get<int>();
    for (const auto& sj : j.at("corpus").at("samples"))
        state.corpus.samples.push_back(sample_from_state_json(sj));
    if (j.at("corpus").contains("shared_system_prompt"))
        state.corpus.shared_system_prompt =
            j["corpus"]["shared_system_prompt"].get<std::string>();
    for (const auto& sj : j.at("stats"))
        state.stats.push_back({sj.at("epoch").get<int>(), sj.at("mean_loss").get<double>(),
                               sj.at("mean_grad_norm").get<double>(),
                               sj.at("train_accuracy").get<double>(),
                               sj.at("n_rewritten").get<int>(),
                               sj.at("n_accepted_rewrites").get<int>()});
    return {std::move(state), cfg};
}

inline RunResult run_epochs(RunState state, const RunConfig& cfg, RewriteClient& client,
                            const std::string& out_dir, const RewardModel* reward) {
    if (state.corpus.samples.empty())
        throw ControllerError(ControllerError::Kind::EmptyCorpus, "empty corpus");
    if (cfg.criterion == CriterionKind::RewardClassifier && reward == nullptr)
        throw ControllerError(ControllerError::Kind::BadConfig,
                              "criterion reward_classifier requires a trained reward model");

    const int start_epoch = state.last_completed_epoch + 1;
    RunLog log(cfg, state.corpus.size(), start_epoch);
    const auto perm = run_permutation(cfg.seed, state.corpus.size());
    const SaturationPolicy policy = cfg.saturation_policy();

    // Two-stage baseline: one global prompt-optimization pass before any
    // numerical epoch, applied as a prefix to every question.
    if (cfg.mode == RunMode::TwoStage && start_epoch == 1) {
        std::vector<std::string> digest;
        for (const auto& s : state.corpus.samples) digest.push_back(s.effective_question());
        std::string prefix = trim(client.rewrite_system_prompt("", digest));
        int applied = 0;
        if (!prefix.empty()) {
            for (auto& s : state.corpus.samples) {
                s.revised_question = prefix + " " + s.question;
                s.revision_count = 1;
                s.last_revision_iterations = 1;
                s.epoch_revised = 0;
                ++applied;
            }
        }
        log.append({{"event", "two_stage_augment"}, {"applied", applied}, {"calls", 1}});
    }

    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        log.append({{"event", "epoch_start"},
                    {"epoch", epoch},
                    {"question_hash", state.corpus.question_text_hash()}});

        const bool apply_updates = cfg.mode != RunMode::SymbolicOnly;
        auto passes = numerical_pass(state, cfg, perm, epoch, apply_updates, log);
        log.append({{"event", "numerical_pass_end"},
                    {"epoch", epoch},
                    {"question_hash", state.corpus.question_text_hash()}});

        auto sweep = frozen_sweep(state);
        auto records = build_records(state, cfg, sweep, epoch, reward);
        for (const auto& r : records)
            log.append({{"event", "criterion"},
                        {"epoch", epoch},
                        {"sample", r.sample_id},
                        {"kind", to_string(r.kind)},
                        {"value", r.value},
                        {"loss", r.loss},
                        {"correct", r.correct},
                        {"degenerate", r.degenerate}});
        for (std::size_t i = 0; i < state.corpus.size(); ++i)
            state.prev_losses[state.corpus.samples[i].id] = sweep[i].loss;

        EpochStats stats;
        stats.epoch = epoch;
        for (const auto& p : passes) {
            stats.mean_loss += p.loss;
            stats.mean_grad_norm += p.grad_norm;
        }
        stats.mean_loss /= static_cast<double>(passes.size());
        stats.mean_grad_norm /= static_cast<double>(passes.size());

        // Saturation check / routing, then the optional symbolic phase.
        bool triggered = false;
        SelectionResult selection;
        if (cfg.mode == RunMode::SymbolicOnly) {
            triggered = true;
            selection = cfg.criterion == CriterionKind::RewardClassifier
                            ? reward_selection(records, policy, state.corpus.size())
                            : select_bottom_p(records, policy, state.corpus.size());
        } else {
            if (cfg.criterion == CriterionKind::RewardClassifier) {
                selection = reward_selection(records, policy, state.corpus.size());
                triggered = selection.triggered;
            } else {
                triggered = detect_saturation(records, policy);
                if (triggered) selection = select_bottom_p(records, policy, state.corpus.size());
            }
            log.append({{"event", "saturation_check"}, {"epoch", epoch}, {"triggered", triggered}});
        }

        std::vector<EpochFeedbackItem> feedback;
        const bool symbolic_allowed =
            cfg.mode == RunMode::Neurosymbolic || cfg.mode == RunMode::SymbolicOnly;
        if (triggered && symbolic_allowed) {
            log.append({{"event", "symbolic_phase"},
                        {"epoch", epoch},
                        {"selected", selection.selected_ids},
                        {"model_hash", state.model.parameter_hash()}});
            // apply in ascending sample id order for reproducibility
            std::vector<std::string> ordered = selection.selected_ids;
            std::sort(ordered.begin(), ordered.end());
            std::size_t total_calls = 0;
            for (const auto& id : ordered) {
                Sample* s = state.corpus.find(id);
                std::string answer = state.model.predict_answer(state.corpus, *s);
                if (exact_match(answer, s->ground_truth)) {
                    log.append({{"event", "rewrite"},
                                {"epoch", epoch},
                                {"sample", id},
                                {"skipped", true},
                                {"accepted", false},
                                {"iterations", 0},
                                {"calls", 0}});
                    continue;
                }
                Sample before = *s;
                RewriteOutcome outcome = symbolic_update_loop(state.model, state.corpus, *s,
                                                              client, cfg.max_symbolic_iters,
                                                              epoch);
                if (!outcome.accepted && cfg.revert_failed_rewrites) *s = before;
                total_calls += static_cast<std::size_t>(outcome.iterations_used);
                ++stats.n_rewritten;
                if (outcome.accepted) ++stats.n_accepted_rewrites;
                feedback.push_back({s->id, before.effective_question(),
                                    outcome.revised_question, s->ground_truth,
                                    outcome.accepted});
                log.append({{"event", "rewrite"},
                            {"epoch", epoch},
                            {"sample", id},
                            {"skipped", false},
                            {"accepted", outcome.accepted},
                            {"iterations", outcome.iterations_used},
                            {"calls", outcome.iterations_used}});
            }
            log.append({{"event", "symbolic_phase_end"},
                        {"epoch", epoch},
                        {"model_hash", state.model.parameter_hash()},
                        {"rewrite_calls", total_calls}});
        }

        stats.train_accuracy = evaluate(state.model, state.corpus);
        log.append({{"event", "eval"}, {"epoch", epoch}, {"accuracy", stats.train_accuracy}});

        // System prompt learning takes effect at the next epoch.
        if (cfg.system_prompt_learning) {
            std::string current = state.corpus.shared_system_prompt.value_or("");
            bool warned = false;
            std::string next = update_system_prompt(client, feedback, current, &warned);
            bool changed = next != current;
            if (changed) state.corpus.shared_system_prompt = next;
            log.append({{"event", "system_prompt_update"},
                        {"epoch", epoch},
                        {"changed", changed},
                        {"warned", warned},
                        {"calls", feedback.empty() ? 0 : 1}});
        }

        log.append({{"event", "epoch_stats"},
                    {"epoch", epoch},
                    {"mean_loss", stats.mean_loss},
                    {"mean_grad_norm", stats.mean_grad_norm},
                    {"train_accuracy", stats.train_accuracy},
                    {"n_rewritten", stats.n_rewritten},
                    {"n_accepted_rewrites", stats.n_accepted_rewrites}});
        state.stats.push_back(stats);
        state.last_completed_epoch = epoch;

        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_ep%03d.json", epoch);
            save_run_checkpoint(state, cfg, out_dir + "/" + name);
            log.append({{"event", "checkpoint"}, {"epoch", epoch}});
        }
    }

    if (!out_dir.empty())
        save_run_checkpoint(state, cfg, out_dir + "/checkpoint_final.json");

    RunResult result;
    result.model = std::move(state.model);
    result.corpus = std::move(state.corpus);
    result.log = std::move(log);
    result.stats = std::move(state.stats);
    return result;
}

}  // namespace detail

inline RunResult run(const RunConfig& cfg, Corpus corpus, RewriteClient& client,
                     const std::string& out_dir = "", const RewardModel* reward = nullptr) {
    if (corpus.samples.empty())
        throw ControllerError(ControllerError::Kind::EmptyCorpus, "empty corpus");
    detail::RunState state;
    state.corpus = std::move(corpus);
    if (!state.corpus.shared_system_prompt)
        state.corpus.shared_system_prompt = cfg.system_prompt;
    state.model = AdapterModel(build_answer_vocab(state.corpus), cfg.feature_dim, cfg.rank,
                               cfg.alpha, cfg.hash_seed, cfg.seed);
    return detail::run_epochs(std::move(state), cfg, client, out_dir, reward);
}

inline RunResult resume_run(const std::string& checkpoint_path, RewriteClient& client,
                            const std::string& out_dir = "",
                            const RewardModel* reward = nullptr) {
    auto [state, cfg] = detail::load_run_checkpoint(checkpoint_path);
    return detail::run_epochs(std::move(state), cfg, client, out_dir, reward);
}

}  // namespace nslora
