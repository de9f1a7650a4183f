// nslora: neurosymbolic adapter-training loop over a hashed-feature
// reference model, with mock or HTTP-backed prompt rewriting.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nslora/config.hpp"
#include "nslora/controller.hpp"
#include "nslora/corpus.hpp"
#include "nslora/eval.hpp"
#include "nslora/http_rewriter.hpp"
#include "nslora/reward.hpp"
#include "nslora/runlog.hpp"
#include "nslora/synthetic.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::string mock_rewriter;  // hint|noop
    std::string endpoint;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "config file (key=value lines)");
    cmd->add_option("--set", opts.overrides, "override, KEY=VALUE (repeatable)");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "override seed");
    cmd->add_option("--mock-rewriter", opts.mock_rewriter, "mock rewriter strategy (hint|noop)")
        ->check(CLI::IsMember({"hint", "noop"}));
    cmd->add_option("--endpoint", opts.endpoint, "rewriter endpoint base URL");
}

nslora::RunConfig build_config(const CommonOpts& opts,
                               const std::vector<std::string>& extra_overrides = {}) {
    nslora::ConfigMap map;
    if (!opts.config_path.empty()) map = nslora::parse_config_file(opts.config_path);
    for (const auto& kv : opts.overrides) nslora::apply_override(map, kv);
    for (const auto& kv : extra_overrides) nslora::apply_override(map, kv);
    if (opts.seed) map["seed"] = std::to_string(*opts.seed);
    if (!opts.mock_rewriter.empty())
        map["rewriter"] = opts.mock_rewriter == "hint" ? "mock_hint" : "mock_noop";
    if (!opts.endpoint.empty()) {
        map["rewriter"] = "http";
        map["endpoint_url"] = opts.endpoint;
    }
    return nslora::run_config_from_map(map);
}

std::unique_ptr<nslora::RewriteClient> make_client(const nslora::RunConfig& cfg) {
    switch (cfg.rewriter) {
        case nslora::RewriterKind::MockHint:
            return std::make_unique<nslora::MockRewriter>(
                nslora::MockRewriter::Strategy::Hint, cfg.seed);
        case nslora::RewriterKind::MockNoop:
            return std::make_unique<nslora::MockRewriter>(
                nslora::MockRewriter::Strategy::Noop, cfg.seed);
        case nslora::RewriterKind::Http: {
            nslora::EndpointConfig ep;
            ep.base_url = cfg.endpoint_url;
            ep.model_name = cfg.endpoint_model;
            ep.temperature = cfg.temperature;
            ep.timeout_ms = cfg.timeout_ms;
            ep.max_retries = cfg.max_retries;
            ep.backoff_base_ms = cfg.backoff_base_ms;
            ep.api_key = nslora::api_key_from_env();
            return std::make_unique<nslora::HttpRewriter>(ep);
        }
    }
    return nullptr;
}

int cmd_train(const CommonOpts& opts, const std::string& data_path,
              const std::string& augment_path, const std::vector<std::string>& extra = {}) {
    nslora::RunConfig cfg = build_config(opts, extra);
    nslora::Corpus corpus = nslora::load_corpus(data_path);
    if (!augment_path.empty()) nslora::apply_augmented(corpus, augment_path);
    auto client = make_client(cfg);

    std::unique_ptr<nslora::RewardModel> reward;
    if (cfg.criterion == nslora::CriterionKind::RewardClassifier) {
        if (cfg.reward_model_path.empty())
            throw nslora::ConfigError("criterion reward_classifier needs reward_model_path");
        reward = std::make_unique<nslora::RewardModel>(
            nslora::RewardModel::load(cfg.reward_model_path));
    }

    nslora::RunResult result = nslora::run(cfg, std::move(corpus), *client, opts.out_dir,
                                           reward.get());
    result.log.save(opts.out_dir + "/run_log.jsonl");
    result.model.save_checkpoint(opts.out_dir + "/model.json");

    std::printf("%-6s %-10s %-10s %-9s %-9s %-9s\n", "epoch", "loss", "grad-norm", "accuracy",
                "rewrites", "accepted");
    for (const auto& st : result.stats)
        std::printf("%-6d %-10.4f %-10.4f %-9.4f %-9d %-9d\n", st.epoch, st.mean_loss,
                    st.mean_grad_norm, st.train_accuracy, st.n_rewritten,
                    st.n_accepted_rewrites);
    const auto& last = result.stats.back();
    std::printf("final: epoch=%d train_accuracy=%.4f mode=%s criterion=%s\n", last.epoch,
                last.train_accuracy, nslora::to_string(cfg.mode).c_str(),
                nslora::to_string(cfg.criterion).c_str());
    return 0;
}

int cmd_evaluate(const std::string& data_path, const std::string& model_path) {
    nslora::Corpus corpus = nslora::load_corpus(data_path);
    nslora::AdapterModel model = nslora::AdapterModel::load_checkpoint(model_path);
    if (!corpus.shared_system_prompt)
        corpus.shared_system_prompt = "answer with a single number";
    std::printf("accuracy=%.4f over %zu samples\n", nslora::evaluate(model, corpus),
                corpus.size());
    return 0;
}

int cmd_train_reward(const CommonOpts& opts, const std::string& data_path,
                     const std::string& log_path, const std::string& out_model,
                     int pairs_n, int epochs, double lr) {
    nslora::RunConfig cfg = build_config(opts);
    nslora::Corpus corpus = nslora::load_corpus(data_path);
    nslora::RunLog log = nslora::RunLog::load(log_path);

    // criterion records of the last epoch that has any
    int last_epoch = 0;
    for (const auto& e : log.events())
        if (e.value("event", "") == "criterion")
            last_epoch = std::max(last_epoch, e.at("epoch").get<int>());
    std::vector<nslora::RewardExample> examples;
    for (const auto& e : log.events()) {
        if (e.value("event", "") != "criterion") continue;
        if (e.at("epoch").get<int>() != last_epoch) continue;
        if (e.value("degenerate", false)) continue;
        const auto* s = corpus.find(e.at("sample").get<std::string>());
        if (!s) continue;
        examples.push_back({s->id, s->effective_question() + " " + s->ground_truth,
                            e.at("value").get<double>()});
    }
    auto pairs = nslora::build_pairs(examples, pairs_n, cfg.seed);
    auto trained = nslora::train_reward(pairs, epochs, lr, cfg.seed, cfg.feature_dim,
                                        cfg.hash_seed);
    trained.model.save(out_model);
    std::printf("trained reward model on %zu pairs: pairwise_accuracy=%.4f final_loss=%.4f\n",
                pairs.size(), trained.pairwise_accuracy, trained.final_loss);
    return 0;
}

int cmd_classify(const CommonOpts& opts, const std::string& data_path,
                 const std::string& reward_path, const std::string& out_file,
                 std::optional<double> tau_flag) {
    nslora::RunConfig cfg = build_config(opts);
    nslora::Corpus corpus = nslora::load_corpus(data_path);
    nslora::RewardModel reward = nslora::RewardModel::load(reward_path);

    std::vector<double> rewards;
    for (const auto& s : corpus.samples)
        rewards.push_back(reward.score(s.effective_question() + " " + s.ground_truth));
    double tau = tau_flag ? *tau_flag : nslora::reward_quantile(rewards, cfg.tau_quantile);

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_file.empty()) {
        file.open(out_file);
        if (!file) throw nslora::ConfigError("cannot write " + out_file);
        os = &file;
    }
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        auto d = nslora::route(reward, corpus.samples[i].id,
                               corpus.samples[i].effective_question(),
                               corpus.samples[i].ground_truth, tau);
        nlohmann::json j{{"sample", d.sample_id},
                         {"reward", d.reward},
                         {"route", d.route == nslora::Route::Symbolic ? "symbolic" : "numerical"},
                         {"tau", d.tau}};
        (*os) << j.dump() << "\n";
    }
    return 0;
}

int cmd_export_augmented(const std::string& checkpoint_path, const std::string& out_file) {
    auto [state, cfg] = nslora::detail::load_run_checkpoint(checkpoint_path);
    (void)cfg;
    int count = nslora::export_augmented(state.corpus, out_file);
    std::printf("exported %d augmented records to %s\n", count, out_file.c_str());
    return 0;
}

int cmd_gen_synthetic(int n, std::uint64_t seed, double style_fraction,
                      const std::string& out_file) {
    if (n < 1) throw nslora::ConfigError("--n must be >= 1");
    nslora::Corpus corpus = nslora::gen_synthetic(n, seed, style_fraction);
    nslora::save_corpus(corpus, out_file);
    std::printf("wrote %zu samples to %s\n", corpus.size(), out_file.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neurosymbolic adapter training loop"};
    app.require_subcommand(1);

    CommonOpts train_opts, reward_opts, classify_opts, twostage_opts;
    std::string data_path, augment_path;
    auto* train = app.add_subcommand("train", "run the training loop");
    add_common(train, train_opts);
    train->add_option("--data", data_path, "corpus file (one record per line)")->required();
    train->add_option("--augment", augment_path, "augmented export to overlay before training");

    std::string eval_data, eval_model;
    auto* evaluate = app.add_subcommand("evaluate", "score a model checkpoint on a corpus");
    evaluate->add_option("--data", eval_data)->required();
    evaluate->add_option("--model", eval_model, "model checkpoint file")->required();

    std::string tr_data, tr_log, tr_out = "reward_model.json";
    int tr_pairs = 500, tr_epochs = 50;
    double tr_lr = 0.5;
    auto* train_reward = app.add_subcommand("train-reward",
                                            "train the routing reward model from a run log");
    add_common(train_reward, reward_opts);
    train_reward->add_option("--data", tr_data)->required();
    train_reward->add_option("--log", tr_log, "run log with criterion records")->required();
    train_reward->add_option("--out-model", tr_out);
    train_reward->add_option("--pairs", tr_pairs);
    train_reward->add_option("--epochs", tr_epochs);
    train_reward->add_option("--lr", tr_lr);

    std::string cl_data, cl_reward, cl_out;
    std::optional<double> cl_tau;
    auto* classify = app.add_subcommand("classify", "emit per-sample routing decisions");
    add_common(classify, classify_opts);
    classify->add_option("--data", cl_data)->required();
    classify->add_option("--reward-model", cl_reward)->required();
    classify->add_option("--out-file", cl_out);
    classify->add_option("--tau", cl_tau, "fixed routing threshold (default: quantile)");

    std::string ex_checkpoint, ex_out = "augmented.jsonl";
    auto* export_aug = app.add_subcommand("export-augmented",
                                          "export revised questions from a run checkpoint");
    export_aug->add_option("--checkpoint", ex_checkpoint, "run checkpoint file")->required();
    export_aug->add_option("--out-file", ex_out);

    std::string ts_data, ts_augment;
    auto* two_stage = app.add_subcommand("two-stage",
                                         "prompt-optimize the corpus, then train numerically");
    add_common(two_stage, twostage_opts);
    two_stage->add_option("--data", ts_data)->required();

    int gs_n = 100;
    std::uint64_t gs_seed = 0;
    double gs_style = 0.4;
    std::string gs_out = "corpus.jsonl";
    auto* gen = app.add_subcommand("gen-synthetic", "generate an arithmetic QA corpus");
    gen->add_option("--n", gs_n);
    gen->add_option("--seed", gs_seed);
    gen->add_option("--style-fraction", gs_style)->check(CLI::Range(0.0, 1.0));
    gen->add_option("--out-file", gs_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) return cmd_train(train_opts, data_path, augment_path);
        if (evaluate->parsed()) return cmd_evaluate(eval_data, eval_model);
        if (train_reward->parsed())
            return cmd_train_reward(reward_opts, tr_data, tr_log, tr_out, tr_pairs, tr_epochs,
                                    tr_lr);
        if (classify->parsed())
            return cmd_classify(classify_opts, cl_data, cl_reward, cl_out, cl_tau);
        if (export_aug->parsed()) return cmd_export_augmented(ex_checkpoint, ex_out);
        if (two_stage->parsed())
            return cmd_train(twostage_opts, ts_data, "", {"mode=two_stage"});
        if (gen->parsed()) return cmd_gen_synthetic(gs_n, gs_seed, gs_style, gs_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
