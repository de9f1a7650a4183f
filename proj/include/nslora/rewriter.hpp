#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nslora/corpus.hpp"
#include "nslora/eval.hpp"
#include "nslora/hash.hpp"
#include "nslora/model.hpp"

namespace nslora {

struct RewriteError : std::runtime_error {
    enum class Kind { Transport, EmptyResponse, Precondition };
    Kind kind;
    RewriteError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct RewriteRequest {
    std::string system_prompt;
    std::string question;
    std::string model_answer;
    std::string ground_truth;
    std::optional<std::string> feedback_hint;
    int iteration = 1;
};

struct RewriteOutcome {
    std::string revised_question;
    bool accepted = false;  // model answers correctly after the rewrite
    int iterations_used = 0;
    std::vector<std::pair<std::string, std::string>> transcript;  // (request q, response)
};

struct EndpointConfig {
    std::string base_url;
    std::string model_name = "gpt-4o";
    double temperature = 0.0;
    int timeout_ms = 30000;
    int max_retries = 3;
    int backoff_base_ms = 500;
    std::string api_key;  // from NSLORA_API_KEY; never logged
};

// Instruction sent to the teacher when asking for a question rewrite.
// Versioned so transcripts can be traced to the template that produced them.
inline constexpr const char* kRewriteTemplateV1 =
    "You are a question rewriting assistant. Rewrite the question so the "
    "student model can answer it correctly. Preserve the quantity being "
    "asked. Reply with the rewritten question only.";

class RewriteClient {
public:
    virtual ~RewriteClient() = default;
    virtual std::string rewrite_question(const RewriteRequest& req) = 0;
    virtual std::string rewrite_system_prompt(const std::string& current,
                                              const std::vector<std::string>& feedback) = 0;
};

// Deterministic stand-in for the external teacher.
//   hint: restates count-valued questions in the canonical arithmetic
//         register (appending a clarifying phrase otherwise), so the
//         rewrite is learnable by the student model.
//   noop: returns the input unchanged (negative control).
class MockRewriter : public RewriteClient {
public:
    enum class Strategy { Hint, Noop };

    MockRewriter(Strategy strategy, std::uint64_t seed)
        : strategy_(strategy), seed_(seed) {}

    std::string rewrite_question(const RewriteRequest& req) override {
        if (strategy_ == Strategy::Noop) return req.question;
        static const char* phrasings[3] = {
            "simply put",
            "in plain terms",
            "stated directly",
        };
        std::uint64_t h = fnv1a64(req.question, seed_);
        std::uint64_t hi = combine_hash(h, static_cast<std::uint64_t>(req.iteration));
        std::string gt = normalize_answer(req.ground_truth);
        bool numeric = !gt.empty() && gt.size() <= 2 &&
                       gt.find_first_not_of("0123456789") == std::string::npos;
        if (numeric) {
            // Restate the question in the canonical register. The addend
            // split is drawn per question and iteration so the restated
            // corpus keeps its pair diversity, and stays within the
            // single-digit working vocabulary.
            int sum = std::stoi(gt);
            int lo = std::max(0, sum - 4), hi_d = std::min(4, sum);
            int a = lo + static_cast<int>(combine_hash(h, static_cast<std::uint64_t>(
                                                              req.iteration)) %
                                          static_cast<std::uint64_t>(hi_d - lo + 1));
            int b = sum - a;
            std::size_t p = static_cast<std::size_t>(
                (h + static_cast<std::uint64_t>(req.iteration)) % 3);
            return std::string(phrasings[p]) + " what is " + std::to_string(a) + " plus " +
                   std::to_string(b);
        }
        // Already canonical (or a free-form answer): append a clarifying
        // phrase, cycled with the iteration so retries always differ.
        return req.question + " " + phrasings[hi % 3];
    }

    std::string rewrite_system_prompt(const std::string& current,
                                      const std::vector<std::string>& feedback) override {
        if (feedback.empty()) return current;
        return current + " Work each problem step by step and state only the final answer (" +
               std::to_string(feedback.size()) + " reviewed cases).";
    }

private:
    Strategy strategy_;
    std::uint64_t seed_;
};

// Runs the bounded rewrite-until-correct loop for one misclassified sample.
// The model is read-only here; only the sample's revision state changes.
inline RewriteOutcome symbolic_update_loop(const AdapterModel& model, Corpus& corpus,
                                           Sample& sample, RewriteClient& client,
                                           int max_iters, int epoch) {
    {
        std::string answer = model.predict_answer(corpus, sample);
        if (exact_match(answer, sample.ground_truth))
            throw RewriteError(RewriteError::Kind::Precondition,
                               "sample " + sample.id + " already answered correctly");
    }
    RewriteOutcome outcome;
    std::string current = sample.effective_question();
    int applied = 0;
    for (int iter = 1; iter <= max_iters; ++iter) {
        RewriteRequest req;
        req.system_prompt = corpus.resolve_system_prompt(sample);
        req.question = current;
        req.model_answer = model.predict_answer(corpus.resolve_system_prompt(sample), current);
        req.ground_truth = sample.ground_truth;
        req.iteration = iter;
        std::string revised = client.rewrite_question(req);
        outcome.transcript.emplace_back(current, revised);
        outcome.iterations_used = iter;
        if (normalize_answer(revised) == normalize_answer(current)) {
            // refused rewrite: a failed iteration, not fatal
            continue;
        }
        current = revised;
        ++applied;
        std::string answer =
            model.predict_answer(corpus.resolve_system_prompt(sample), current);
        if (exact_match(answer, sample.ground_truth)) {
            outcome.accepted = true;
            break;
        }
    }
    outcome.revised_question = current;
    if (applied > 0) {
        sample.revised_question = current;
        sample.revision_count += applied;
        sample.last_revision_iterations = outcome.iterations_used;
        sample.epoch_revised = epoch;
    }
    return outcome;
}

struct EpochFeedbackItem {
    std::string sample_id;
    std::string original_question;
    std::string revised_question;
    std::string ground_truth;
    bool accepted = false;
};

// End-of-epoch global system prompt learning. The returned prompt takes
// effect at the next epoch. Failures keep the current prompt.
inline std::string update_system_prompt(RewriteClient& client,
                                        const std::vector<EpochFeedbackItem>& feedback,
                                        const std::string& current_prompt,
                                        bool* warned = nullptr) {
    if (warned) *warned = false;
    if (feedback.empty()) return current_prompt;
    std::vector<std::string> digest;
    digest.reserve(feedback.size());
    for (const auto& f : feedback)
        digest.push_back(f.sample_id + ": '" + f.original_question + "' -> '" +
                         f.revised_question + "' (" + (f.accepted ? "fixed" : "still wrong") +
                         ", truth " + f.ground_truth + ")");
    try {
        std::string next = client.rewrite_system_prompt(current_prompt, digest);
        if (normalize_answer(next).empty())
            throw RewriteError(RewriteError::Kind::EmptyResponse, "empty system prompt");
        return next;
    } catch (const RewriteError&) {
        if (warned) *warned = true;
        return current_prompt;
    }
}

}  // namespace nslora
