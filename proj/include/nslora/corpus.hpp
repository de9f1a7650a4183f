#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "nslora/hash.hpp"

namespace nslora {

struct CorpusError : std::runtime_error {
    enum class Kind { MalformedRecord, DuplicateId, Io };
    Kind kind;
    int line_no = 0;  // for MalformedRecord

    CorpusError(Kind k, const std::string& msg, int line = 0)
        : std::runtime_error(msg), kind(k), line_no(line) {}
};

// One QA record: system prompt P, question Q, ground truth A*.
// `question` is immutable after load; symbolic edits land in
// `revised_question`, which shadows it for all downstream consumers.
struct Sample {
    std::string id;
    std::optional<std::string> system_prompt;
    std::string question;
    std::string ground_truth;

    std::optional<std::string> revised_question;
    int revision_count = 0;
    int last_revision_iterations = 0;  // iterations used by the most recent rewrite loop
    int epoch_revised = 0;             // epoch of the most recent rewrite

    const std::string& effective_question() const {
        return revised_question ? *revised_question : question;
    }
};

struct Corpus {
    std::vector<Sample> samples;
    std::optional<std::string> shared_system_prompt;

    std::size_t size() const { return samples.size(); }

    const std::string& resolve_system_prompt(const Sample& s) const {
        static const std::string empty;
        if (s.system_prompt) return *s.system_prompt;
        if (shared_system_prompt) return *shared_system_prompt;
        return empty;
    }

    Sample* find(const std::string& id) {
        for (auto& s : samples)
            if (s.id == id) return &s;
        return nullptr;
    }
    const Sample* find(const std::string& id) const {
        return const_cast<Corpus*>(this)->find(id);
    }

    // Hash of every effective question, in order. Numerical passes must
    // leave this unchanged.
    std::uint64_t question_text_hash() const {
        std::uint64_t h = 0;
        for (const auto& s : samples)
            h = combine_hash(h, fnv1a64(s.effective_question()));
        return h;
    }
};

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw CorpusError(CorpusError::Kind::Io, "cannot open corpus file: " + path);

    Corpus corpus;
    std::unordered_set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") ||
            !j.contains("question") || !j.contains("ground_truth") ||
            !j["id"].is_string() || !j["question"].is_string() ||
            !j["ground_truth"].is_string())
            throw CorpusError(CorpusError::Kind::MalformedRecord,
                              "malformed record at line " + std::to_string(line_no),
                              line_no);
        Sample s;
        s.id = j["id"].get<std::string>();
        s.question = j["question"].get<std::string>();
        s.ground_truth = j["ground_truth"].get<std::string>();
        if (s.ground_truth.empty())
            throw CorpusError(CorpusError::Kind::MalformedRecord,
                              "empty ground_truth at line " + std::to_string(line_no),
                              line_no);
        if (j.contains("system_prompt") && j["system_prompt"].is_string())
            s.system_prompt = j["system_prompt"].get<std::string>();
        if (!seen.insert(s.id).second)
            throw CorpusError(CorpusError::Kind::DuplicateId, "duplicate id: " + s.id);
        corpus.samples.push_back(std::move(s));
    }
    return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw CorpusError(CorpusError::Kind::Io, "cannot write corpus file: " + path);
    for (const auto& s : corpus.samples) {
        nlohmann::json j;
        j["id"] = s.id;
        j["question"] = s.question;
        j["ground_truth"] = s.ground_truth;
        if (s.system_prompt) j["system_prompt"] = *s.system_prompt;
        out << j.dump() << "\n";
    }
}

// Writes one record per revised sample. The record is loadable by
// load_corpus directly: its `question` field carries the revised text,
// with the pre-revision text retained in `original_question`.
inline int export_augmented(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw CorpusError(CorpusError::Kind::Io, "cannot write augmented file: " + path);
    int count = 0;
    for (const auto& s : corpus.samples) {
        if (s.revision_count < 1) continue;
        nlohmann::json j;
        j["id"] = s.id;
        j["question"] = *s.revised_question;
        j["original_question"] = s.question;
        j["revised_question"] = *s.revised_question;
        j["ground_truth"] = s.ground_truth;
        if (s.system_prompt) j["system_prompt"] = *s.system_prompt;
        j["revision_iterations"] = s.last_revision_iterations;
        j["epoch_revised"] = s.epoch_revised;
        j["source"] = "symbolic_update";
        out << j.dump() << "\n";
        ++count;
    }
    return count;
}

// Overlays an augmented export onto a corpus: samples whose id appears in
// the file get the revised question text. Unknown ids are ignored.
inline int apply_augmented(Corpus& corpus, const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw CorpusError(CorpusError::Kind::Io, "cannot open augmented file: " + path);
    std::unordered_map<std::string, std::string> revised;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("id") || !j.contains("revised_question"))
            throw CorpusError(CorpusError::Kind::MalformedRecord,
                              "malformed augmented record at line " + std::to_string(line_no),
                              line_no);
        revised[j["id"].get<std::string>()] = j["revised_question"].get<std::string>();
    }
    int applied = 0;
    for (auto& s : corpus.samples) {
        auto it = revised.find(s.id);
        if (it == revised.end()) continue;
        s.revised_question = it->second;
        if (s.revision_count == 0) s.revision_count = 1;
        ++applied;
    }
    return applied;
}

}  // namespace nslora
