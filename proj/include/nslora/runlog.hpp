#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nslora/config.hpp"

namespace nslora {

struct RunLogError : std::runtime_error {
    explicit RunLogError(const std::string& msg) : std::runtime_error(msg) {}
};

// Append-only event stream. Serialized as line-delimited JSON with a
// schema version header line.
class RunLog {
public:
    static constexpr int kSchemaVersion = 1;

    RunLog() = default;
    RunLog(const RunConfig& cfg, std::size_t corpus_size, int start_epoch = 1) {
        header_["schema"] = "nslora-runlog";
        header_["version"] = kSchemaVersion;
        header_["corpus_size"] = corpus_size;
        header_["start_epoch"] = start_epoch;
        header_["config"] = run_config_to_map(cfg);
    }

    const nlohmann::json& header() const { return header_; }
    const std::vector<nlohmann::json>& events() const { return events_; }

    void append(nlohmann::json event) { events_.push_back(std::move(event)); }

    RunConfig config() const {
        ConfigMap map = header_.at("config").get<ConfigMap>();
        return run_config_from_map(map);
    }

    std::string serialize() const {
        std::string out = header_.dump() + "\n";
        for (const auto& e : events_) out += e.dump() + "\n";
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw RunLogError("cannot write run log: " + path);
        out << serialize();
    }

    static RunLog load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw RunLogError("cannot open run log: " + path);
        RunLog log;
        std::string line;
        if (!std::getline(in, line)) throw RunLogError("empty run log: " + path);
        log.header_ = nlohmann::json::parse(line, nullptr, false);
        if (log.header_.is_discarded() || log.header_.value("schema", "") != "nslora-runlog")
            throw RunLogError("missing run log header: " + path);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto e = nlohmann::json::parse(line, nullptr, false);
            if (e.is_discarded()) throw RunLogError("malformed event line in " + path);
            log.events_.push_back(std::move(e));
        }
        return log;
    }

private:
    nlohmann::json header_;
    std::vector<nlohmann::json> events_;
};

// Replays a log against the epoch state machine:
//   numerical pass -> saturation check -> optional symbolic phase -> next epoch.
// Returns the list of violations; empty means the log is valid.
inline std::vector<std::string> validate_log(const RunLog& log) {
    std::vector<std::string> violations;
    RunConfig cfg = log.config();
    const auto corpus_size = log.header().at("corpus_size").get<std::size_t>();
    const std::size_t budget =
        static_cast<std::size_t>(std::ceil(cfg.p * static_cast<double>(corpus_size)));
    const std::size_t max_calls_per_epoch =
        budget * static_cast<std::size_t>(cfg.max_symbolic_iters) +
        (cfg.system_prompt_learning ? 1u : 0u);

    int epoch = 0;
    bool trigger_seen = false;
    bool in_symbolic = false;
    std::uint64_t question_hash = 0;
    std::uint64_t phase_model_hash = 0;
    std::size_t epoch_calls = 0;

    auto fail = [&](const std::string& msg) {
        violations.push_back("epoch " + std::to_string(epoch) + ": " + msg);
    };

    for (const auto& e : log.events()) {
        const std::string type = e.value("event", "");
        if (type == "epoch_start") {
            epoch = e.at("epoch").get<int>();
            trigger_seen = false;
            in_symbolic = false;
            epoch_calls = 0;
            question_hash = e.at("question_hash").get<std::uint64_t>();
        } else if (type == "numerical_pass_end") {
            if (e.at("question_hash").get<std::uint64_t>() != question_hash)
                fail("question text changed across numerical pass");
        } else if (type == "saturation_check") {
            trigger_seen = e.at("triggered").get<bool>();
        } else if (type == "symbolic_phase") {
            if (cfg.mode != RunMode::SymbolicOnly && !trigger_seen)
                fail("symbolic phase without a triggered saturation check");
            if (cfg.mode == RunMode::NumericalOnly)
                fail("symbolic phase in numerical_only mode");
            in_symbolic = true;
            phase_model_hash = e.at("model_hash").get<std::uint64_t>();
            if (e.at("selected").size() > budget && cfg.mode != RunMode::SymbolicOnly)
                fail("selection exceeds ceil(p*|D|)");
        } else if (type == "symbolic_phase_end") {
            if (!in_symbolic) fail("symbolic_phase_end without symbolic_phase");
            if (e.at("model_hash").get<std::uint64_t>() != phase_model_hash)
                fail("model parameters changed across symbolic phase");
            in_symbolic = false;
        } else if (type == "rewrite") {
            if (!in_symbolic) fail("rewrite outside a symbolic phase");
            epoch_calls += e.at("calls").get<std::size_t>();
        } else if (type == "system_prompt_update") {
            epoch_calls += e.at("calls").get<std::size_t>();
        } else if (type == "epoch_stats") {
            if (epoch_calls > max_calls_per_epoch)
                fail("rewrite call budget exceeded: " + std::to_string(epoch_calls) + " > " +
                     std::to_string(max_calls_per_epoch));
        }
    }
    return violations;
}

}  // namespace nslora
