#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>

#include "nslora/corpus.hpp"
#include "nslora/model.hpp"

namespace nslora {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Pulls the final "#### <answer>" segment when present, otherwise the
// whole output trimmed.
inline std::string extract_answer(std::string_view output,
                                  std::string_view marker = "####") {
    auto pos = output.rfind(marker);
    if (pos != std::string_view::npos)
        return trim(output.substr(pos + marker.size()));
    return trim(output);
}

inline std::string normalize_answer(std::string_view s) {
    std::string t = trim(s);
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return t;
}

inline bool exact_match(std::string_view output, std::string_view ground_truth) {
    return normalize_answer(extract_answer(output)) == normalize_answer(ground_truth);
}

inline double evaluate(const AdapterModel& model, const Corpus& corpus) {
    if (corpus.samples.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& s : corpus.samples)
        if (exact_match(model.predict_answer(corpus, s), s.ground_truth)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(corpus.size());
}

}  // namespace nslora
