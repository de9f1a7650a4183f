#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nslora/hash.hpp"

namespace nslora {

using FeatureVector = std::vector<double>;

// Lowercased split on anything that is not alphanumeric.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

// Hashed token counts over system prompt + question, L2-normalized so
// every sample has unit feature norm regardless of its token count.
// Deterministic in (text, hash_seed, dim); collisions sum.
inline FeatureVector featurize(std::string_view system_prompt, std::string_view question,
                               std::size_t dim, std::uint64_t hash_seed) {
    FeatureVector x(dim, 0.0);
    for (std::string_view part : {system_prompt, question})
        for (const auto& tok : tokenize(part))
            x[stable_hash(tok, hash_seed) % dim] += 1.0;
    double sq = 0.0;
    for (double v : x) sq += v * v;
    if (sq > 0.0) {
        const double inv = 1.0 / std::sqrt(sq);
        for (double& v : x) v *= inv;
    }
    return x;
}

}  // namespace nslora
