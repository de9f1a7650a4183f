#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <string>

#include "nslora/corpus.hpp"
#include "nslora/hash.hpp"

namespace nslora {

// Desk-scale arithmetic QA generator. Plain samples state the two
// addends as digits. Obfuscated samples bury the true addends in a fused
// word token and lead with decoy digits, so a hashed bag-of-words model
// picks up misleading digit evidence unless the question is rewritten.
// Every sample carries a unique filler tag so train-set accuracy can
// exceed held-out accuracy via memorization.
inline Corpus gen_synthetic(int n, std::uint64_t seed, double style_fraction) {
    static const char* words[10] = {"zero", "one", "two",   "three", "four",
                                    "five", "six", "seven", "eight", "nine"};
    std::mt19937_64 rng(seed ^ 0x5e77a6e2ull);
    std::uniform_int_distribution<int> digit(0, 4);
    std::bernoulli_distribution obfuscated(style_fraction);

    Corpus corpus;
    for (int i = 0; i < n; ++i) {
        int a = digit(rng), b = digit(rng);
        Sample s;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "q%04d", i);
        s.id = idbuf;
        s.ground_truth = std::to_string(a + b);
        std::uint64_t tag = combine_hash(fnv1a64(s.id, seed), 0xfeedull);
        char tagbuf[16];
        std::snprintf(tagbuf, sizeof(tagbuf), "tg%08llx",
                      static_cast<unsigned long long>(tag & 0xffffffffull));
        if (obfuscated(rng)) {
            // Decoys stay within a narrow digit range so their misleading
            // evidence concentrates on a few shared token buckets.
            std::uniform_int_distribution<int> decoy(0, 1);
            int dx, dy;
            do {
                dx = decoy(rng);
                dy = decoy(rng);
            } while (dx + dy == a + b);
            char saltbuf[8];
            std::snprintf(saltbuf, sizeof(saltbuf), "%04llx",
                          static_cast<unsigned long long>((tag >> 32) & 0xffffull));
            s.question = "riddle ignore " + std::to_string(dx) + " plus " + std::to_string(dy) +
                         " reckon " + std::string(words[a]) + std::string(words[b]) + saltbuf +
                         " instead note " + tagbuf;
        } else {
            s.question = "what is " + std::to_string(a) + " plus " + std::to_string(b) +
                         " note " + tagbuf;
        }
        corpus.samples.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace nslora
