#pragma once
// Small shared helpers: text normalization, word counting, deterministic
// hashing/RNG, cosine similarity, and a bounded parallel map.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace evopoison::util {

// Lowercases ASCII and collapses whitespace runs to single spaces, trimming
// the ends. Entity identity and case-insensitive matching both use this.
std::string normalize_text(std::string_view text);

// Collapses whitespace without case folding.
std::string squash_whitespace(std::string_view text);

std::vector<std::string> split_words(std::string_view text);

// Token counting throughout the testbed is whitespace word count.
std::size_t word_count(std::string_view text);

// First n words of text, joined by single spaces.
std::string truncate_words(std::string_view text, std::size_t n);

std::string to_lower(std::string_view text);

bool contains_ci(std::string_view haystack, std::string_view needle);

// FNV-1a over bytes; stable across platforms.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 1469598103934665603ULL);

// splitmix64 step; used wherever we need a cheap seeded stream.
std::uint64_t splitmix64(std::uint64_t& state);

// Deterministic Fisher-Yates backed by splitmix64. std::shuffle's draw
// sequence is implementation-defined, so we roll our own for byte-stable
// output across standard libraries.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    std::uint64_t state = seed ^ 0x9e3779b97f4a7c15ULL;
    for (std::size_t i = items.size(); i > 1; --i) {
        std::uint64_t j = splitmix64(state) % i;
        std::swap(items[i - 1], items[j]);
    }
}

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Affine rescale of cosine into [0,1].
inline double rescaled_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double c = std::clamp(cosine(a, b), -1.0, 1.0);
    return (1.0 + c) / 2.0;
}

// Applies fn to every index in [0, n) with at most max_parallel workers.
// Results land in caller-owned slots keyed by index, so fan-in order is
// deterministic regardless of scheduling.
void parallel_for(std::size_t n, std::size_t max_parallel,
                  const std::function<void(std::size_t)>& fn);

} // namespace evopoison::util
