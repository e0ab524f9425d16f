#include <algorithm>
#include <cctype>
#include <cmath>

#include "ssa/cli.hpp"
#include "ssa/random.hpp"

namespace ssa::cli {

namespace {

constexpr const char* kOnsets[] = {"b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "w",
                                   "br", "ch", "cl", "dr", "gr", "pl", "sh", "st", "th", "tr", ""};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ea", "ou", "ai", "y"};
constexpr const char* kCodas[] = {"", "", "", "n", "r", "s", "t", "l", "nd", "ng", "st", "ck"};

template <std::size_t N>
const char* pick(const char* const (&table)[N], RandomSource& rng) {
  return table[rng.uniform_index(N)];
}

// Inverse-CDF draw from a Zipf(1) table.
std::size_t zipf(const std::vector<double>& cdf, RandomSource& rng) {
  const double u = rng.uniform() * cdf.back();
  return std::size_t(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

}  // namespace

std::string generate_corpus(std::size_t bytes, std::uint64_t seed) {
  RandomSource rng(seed);
  constexpr std::size_t kWords = 2000, kFollowers = 12;
  std::vector<std::string> words;
  while (words.size() < kWords) {
    const std::size_t syllables = 1 + rng.uniform_index(words.size() < 100 ? 2 : 3);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) w += std::string(pick(kOnsets, rng)) + pick(kVowels, rng) + pick(kCodas, rng);
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  std::vector<double> cdf(kWords);
  double acc = 0.0;
  for (std::size_t i = 0; i < kWords; ++i) cdf[i] = (acc += 1.0 / double(i + 1));
  // Each word prefers a few successors, so word order carries information.
  std::vector<std::vector<std::size_t>> followers(kWords);
  for (auto& f : followers)
    for (std::size_t j = 0; j < kFollowers; ++j) f.push_back(zipf(cdf, rng));

  std::string out;
  out.reserve(bytes + 64);
  std::size_t prev = zipf(cdf, rng);
  std::size_t sentences_in_paragraph = 0;
  while (out.size() < bytes) {
    const std::size_t length = 4 + rng.uniform_index(12);
    for (std::size_t i = 0; i < length; ++i) {
      prev = rng.uniform() < 0.7 ? followers[prev][zipf(cdf, rng) % kFollowers] : zipf(cdf, rng);
      std::string w = words[prev];
      if (i == 0) w[0] = char(std::toupper(static_cast<unsigned char>(w[0])));
      out += w;
      if (i + 1 < length) out += rng.uniform() < 0.08 ? ", " : " ";
    }
    out += rng.uniform() < 0.1 ? "? " : ". ";
    if (++sentences_in_paragraph >= 3 + rng.uniform_index(5)) {
      out.back() = '\n';
      sentences_in_paragraph = 0;
    }
  }
  out.resize(bytes);
  return out;
}

}  // namespace ssa::cli
