#include "wavebank/metrics.hpp"

#include <algorithm>
#include <sstream>

#include "wavebank/error.hpp"

namespace wavebank {

namespace {

template <typename Seq>
int64_t edit_distance(const Seq& a, const Seq& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

int64_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return edit_distance(a, b);
}

int64_t levenshtein(const std::string& a, const std::string& b) { return edit_distance(a, b); }

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

double wer(const std::string& ref, const std::string& hyp) {
  const auto ref_words = split_words(ref);
  if (ref_words.empty()) throw ConfigError("wer: empty reference");
  return static_cast<double>(levenshtein(ref_words, split_words(hyp))) /
         static_cast<double>(ref_words.size());
}

double cer(const std::string& ref, const std::string& hyp) {
  if (ref.empty()) throw ConfigError("cer: empty reference");
  return static_cast<double>(levenshtein(ref, hyp)) / static_cast<double>(ref.size());
}

}  // namespace wavebank
