#pragma once

#include <string>
#include <vector>

namespace wavebank {

int64_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);
int64_t levenshtein(const std::string& a, const std::string& b);

std::vector<std::string> split_words(const std::string& text);

// Levenshtein distance over whitespace tokens, divided by |ref| tokens.
double wer(const std::string& ref, const std::string& hyp);
// Same over characters.
double cer(const std::string& ref, const std::string& hyp);

}  // namespace wavebank
