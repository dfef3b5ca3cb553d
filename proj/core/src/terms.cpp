#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "fmx/novelty.hpp"

namespace fmx {

namespace {

std::vector<std::string> title_words(const WorkRecord& w) {
  std::vector<std::string> words;
  for (const auto& tok : w.title_tokens) {
    std::string clean;
    for (char ch : tok) {
      const auto u = static_cast<unsigned char>(ch);
      if (u >= 0x80 || std::isalnum(u)) clean.push_back(static_cast<char>(std::tolower(u)));
    }
    if (clean.size() >= 3) words.push_back(std::move(clean));
  }
  return words;
}

}  // namespace

std::vector<TermNoveltyResult> detect_new_terms(const Corpus& corpus) {
  // First year of use per term; a work's term is new iff its first year
  // equals the work's year (nothing strictly earlier used it).
  std::unordered_map<std::string, int> first_word;
  std::unordered_map<std::string, int> first_phrase;
  std::vector<std::vector<std::string>> words(corpus.size());
  std::vector<std::vector<std::string>> phrases(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const int year = corpus[i].year;
    words[i] = title_words(corpus[i]);
    for (std::size_t k = 0; k + 1 < words[i].size(); ++k) {
      phrases[i].push_back(words[i][k] + ' ' + words[i][k + 1]);
    }
    for (const auto& t : words[i]) {
      auto [it, inserted] = first_word.try_emplace(t, year);
      if (!inserted) it->second = std::min(it->second, year);
    }
    for (const auto& t : phrases[i]) {
      auto [it, inserted] = first_phrase.try_emplace(t, year);
      if (!inserted) it->second = std::min(it->second, year);
    }
  }
  std::vector<TermNoveltyResult> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const int year = corpus[i].year;
    TermNoveltyResult r;
    r.work_id = corpus[i].work_id;
    r.new_word = std::any_of(words[i].begin(), words[i].end(), [&](const auto& t) { return first_word[t] == year; });
    r.new_phrase =
        std::any_of(phrases[i].begin(), phrases[i].end(), [&](const auto& t) { return first_phrase[t] == year; });
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fmx
