#include "maldistill/featurize/opcode.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

namespace maldistill::featurize {

NgramVocabulary::NgramVocabulary(std::vector<std::string> grams, std::size_t n)
    : n_(n), grams_(std::move(grams)) {
  if (n_ < 1) throw std::invalid_argument("n-gram order must be >= 1");
  if (!std::is_sorted(grams_.begin(), grams_.end()) ||
      std::adjacent_find(grams_.begin(), grams_.end()) != grams_.end()) {
    throw std::invalid_argument("vocabulary must be sorted and unique");
  }
  for (std::size_t i = 0; i < grams_.size(); ++i) index_.emplace(grams_[i], i);
}

NgramVocabulary NgramVocabulary::build(const std::vector<OpcodeSequence>& corpus, std::size_t n) {
  if (n < 1) throw std::invalid_argument("n-gram order must be >= 1");
  std::set<std::string> all;
  for (const auto& seq : corpus) {
    for (auto& g : ngrams_of(seq, n)) all.insert(std::move(g));
  }
  return NgramVocabulary({all.begin(), all.end()}, n);
}

long NgramVocabulary::index_of(const std::string& gram) const {
  auto it = index_.find(gram);
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

std::vector<std::string> ngrams_of(const OpcodeSequence& seq, std::size_t n) {
  if (n < 1) throw std::invalid_argument("n-gram order must be >= 1");
  std::set<std::string> grams;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    std::string g = seq[i];
    for (std::size_t k = 1; k < n; ++k) {
      g += ' ';
      g += seq[i + k];
    }
    grams.insert(std::move(g));
  }
  return {grams.begin(), grams.end()};
}

SparseRow extract_ngrams(const OpcodeSequence& seq, const NgramVocabulary& vocab) {
  SparseRow row;
  for (const auto& g : ngrams_of(seq, vocab.n())) {
    const long j = vocab.index_of(g);
    if (j >= 0) row.push_back(static_cast<std::uint32_t>(j));
  }
  std::sort(row.begin(), row.end());
  return row;
}

FeatureMatrix ngram_matrix(const std::vector<OpcodeSequence>& corpus, const NgramVocabulary& vocab) {
  if (vocab.size() == 0) throw std::invalid_argument("empty n-gram vocabulary");
  auto m = FeatureMatrix::sparse(View::opcode, vocab.size());
  for (const auto& seq : corpus) m.push_sparse(extract_ngrams(seq, vocab));
  m.vocabulary() = vocab.grams();
  return m;
}

std::vector<OpcodeListing> parse_opcode_listing(std::istream& in) {
  std::vector<OpcodeListing> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first) || first[0] == '#') continue;
    if (first == "@sample") {
      OpcodeListing s;
      if (!(ls >> s.id)) {
        throw std::runtime_error("line " + std::to_string(lineno) + ": @sample without an id");
      }
      std::string extra;
      while (ls >> extra) {
        if (extra == "label=0" || extra == "label=1") {
          s.label = extra.back() - '0';
        } else {
          throw std::runtime_error("line " + std::to_string(lineno) + ": unexpected '" + extra + "'");
        }
      }
      out.push_back(std::move(s));
      continue;
    }
    if (out.empty()) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": opcode before any @sample marker");
    }
    std::transform(first.begin(), first.end(), first.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.back().opcodes.push_back(std::move(first));
  }
  return out;
}

}  // namespace maldistill::featurize
