#pragma once

#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

#include "maldistill/featurize/feature_matrix.hpp"

namespace maldistill::featurize {

using OpcodeSequence = std::vector<std::string>;

/// Sorted set of n-grams seen in a training corpus. Grams are the mnemonics
/// joined by single spaces.
class NgramVocabulary {
 public:
  NgramVocabulary() = default;
  NgramVocabulary(std::vector<std::string> grams, std::size_t n);

  static NgramVocabulary build(const std::vector<OpcodeSequence>& corpus, std::size_t n = 3);

  std::size_t n() const { return n_; }
  std::size_t size() const { return grams_.size(); }
  const std::vector<std::string>& grams() const { return grams_; }
  /// Column of a gram, or -1 when unseen.
  long index_of(const std::string& gram) const;

 private:
  std::size_t n_ = 3;
  std::vector<std::string> grams_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// The distinct length-n windows of a sequence, joined as in the vocabulary.
std::vector<std::string> ngrams_of(const OpcodeSequence& seq, std::size_t n);

/// Binary presence row: the sorted columns of vocabulary grams present in
/// `seq`. Grams outside the vocabulary are ignored.
SparseRow extract_ngrams(const OpcodeSequence& seq, const NgramVocabulary& vocab);

/// Encodes every sequence of `corpus` against `vocab`.
FeatureMatrix ngram_matrix(const std::vector<OpcodeSequence>& corpus, const NgramVocabulary& vocab);

struct OpcodeListing {
  std::string id;
  int label = -1;
  OpcodeSequence opcodes;
};

/// Parses a disassembly listing: "@sample <id> [label=<0|1>]" starts a sample,
/// each following non-empty line contributes its first token (lowercased) as a
/// mnemonic. Lines starting with '#' are comments.
std::vector<OpcodeListing> parse_opcode_listing(std::istream& in);

}  // namespace maldistill::featurize
