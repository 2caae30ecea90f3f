#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace followup::subword {

// WordPiece-style subword vocabulary. Ids 0..6 are reserved for the special
// tokens; every byte seen in the training text is present as a single-byte
// piece (word-initial and "##" continuation forms), so encoding text over the
// training alphabet never produces UNK.
struct SubwordVocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kDocStart = 5;
  static constexpr int kDocEnd = 6;
  static constexpr int kNumReserved = 7;

  std::vector<std::string> pieces;            // id -> piece
  std::unordered_map<std::string, int> ids;   // piece -> id
  std::string fingerprint;                    // fnv1a64 hex over the pieces

  int size() const { return static_cast<int>(pieces.size()); }
  int id_of(std::string_view piece) const;
  const std::string& piece(int id) const { return pieces[id]; }
  static bool is_special(int id) { return id < kNumReserved; }
};

// Greedy frequency-based pair merging until `target_size` pieces (or no pair
// repeats). Ties break on first occurrence in corpus scan order, so training
// is deterministic given corpus order. Throws on an empty corpus.
SubwordVocab train_vocab(const std::vector<std::string>& corpus_lines,
                         int target_size);
SubwordVocab train_vocab(
    const std::function<std::optional<std::string>()>& next_line,
    int target_size);

// Whitespace pre-split, then longest-match-first segmentation with the "##"
// continuation marker. Bytes absent from the vocab become UNK.
std::vector<int> encode(std::string_view text, const SubwordVocab& vocab);

// Inverse of encode up to whitespace normalization.
std::string decode(const std::vector<int>& ids, const SubwordVocab& vocab);

// Number of whitespace tokens that segment into two or more pieces.
int count_oov(std::string_view sentence, const SubwordVocab& vocab);

void save_vocab(const std::string& path, const SubwordVocab& vocab);
SubwordVocab load_vocab(const std::string& path);

}  // namespace followup::subword
