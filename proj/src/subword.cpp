#include "followup/subword.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>

#include "followup/document.hpp"
#include "followup/rng.hpp"

namespace followup::subword {

namespace {

const char* kReservedPieces[SubwordVocab::kNumReserved] = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "<DOC_START>", "<DOC_END>"};

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ws(text[i])) ++i;
    std::size_t b = i;
    while (i < text.size() && !is_ws(text[i])) ++i;
    if (i > b) fn(text.substr(b, i - b));
  }
}

std::string strip_marker(const std::string& piece) {
  return piece.rfind("##", 0) == 0 ? piece.substr(2) : piece;
}

std::string fingerprint_of(const std::vector<std::string>& pieces) {
  std::uint64_t h = 14695981039346656037ull;
  for (const std::string& p : pieces) {
    h = fnv1a64(p, h);
    h = fnv1a64(std::string_view("\n"), h);
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

int add_piece(SubwordVocab& v, const std::string& piece) {
  auto it = v.ids.find(piece);
  if (it != v.ids.end()) return it->second;
  int id = v.size();
  v.pieces.push_back(piece);
  v.ids.emplace(piece, id);
  return id;
}

}  // namespace

int SubwordVocab::id_of(std::string_view piece) const {
  auto it = ids.find(std::string(piece));
  return it == ids.end() ? -1 : it->second;
}

SubwordVocab train_vocab(const std::vector<std::string>& corpus_lines,
                         int target_size) {
  std::size_t i = 0;
  return train_vocab(
      [&]() -> std::optional<std::string> {
        if (i >= corpus_lines.size()) return std::nullopt;
        return corpus_lines[i++];
      },
      target_size);
}

SubwordVocab train_vocab(
    const std::function<std::optional<std::string>()>& next_line,
    int target_size) {
  SubwordVocab vocab;
  for (const char* p : kReservedPieces) add_piece(vocab, p);

  // Unique words with counts, in first-seen order.
  std::vector<std::pair<std::string, long long>> words;
  std::unordered_map<std::string, std::size_t> word_index;
  while (auto line = next_line()) {
    for_each_word(*line, [&](std::string_view w) {
      std::string key(w);
      auto [it, fresh] = word_index.emplace(std::move(key), words.size());
      if (fresh) {
        words.push_back({std::string(w), 1});
      } else {
        ++words[it->second].second;
      }
    });
  }
  if (words.empty()) {
    throw Error(ErrorCode::invalid_config, "cannot train a vocabulary on an "
                                           "empty corpus");
  }

  // Byte alphabet in first-seen order, then each word as a piece-id sequence.
  std::vector<std::vector<int>> reps(words.size());
  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    const std::string& w = words[wi].first;
    reps[wi].reserve(w.size());
    for (std::size_t c = 0; c < w.size(); ++c) {
      std::string piece = c == 0 ? std::string(1, w[c])
                                 : "##" + std::string(1, w[c]);
      reps[wi].push_back(add_piece(vocab, piece));
    }
  }

  struct PairHash {
    std::size_t operator()(const std::pair<int, int>& p) const {
      return std::hash<long long>()((static_cast<long long>(p.first) << 32) ^
                                    static_cast<unsigned>(p.second));
    }
  };
  std::unordered_map<std::pair<int, int>, std::pair<long long, long long>,
                     PairHash>
      pairs;
  while (vocab.size() < target_size) {
    // Count adjacent pairs; remember where each pair was first seen. The
    // (count desc, first-seen asc) order is total, so the argmax below is
    // deterministic given corpus order.
    pairs.clear();
    long long scan_pos = 0;
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
      const auto& rep = reps[wi];
      for (std::size_t j = 0; j + 1 < rep.size(); ++j, ++scan_pos) {
        auto it = pairs
                      .try_emplace(std::make_pair(rep[j], rep[j + 1]),
                                   std::make_pair(0ll, scan_pos))
                      .first;
        it->second.first += words[wi].second;
      }
    }
    std::pair<int, int> best{-1, -1};
    long long best_count = 0, best_first = 0;
    for (const auto& [pr, stat] : pairs) {
      if (stat.first > best_count ||
          (stat.first == best_count && stat.second < best_first)) {
        best = pr;
        best_count = stat.first;
        best_first = stat.second;
      }
    }
    if (best_count < 2) break;  // nothing repeats; further merges are noise

    const std::string merged =
        vocab.piece(best.first) + strip_marker(vocab.piece(best.second));
    int merged_id = add_piece(vocab, merged);
    for (auto& rep : reps) {
      std::size_t out = 0;
      for (std::size_t j = 0; j < rep.size(); ++j) {
        if (j + 1 < rep.size() && rep[j] == best.first &&
            rep[j + 1] == best.second) {
          rep[out++] = merged_id;
          ++j;
        } else {
          rep[out++] = rep[j];
        }
      }
      rep.resize(out);
    }
  }

  vocab.fingerprint = fingerprint_of(vocab.pieces);
  return vocab;
}

namespace {

// Longest-match segmentation of a single word. Appends piece ids.
void encode_word(std::string_view word, const SubwordVocab& vocab,
                 std::vector<int>& out) {
  std::size_t pos = 0;
  bool first = true;
  while (pos < word.size()) {
    std::size_t len = word.size() - pos;
    int found = -1;
    for (; len > 0; --len) {
      std::string candidate = first
                                  ? std::string(word.substr(pos, len))
                                  : "##" + std::string(word.substr(pos, len));
      int id = vocab.id_of(candidate);
      if (id >= 0) {
        found = id;
        break;
      }
    }
    if (found < 0) {
      out.push_back(SubwordVocab::kUnk);
      pos += 1;
    } else {
      out.push_back(found);
      pos += len;
    }
    first = false;
  }
}

}  // namespace

std::vector<int> encode(std::string_view text, const SubwordVocab& vocab) {
  std::vector<int> out;
  for_each_word(text, [&](std::string_view w) { encode_word(w, vocab, out); });
  return out;
}

std::string decode(const std::vector<int>& ids, const SubwordVocab& vocab) {
  std::string out;
  for (int id : ids) {
    const std::string& p = vocab.piece(id);
    if (p.rfind("##", 0) == 0) {
      out += p.substr(2);
    } else {
      if (!out.empty()) out += " ";
      out += p;
    }
  }
  return out;
}

int count_oov(std::string_view sentence, const SubwordVocab& vocab) {
  int oov = 0;
  std::vector<int> scratch;
  for_each_word(sentence, [&](std::string_view w) {
    scratch.clear();
    encode_word(w, vocab, scratch);
    if (scratch.size() >= 2) ++oov;
  });
  return oov;
}

void save_vocab(const std::string& path, const SubwordVocab& vocab) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::missing_file, "cannot write: " + path);
  os << "# wordpiece vocab fingerprint=" << vocab.fingerprint << "\n";
  for (const std::string& p : vocab.pieces) os << p << "\n";
}

SubwordVocab load_vocab(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::missing_file, "cannot open: " + path);
  std::string header;
  std::getline(is, header);
  const std::string prefix = "# wordpiece vocab fingerprint=";
  if (header.rfind(prefix, 0) != 0) {
    throw Error(ErrorCode::malformed_input,
                "vocab file missing fingerprint header: " + path);
  }
  SubwordVocab vocab;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    add_piece(vocab, line);
  }
  if (vocab.size() < SubwordVocab::kNumReserved) {
    throw Error(ErrorCode::malformed_input,
                "vocab file lacks the reserved tokens: " + path);
  }
  for (int i = 0; i < SubwordVocab::kNumReserved; ++i) {
    if (vocab.pieces[static_cast<std::size_t>(i)] != kReservedPieces[i]) {
      throw Error(ErrorCode::malformed_input,
                  "vocab file reserved tokens are out of order: " + path);
    }
  }
  vocab.fingerprint = fingerprint_of(vocab.pieces);
  if (vocab.fingerprint != header.substr(prefix.size())) {
    throw Error(ErrorCode::fingerprint_mismatch,
                "vocab file fingerprint does not match its contents: " + path);
  }
  return vocab;
}

}  // namespace followup::subword
