#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "followup/labels.hpp"

namespace followup {

enum class ErrorCode : int {
  other = 1,
  usage = 2,
  missing_file = 3,
  fingerprint_mismatch = 4,
  invalid_config = 5,
  malformed_input = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

enum class Split : int { train = 0, val = 1, test = 2, unlabeled = 3 };

// One classification unit. `text` is the lowercased slice of the document's
// raw text; the span keeps the original casing addressable.
struct Sentence {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
  LabelSet labels;
  std::optional<std::string> section;
};

// A discharge note as an ordered list of sentences with character spans into
// raw_text (raw_text is post-surrogate-filling).
struct Document {
  std::string doc_id;
  std::string raw_text;
  std::vector<Sentence> sentences;
  std::optional<Split> split;
};

struct CorpusStats {
  std::array<double, kNumLabels> per_label{};
  double labeled_fraction = 0.0;
  double multilabel_fraction = 0.0;
  double neighbor_fraction = 0.0;
};

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

// Builds a Document by segmenting raw_text into sentences. Throws Error on
// whitespace-only input (a document must have at least one sentence).
Document make_document(std::string doc_id, std::string raw_text);

// Checks the Document invariants: non-overlapping strictly increasing spans,
// span/text agreement, at least one sentence. Throws Error on violation.
void validate_document(const Document& doc);

}  // namespace followup
