#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "followup/document.hpp"
#include "followup/subword.hpp"

namespace followup::window {

// Model input for one focus sentence: the sentence and its k neighbors on
// each side, each followed by one SEP. Position ids are implicit 0..len-1.
// Segment A covers exactly the focus tokens plus the SEP that closes them
// (id 0); everything else is segment B (id 1).
struct ContextWindow {
  std::vector<int> token_ids;
  std::vector<std::int8_t> segment_ids;
  int focus_sep_index = 0;
  int focus_begin = 0;  // token range [focus_begin, focus_end) of the focus
  int focus_end = 0;
  std::string doc_id;
  int sentence_index = 0;
};

inline constexpr int kSegmentFocus = 0;
inline constexpr int kSegmentContext = 1;

// One sentence of the window before SEP-joining. `offset` is the signed
// distance from the focus (0 = focus). DOC_START / DOC_END pseudo-sentences
// are single-token parts.
struct WindowPart {
  std::vector<int> tokens;
  int offset = 0;
};

// Removes whole context sentences until the assembled length fits max_len:
// first the shorter of the two outermost (ties remove the right one), then
// alternating sides moving inward. If the focus alone still exceeds max_len
// its tail is cut so that the window is exactly max_len with the trailing
// SEP kept.
std::vector<WindowPart> truncate_window(std::vector<WindowPart> parts,
                                        int max_len);

ContextWindow assemble_window(const std::vector<WindowPart>& parts,
                              std::string doc_id, int sentence_index);

// focus_text_override substitutes the focus sentence's text (used by the
// switch-prediction pretraining task); the context always comes from the
// neighbors of sentence i.
ContextWindow build_window(const Document& doc, int i,
                           const subword::SubwordVocab& vocab, int k = 2,
                           int max_len = 512,
                           const std::string* focus_text_override = nullptr);

struct WindowBatch {
  Eigen::MatrixXi tokens;    // [batch x max_len], PAD-padded
  Eigen::MatrixXi segments;  // [batch x max_len]
  std::vector<int> lengths;
  std::vector<int> focus_sep;
  int rows() const { return static_cast<int>(lengths.size()); }
  int cols() const { return static_cast<int>(tokens.cols()); }
};

WindowBatch window_batch(const std::vector<ContextWindow>& windows);

// Debug dump used by fixture tests.
std::string window_to_json(const ContextWindow& w);

}  // namespace followup::window
