#include "followup/window.hpp"

#include <algorithm>
#include <json.hpp>

namespace followup::window {

namespace {

long long assembled_length(const std::vector<WindowPart>& parts) {
  long long n = 0;
  for (const WindowPart& p : parts) {
    n += static_cast<long long>(p.tokens.size()) + 1;  // + its SEP
  }
  return n;
}

}  // namespace

std::vector<WindowPart> truncate_window(std::vector<WindowPart> parts,
                                        int max_len) {
  auto outermost_left = [&]() -> int {
    int best = -1;
    for (int i = 0; i < static_cast<int>(parts.size()); ++i) {
      if (parts[i].offset < 0 &&
          (best < 0 || parts[i].offset < parts[best].offset)) {
        best = i;
      }
    }
    return best;
  };
  auto outermost_right = [&]() -> int {
    int best = -1;
    for (int i = 0; i < static_cast<int>(parts.size()); ++i) {
      if (parts[i].offset > 0 &&
          (best < 0 || parts[i].offset > parts[best].offset)) {
        best = i;
      }
    }
    return best;
  };

  int last_removed_side = 0;  // 0 = nothing removed yet, -1 left, +1 right
  while (assembled_length(parts) > max_len) {
    int li = outermost_left();
    int ri = outermost_right();
    if (li < 0 && ri < 0) break;  // only the focus remains
    int victim;
    if (li < 0) {
      victim = ri;
    } else if (ri < 0) {
      victim = li;
    } else if (last_removed_side == 0) {
      // First removal: the shorter of the two outermost, ties to the right.
      victim = parts[ri].tokens.size() <= parts[li].tokens.size() ? ri : li;
    } else {
      victim = last_removed_side < 0 ? ri : li;
    }
    last_removed_side = parts[victim].offset < 0 ? -1 : 1;
    parts.erase(parts.begin() + victim);
  }

  if (assembled_length(parts) > max_len) {
    // Lone focus sentence longer than the budget: hard-truncate its tail,
    // keeping the trailing SEP.
    WindowPart& focus = parts.front();
    focus.tokens.resize(static_cast<std::size_t>(max_len - 1));
  }
  return parts;
}

ContextWindow assemble_window(const std::vector<WindowPart>& parts,
                              std::string doc_id, int sentence_index) {
  ContextWindow w;
  w.doc_id = std::move(doc_id);
  w.sentence_index = sentence_index;
  w.token_ids.reserve(static_cast<std::size_t>(assembled_length(parts)));
  for (const WindowPart& p : parts) {
    bool focus = p.offset == 0;
    if (focus) w.focus_begin = static_cast<int>(w.token_ids.size());
    for (int t : p.tokens) {
      w.token_ids.push_back(t);
      w.segment_ids.push_back(focus ? kSegmentFocus : kSegmentContext);
    }
    if (focus) {
      w.focus_end = static_cast<int>(w.token_ids.size());
      w.focus_sep_index = w.focus_end;
    }
    w.token_ids.push_back(subword::SubwordVocab::kSep);
    w.segment_ids.push_back(focus ? kSegmentFocus : kSegmentContext);
  }
  return w;
}

ContextWindow build_window(const Document& doc, int i,
                           const subword::SubwordVocab& vocab, int k,
                           int max_len,
                           const std::string* focus_text_override) {
  const int n = static_cast<int>(doc.sentences.size());
  std::vector<WindowPart> parts;
  parts.reserve(static_cast<std::size_t>(2 * k + 1));
  for (int off = -k; off <= k; ++off) {
    WindowPart part;
    part.offset = off;
    int j = i + off;
    if (j < 0) {
      part.tokens = {subword::SubwordVocab::kDocStart};
    } else if (j >= n) {
      part.tokens = {subword::SubwordVocab::kDocEnd};
    } else if (off == 0 && focus_text_override != nullptr) {
      part.tokens = subword::encode(*focus_text_override, vocab);
    } else {
      part.tokens = subword::encode(doc.sentences[j].text, vocab);
    }
    parts.push_back(std::move(part));
  }
  parts = truncate_window(std::move(parts), max_len);
  return assemble_window(parts, doc.doc_id, i);
}

WindowBatch window_batch(const std::vector<ContextWindow>& windows) {
  WindowBatch b;
  int max_len = 0;
  for (const ContextWindow& w : windows) {
    max_len = std::max(max_len, static_cast<int>(w.token_ids.size()));
  }
  const int rows = static_cast<int>(windows.size());
  b.tokens = Eigen::MatrixXi::Constant(rows, max_len,
                                       subword::SubwordVocab::kPad);
  b.segments =
      Eigen::MatrixXi::Constant(rows, max_len, kSegmentContext);
  for (int r = 0; r < rows; ++r) {
    const ContextWindow& w = windows[static_cast<std::size_t>(r)];
    for (int c = 0; c < static_cast<int>(w.token_ids.size()); ++c) {
      b.tokens(r, c) = w.token_ids[static_cast<std::size_t>(c)];
      b.segments(r, c) = w.segment_ids[static_cast<std::size_t>(c)];
    }
    b.lengths.push_back(static_cast<int>(w.token_ids.size()));
    b.focus_sep.push_back(w.focus_sep_index);
  }
  return b;
}

std::string window_to_json(const ContextWindow& w) {
  nlohmann::ordered_json j;
  j["token_ids"] = w.token_ids;
  j["segment_ids"] = w.segment_ids;
  j["focus_sep_index"] = w.focus_sep_index;
  return j.dump();
}

}  // namespace followup::window
