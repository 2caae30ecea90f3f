#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "followup/corpus.hpp"

namespace followup::corpus {

namespace {

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_alpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::pair<std::size_t, std::size_t> trim_range(std::string_view text,
                                               std::size_t b, std::size_t e) {
  while (b < e && is_ws(text[b])) ++b;
  while (e > b && is_ws(text[e - 1])) --e;
  return {b, e};
}

// Tokens that end in a period without ending a sentence. Clinical notes are
// abbreviation-heavy; the set is a reconstruction, not exhaustive.
const std::unordered_set<std::string>& abbreviations() {
  static const std::unordered_set<std::string> abbr = {
      "dr",  "mr",  "mrs", "ms",  "st",   "jr",  "sr",  "vs",  "etc",
      "al",  "approx", "appt", "dept", "fig", "no",  "wk",  "mo",  "yr",
      "hr",  "min", "sec", "mg",  "mcg",  "ml",  "dl",  "gm",  "kg",
      "lb",  "oz",  "bid", "tid", "qid",  "qd",  "qhs", "prn", "po",
      "iv",  "im",  "sc",  "sq",  "md",   "rn",  "np",  "pa"};
  return abbr;
}

int count_words(std::string_view s) {
  int n = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_ws(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

// Normalized section name: lowercase, single-spaced, no trailing colon.
std::string normalize_section(std::string_view header) {
  std::string out;
  out.reserve(header.size());
  bool pending_space = false;
  for (char c : header) {
    if (c == ':') break;
    if (is_ws(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  return out;
}

struct Segments {
  std::string_view text;
  std::vector<SentenceSpan> out;
  std::optional<std::string> section;

  void emit(std::size_t b, std::size_t e) {
    auto [tb, te] = trim_range(text, b, e);
    if (tb < te) out.push_back({tb, te, section});
  }

  // Splits a run of plain text on ". " / "! " / "? " boundaries with an
  // abbreviation guard on periods.
  void emit_plain(std::size_t b, std::size_t e) {
    std::size_t start = b;
    std::size_t i = b;
    while (i < e) {
      char c = text[i];
      if (c != '.' && c != '!' && c != '?') {
        ++i;
        continue;
      }
      std::size_t run_end = i + 1;
      while (run_end < e && (text[run_end] == '.' || text[run_end] == '!' ||
                             text[run_end] == '?')) {
        ++run_end;
      }
      bool at_break = run_end == e || is_ws(text[run_end]);
      bool guarded = false;
      if (at_break && c == '.' && run_end == i + 1) {
        // Token immediately before the period: letters only.
        std::size_t wb = i;
        while (wb > b && is_alpha(text[wb - 1])) --wb;
        std::size_t len = i - wb;
        if (len == 1) {
          guarded = true;  // initials, list letters
        } else if (len > 1) {
          std::string tok = ascii_lower(text.substr(wb, len));
          guarded = abbreviations().count(tok) > 0;
        }
      }
      if (at_break && !guarded) {
        emit(start, run_end);
        start = run_end;
      }
      i = run_end;
    }
    emit(start, e);
  }
};

}  // namespace

bool is_section_header_line(std::string_view line) {
  auto [b, e] = trim_range(line, 0, line.size());
  std::string_view t = line.substr(b, e - b);
  std::size_t colon = t.find(':');
  if (colon == std::string_view::npos || colon == 0) return false;
  if (!is_alpha(t[0])) return false;
  for (std::size_t i = 0; i < colon; ++i) {
    char c = t[i];
    bool ok = is_alpha(c) || c == ' ' || c == '/' || c == '(' || c == ')' ||
              c == '-';
    if (!ok) return false;
  }
  return count_words(t.substr(0, colon)) <= 8;
}

bool is_enumerated_item_line(std::string_view line) {
  auto [b, e] = trim_range(line, 0, line.size());
  std::size_t i = b;
  std::size_t digits = 0;
  while (i < e && is_digit(line[i]) && digits < 4) {
    ++i;
    ++digits;
  }
  if (digits == 0 || digits > 3 || i >= e) return false;
  if (line[i] != '.' && line[i] != ')') return false;
  ++i;
  return i == e || is_ws(line[i]);
}

std::vector<SentenceSpan> tokenize_sentences(std::string_view raw_text) {
  Segments seg{raw_text, {}, std::nullopt};

  std::size_t plain_begin = std::string_view::npos;
  auto flush_plain = [&](std::size_t upto) {
    if (plain_begin != std::string_view::npos) {
      seg.emit_plain(plain_begin, upto);
      plain_begin = std::string_view::npos;
    }
  };

  std::size_t pos = 0;
  const std::size_t n = raw_text.size();
  while (pos <= n) {
    std::size_t eol = raw_text.find('\n', pos);
    if (eol == std::string_view::npos) eol = n;
    std::string_view line = raw_text.substr(pos, eol - pos);
    auto [lb, le] = trim_range(line, 0, line.size());

    if (lb == le) {
      flush_plain(pos);  // blank line: hard sentence boundary
    } else if (is_section_header_line(line)) {
      flush_plain(pos);
      std::size_t colon = line.find(':', lb);
      seg.section = normalize_section(line.substr(lb, colon - lb));
      seg.emit(pos + lb, pos + colon + 1);
      // Content after the colon on the same line is ordinary text.
      if (colon + 1 < le) seg.emit_plain(pos + colon + 1, pos + le);
    } else if (is_enumerated_item_line(line)) {
      flush_plain(pos);
      seg.emit(pos + lb, pos + le);
    } else {
      if (plain_begin == std::string_view::npos) plain_begin = pos + lb;
    }

    if (eol == n && plain_begin != std::string_view::npos) flush_plain(n);
    if (eol == n) break;
    pos = eol + 1;
  }
  return seg.out;
}

}  // namespace followup::corpus
