#include <cstdio>
#include <string>
#include <vector>

#include "followup/corpus.hpp"
#include "followup/rng.hpp"

namespace followup::corpus {

namespace {

const std::vector<std::string>& first_names() {
  static const std::vector<std::string> v = {
      "martha", "ruth",   "harold", "eleanor", "walter", "agnes",
      "ernest", "mabel",  "clara",  "vernon",  "irene",  "chester",
      "doris",  "howard", "edith",  "leonard", "pearl",  "stanley",
      "hazel",  "arthur", "june",   "raymond", "vera",   "francis"};
  return v;
}

const std::vector<std::string>& last_names() {
  static const std::vector<std::string> v = {
      "kline",    "fletcher", "barrow",  "whitfield", "mercer",  "holloway",
      "tilden",   "garvey",   "pruitt",  "langley",   "ostrom",  "fairbanks",
      "marsh",    "dunbar",   "keller",  "royce",     "hewitt",  "colby",
      "ashford",  "beckett",  "lowry",   "draper",    "emmett",  "sands"};
  return v;
}

const std::vector<std::string>& hospital_names() {
  static const std::vector<std::string> v = {
      "saint ambrose medical center", "riverview general hospital",
      "oakdale community hospital",   "north ridge medical center",
      "lakeside memorial hospital",   "west haven clinic",
      "mercy crossing hospital",      "pinewood regional hospital"};
  return v;
}

const std::vector<std::string>& other_fillers() {
  static const std::vector<std::string> v = {
      "the outpatient clinic", "the rehabilitation facility",
      "the primary care office", "the specialty clinic",
      "the home care agency", "the nursing facility",
      "the community health center", "the covering practice"};
  return v;
}

bool looks_like_date(std::string_view s) {
  // YYYY-M-D with optional surrounding junk stripped by the caller.
  int part = 0, digits = 0;
  for (char c : s) {
    if (c >= '0' && c <= '9') {
      ++digits;
      continue;
    }
    if (c == '-' || c == '/') {
      if (digits == 0) return false;
      ++part;
      digits = 0;
      continue;
    }
    return false;
  }
  return part == 2 && digits > 0;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  std::string h = ascii_lower(haystack);
  return h.find(needle) != std::string::npos;
}

std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

std::string surrogate_for(std::string_view content, Rng& rng) {
  std::string_view c = trim(content);
  if (looks_like_date(c) || contains_ci(c, "date") || contains_ci(c, "month") ||
      contains_ci(c, "year")) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d",
                  static_cast<int>(rng.uniform_int(2100, 2112)),
                  static_cast<int>(rng.uniform_int(1, 12)),
                  static_cast<int>(rng.uniform_int(1, 28)));
    return buf;
  }
  if (contains_ci(c, "name")) {
    return rng.choice(first_names()) + " " + rng.choice(last_names());
  }
  if (contains_ci(c, "hospital")) {
    return rng.choice(hospital_names());
  }
  if (contains_ci(c, "telephone") || contains_ci(c, "phone")) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d-%04d",
                  static_cast<int>(rng.uniform_int(200, 999)),
                  static_cast<int>(rng.uniform_int(1000, 9999)));
    return buf;
  }
  return rng.choice(other_fillers());
}

}  // namespace

std::string fill_surrogates(std::string_view raw_text, std::uint64_t seed) {
  Rng rng = seed_stream(seed, "surrogate");
  std::string out;
  out.reserve(raw_text.size());
  std::size_t i = 0;
  while (i < raw_text.size()) {
    std::size_t open = raw_text.find("[**", i);
    if (open == std::string_view::npos) {
      out.append(raw_text.substr(i));
      break;
    }
    out.append(raw_text.substr(i, open - i));
    std::size_t close = raw_text.find("**]", open + 3);
    if (close == std::string_view::npos) {
      throw Error(ErrorCode::malformed_input,
                  "unclosed de-id template at byte " + std::to_string(open));
    }
    out.append(surrogate_for(raw_text.substr(open + 3, close - open - 3), rng));
    i = close + 3;
  }
  return out;
}

}  // namespace followup::corpus
