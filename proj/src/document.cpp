#include "followup/document.hpp"

#include "followup/corpus.hpp"

namespace followup {

Document make_document(std::string doc_id, std::string raw_text) {
  Document doc;
  doc.doc_id = std::move(doc_id);
  doc.raw_text = std::move(raw_text);
  auto spans = corpus::tokenize_sentences(doc.raw_text);
  if (spans.empty()) {
    throw Error(ErrorCode::malformed_input,
                "document '" + doc.doc_id + "' has no sentences");
  }
  doc.sentences.reserve(spans.size());
  for (const auto& s : spans) {
    Sentence sent;
    sent.begin = s.begin;
    sent.end = s.end;
    sent.text = ascii_lower(
        std::string_view(doc.raw_text).substr(s.begin, s.end - s.begin));
    sent.section = s.section;
    doc.sentences.push_back(std::move(sent));
  }
  return doc;
}

void validate_document(const Document& doc) {
  if (doc.sentences.empty()) {
    throw Error(ErrorCode::malformed_input,
                "document '" + doc.doc_id + "' has no sentences");
  }
  std::size_t prev_end = 0;
  bool first = true;
  for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
    const Sentence& s = doc.sentences[i];
    if (s.begin >= s.end || s.end > doc.raw_text.size()) {
      throw Error(ErrorCode::malformed_input,
                  "document '" + doc.doc_id + "': sentence " +
                      std::to_string(i) + " span out of bounds");
    }
    if (!first && s.begin < prev_end) {
      throw Error(ErrorCode::malformed_input,
                  "document '" + doc.doc_id + "': sentence " +
                      std::to_string(i) + " overlaps its predecessor");
    }
    std::string expect = ascii_lower(
        std::string_view(doc.raw_text).substr(s.begin, s.end - s.begin));
    if (expect != s.text) {
      throw Error(ErrorCode::malformed_input,
                  "document '" + doc.doc_id + "': sentence " +
                      std::to_string(i) + " text does not match its span");
    }
    bool blank = true;
    for (char c : s.text) {
      if (c != ' ' && c != '\t' && c != '\n' && c != '\r') blank = false;
    }
    if (blank) {
      throw Error(ErrorCode::malformed_input,
                  "document '" + doc.doc_id + "': sentence " +
                      std::to_string(i) + " is whitespace-only");
    }
    prev_end = s.end;
    first = false;
  }
}

}  // namespace followup
