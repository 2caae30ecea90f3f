#include <fstream>
#include <sstream>

#include "followup/corpus.hpp"

#include <json.hpp>

namespace followup::corpus {

using ordered_json = nlohmann::ordered_json;

void write_corpus_jsonl(std::ostream& os, const std::vector<Document>& docs) {
  for (const Document& doc : docs) {
    ordered_json j;
    j["doc_id"] = doc.doc_id;
    j["text"] = doc.raw_text;
    ordered_json sents = ordered_json::array();
    for (const Sentence& s : doc.sentences) {
      ordered_json js;
      js["start"] = s.begin;
      js["end"] = s.end;
      ordered_json labels = ordered_json::array();
      for (int l = 0; l < kNumLabels; ++l) {
        if (s.labels.bits[l]) labels.push_back(label_names()[l]);
      }
      js["labels"] = std::move(labels);
      if (s.section) {
        js["section"] = *s.section;
      } else {
        js["section"] = nullptr;
      }
      sents.push_back(std::move(js));
    }
    j["sentences"] = std::move(sents);
    os << j.dump() << "\n";
  }
}

void write_corpus_jsonl(const std::string& path,
                        const std::vector<Document>& docs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw Error(ErrorCode::missing_file, "cannot open for write: " + path);
  }
  write_corpus_jsonl(os, docs);
}

std::vector<Document> read_corpus_jsonl(std::istream& is) {
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::malformed_input,
                  "corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    Document doc;
    doc.doc_id = j.at("doc_id").get<std::string>();
    doc.raw_text = j.at("text").get<std::string>();
    for (const auto& js : j.at("sentences")) {
      Sentence s;
      s.begin = js.at("start").get<std::size_t>();
      s.end = js.at("end").get<std::size_t>();
      for (const auto& ln : js.at("labels")) {
        auto l = label_from_name(ln.get<std::string>());
        if (!l) {
          throw Error(ErrorCode::malformed_input,
                      "corpus line " + std::to_string(lineno) +
                          ": unknown label '" + ln.get<std::string>() + "'");
        }
        s.labels.set(*l);
      }
      if (js.contains("section") && !js.at("section").is_null()) {
        s.section = js.at("section").get<std::string>();
      }
      if (s.end > doc.raw_text.size() || s.begin >= s.end) {
        throw Error(ErrorCode::malformed_input,
                    "corpus line " + std::to_string(lineno) +
                        ": sentence span out of bounds");
      }
      s.text = ascii_lower(
          std::string_view(doc.raw_text).substr(s.begin, s.end - s.begin));
      doc.sentences.push_back(std::move(s));
    }
    validate_document(doc);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> read_corpus_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorCode::missing_file, "cannot open: " + path);
  }
  return read_corpus_jsonl(is);
}

std::string stats_to_json(const CorpusStats& s) {
  ordered_json j;
  ordered_json per = ordered_json::object();
  for (int l = 0; l < kNumLabels; ++l) {
    per[std::string(label_names()[l])] = s.per_label[l];
  }
  j["per_label_prevalence"] = std::move(per);
  j["labeled_fraction"] = s.labeled_fraction;
  j["multilabel_fraction"] = s.multilabel_fraction;
  j["neighbor_same_label_fraction"] = s.neighbor_fraction;
  return j.dump(2);
}

}  // namespace followup::corpus
