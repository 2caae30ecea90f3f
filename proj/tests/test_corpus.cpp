#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "followup/corpus.hpp"
#include "followup/rng.hpp"

using namespace followup;
using namespace followup::corpus;

namespace {

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

// Spans must cover all non-whitespace text: the gaps between consecutive
// spans (and before/after) are whitespace only.
void check_span_coverage(const Document& doc) {
  std::size_t pos = 0;
  for (const Sentence& s : doc.sentences) {
    for (std::size_t i = pos; i < s.begin; ++i) {
      CAPTURE(doc.raw_text.substr(pos, s.begin - pos));
      REQUIRE(is_ws(doc.raw_text[i]));
    }
    pos = s.end;
  }
  for (std::size_t i = pos; i < doc.raw_text.size(); ++i) {
    REQUIRE(is_ws(doc.raw_text[i]));
  }
}

}  // namespace

TEST_CASE("tokenize: header plus two sentences") {
  auto spans =
      tokenize_sentences("BRIEF HOSPITAL COURSE:\nPatient was stable. "
                         "Discharged home.");
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].begin == 0);
  CHECK(spans[0].end == 22);  // "BRIEF HOSPITAL COURSE:"
  REQUIRE(spans[0].section.has_value());
  CHECK(*spans[0].section == "brief hospital course");
  CHECK(*spans[1].section == "brief hospital course");
  CHECK(*spans[2].section == "brief hospital course");
}

TEST_CASE("tokenize: single sentence spans the full text") {
  auto spans = tokenize_sentences("hello.");
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].begin == 0);
  CHECK(spans[0].end == 6);
  CHECK(!spans[0].section.has_value());
}

TEST_CASE("tokenize: whitespace-only input yields empty list") {
  CHECK(tokenize_sentences("  \n\t \n").empty());
}

TEST_CASE("tokenize: 20-line note matches hand segmentation") {
  // 2 headers, 3 numbered list items, wrapped prose, an abbreviation, and a
  // blank line. Hand count below.
  const std::string note =
      "ADMISSION DATE:\n"                                  // 1  header
      "the patient arrived overnight\n"                    //    |
      "and was admitted to the icu.\n"                     // 2  wrapped prose
      "He was seen by dr. hartman on rounds.\n"            // 3  abbreviation
      "Vitals were stable.  Labs were drawn.\n"            // 4,5
      "\n"
      "DISCHARGE MEDICATIONS:\n"                           // 6  header
      "1. aspirin 81 mg daily\n"                           // 7  list item
      "2. lisinopril 10 mg daily\n"                        // 8  list item
      "3. atorvastatin 40 mg at bedtime\n"                 // 9  list item
      "He will continue these at home. Follow the plan\n"  // 10, |
      "as written. No changes were made.\n"                // 11, 12
      "the visiting nurse will check on him twice\n"       //    |
      "a week going forward\n";                            // 13 wrapped prose
  auto spans = tokenize_sentences(note);
  REQUIRE(spans.size() == 13);
  CHECK(*spans[5].section == "discharge medications");
  Document doc = make_document("fixture", note);
  CHECK(doc.sentences[2].text == "he was seen by dr. hartman on rounds.");
  CHECK(doc.sentences[6].text == "1. aspirin 81 mg daily");
  check_span_coverage(doc);
  validate_document(doc);
}

TEST_CASE("tokenize: header with trailing content on the same line") {
  auto spans = tokenize_sentences("DISCHARGE DIAGNOSIS: pneumonia");
  REQUIRE(spans.size() == 2);
  CHECK(*spans[0].section == "discharge diagnosis");
  CHECK(*spans[1].section == "discharge diagnosis");
}

TEST_CASE("tokenize: nine-word colon line is not a header") {
  CHECK(is_section_header_line("FOLLOW UP:"));
  CHECK(!is_section_header_line(
      "the quick brown fox jumps over the lazy dog:"));
  CHECK(!is_section_header_line("no colon here"));
  CHECK(!is_section_header_line("12 HOUR NOTE:"));
}

TEST_CASE("surrogates: seeded snapshot and determinism") {
  const std::string raw = "[**Name**] seen on [**2101-03-14**]";
  std::string a = fill_surrogates(raw, 7);
  std::string b = fill_surrogates(raw, 7);
  CHECK(a == b);
  CHECK(a.find("[**") == std::string::npos);
  // Frozen snapshot for seed 7.
  CHECK(a == "agnes keller seen on 2101-09-26");
  // A different seed draws different surrogates.
  CHECK(fill_surrogates(raw, 8) != a);
}

TEST_CASE("surrogates: identity without placeholders") {
  const std::string raw = "no placeholders in this text.";
  CHECK(fill_surrogates(raw, 1) == raw);
}

TEST_CASE("surrogates: idempotent on own output") {
  const std::string raw =
      "[**Name**] called [**Telephone**] from [**Hospital**] re [**Location**]";
  std::string once = fill_surrogates(raw, 3);
  CHECK(fill_surrogates(once, 99) == once);
}

TEST_CASE("surrogates: unclosed template errors with byte offset") {
  CHECK_THROWS_WITH_AS(fill_surrogates("[**broken", 1),
                       "unclosed de-id template at byte 0", Error);
  try {
    fill_surrogates("ok [**also broken", 1);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::malformed_input);
    CHECK(std::string(e.what()).find("byte 3") != std::string::npos);
  }
}

TEST_CASE("auto label: instruction sections gain patient_instructions") {
  Document doc = make_document(
      "d1",
      "DISCHARGE INSTRUCTIONS:\nTake it easy. Rest often. Call with "
      "concerns.\nBRIEF HOSPITAL COURSE:\nUneventful stay.");
  REQUIRE(doc.sentences.size() == 6);
  doc.sentences[2].labels.set(Label::appointment);
  Document out = auto_label_instruction_sections(doc);
  for (int i = 0; i < 4; ++i) {
    CHECK(out.sentences[i].labels.has(Label::patient_instructions));
  }
  CHECK(out.sentences[2].labels.has(Label::appointment));  // union semantics
  CHECK(!out.sentences[4].labels.has(Label::patient_instructions));
  CHECK(!out.sentences[5].labels.has(Label::patient_instructions));
}

TEST_CASE("auto label: no matching section is a no-op; monotone") {
  Document doc = make_document("d2", "PHYSICAL EXAM:\nNormal exam.");
  Document out = auto_label_instruction_sections(doc);
  for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
    CHECK(out.sentences[i].labels == doc.sentences[i].labels);
  }
}

TEST_CASE("generator: default targets realized within tolerance") {
  GeneratorConfig cfg;
  cfg.n_documents = 600;
  cfg.sentences_min = 150;
  cfg.sentences_max = 170;
  cfg.targets = default_targets();
  cfg.seed = 1;
  auto docs = generate_corpus(cfg);
  REQUIRE(docs.size() == 600);
  for (const Document& d : docs) {
    validate_document(d);
    check_span_coverage(d);
  }
  CorpusStats st = compute_stats(docs);
  // Relative tolerance 20% for labels with target >= 0.5%.
  for (int l = 0; l < kNumLabels; ++l) {
    if (cfg.targets.per_label[l] < 0.005) continue;
    CHECK(st.per_label[l] ==
          doctest::Approx(cfg.targets.per_label[l]).epsilon(0.20));
  }
  CHECK(st.labeled_fraction ==
        doctest::Approx(cfg.targets.labeled_fraction).epsilon(0.20));
  CHECK(st.multilabel_fraction ==
        doctest::Approx(cfg.targets.multilabel_fraction).epsilon(0.20));
  CHECK(st.neighbor_fraction ==
        doctest::Approx(cfg.targets.neighbor_fraction).epsilon(0.20));
}

TEST_CASE("generator: zero targets give a label-free corpus") {
  GeneratorConfig cfg;
  cfg.n_documents = 5;
  cfg.sentences_min = 10;
  cfg.sentences_max = 14;
  cfg.targets = CorpusStats{};  // all zero
  cfg.seed = 9;
  auto docs = generate_corpus(cfg);
  for (const Document& d : docs) {
    for (const Sentence& s : d.sentences) CHECK(!s.labels.any());
  }
}

TEST_CASE("generator: deterministic byte-identical output") {
  GeneratorConfig cfg;
  cfg.n_documents = 12;
  cfg.sentences_min = 20;
  cfg.sentences_max = 30;
  cfg.targets = default_targets();
  cfg.seed = 42;
  auto a = generate_corpus(cfg);
  auto b = generate_corpus(cfg);
  std::ostringstream sa, sb;
  write_corpus_jsonl(sa, a);
  write_corpus_jsonl(sb, b);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("generator: infeasible targets error") {
  GeneratorConfig cfg;
  cfg.n_documents = 2;
  cfg.sentences_min = 5;
  cfg.sentences_max = 5;
  cfg.targets = default_targets();
  cfg.targets.labeled_fraction = 0.9;
  for (auto& p : cfg.targets.per_label) p = 0.30;
  CHECK_THROWS_AS(generate_corpus(cfg), Error);
}

TEST_CASE("generator: cue-in-context plants cues in an unlabeled neighbor") {
  GeneratorConfig cfg;
  cfg.n_documents = 30;
  cfg.sentences_min = 24;
  cfg.sentences_max = 32;
  cfg.targets = default_targets();
  cfg.cue_mode = CueMode::in_context;
  cfg.seed = 5;
  auto docs = generate_corpus(cfg);
  int labeled = 0;
  for (const Document& d : docs) {
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
      if (!d.sentences[i].labels.any()) continue;
      ++labeled;
      REQUIRE(i > 0);
      REQUIRE(i + 1 < d.sentences.size());
      CHECK(!d.sentences[i - 1].labels.any());
      CHECK(!d.sentences[i + 1].labels.any());
    }
  }
  CHECK(labeled > 50);
}

TEST_CASE("split: paper-sized corpus lands 518/100/100") {
  GeneratorConfig cfg;
  cfg.n_documents = 718;
  cfg.sentences_min = 4;
  cfg.sentences_max = 6;
  cfg.targets = CorpusStats{};
  cfg.seed = 2;
  auto docs = generate_corpus(cfg);
  auto parts = split_corpus(docs, {518.0 / 718, 100.0 / 718, 100.0 / 718}, 7);
  CHECK(parts[0].size() == 518);
  CHECK(parts[1].size() == 100);
  CHECK(parts[2].size() == 100);
}

TEST_CASE("split: three docs, equal ratios, exact partition") {
  std::vector<Document> docs;
  for (int i = 0; i < 3; ++i) {
    docs.push_back(make_document("d" + std::to_string(i), "one sentence."));
  }
  auto parts = split_corpus(docs, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 3);
  CHECK(parts[0].size() == 1);
  CHECK(parts[1].size() == 1);
  CHECK(parts[2].size() == 1);

  std::set<std::string> seen;
  for (const auto& p : parts) {
    for (const auto& d : p) {
      CHECK(seen.insert(d.doc_id).second);  // no doc in two splits
    }
  }
  CHECK(seen.size() == 3);

  CHECK_THROWS_AS(
      split_corpus({docs[0], docs[1]}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 3), Error);
}

TEST_CASE("split: partition property on a generated corpus") {
  GeneratorConfig cfg;
  cfg.n_documents = 47;
  cfg.sentences_min = 5;
  cfg.sentences_max = 9;
  cfg.targets = CorpusStats{};
  cfg.seed = 11;
  auto docs = generate_corpus(cfg);
  auto parts = split_corpus(docs, {0.6, 0.2, 0.2}, 1);
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& p : parts) {
    total += p.size();
    for (const auto& d : p) CHECK(seen.insert(d.doc_id).second);
  }
  CHECK(total == docs.size());
}

TEST_CASE("stats: hand-counted fixture") {
  // One 10-sentence document: sentences 2 and 3 share {appointment};
  // sentence 5 has {medication, lab}; sentence 8 has {imaging}.
  Document doc = make_document(
      "fix", "s0. s1. s2. s3. s4. s5. s6. s7. s8. s9.");
  REQUIRE(doc.sentences.size() == 10);
  doc.sentences[2].labels.set(Label::appointment);
  doc.sentences[3].labels.set(Label::appointment);
  doc.sentences[5].labels.set(Label::medication);
  doc.sentences[5].labels.set(Label::lab);
  doc.sentences[8].labels.set(Label::imaging);
  CorpusStats st = compute_stats({doc});
  CHECK(st.labeled_fraction == doctest::Approx(0.4));
  CHECK(st.multilabel_fraction == doctest::Approx(0.25));
  CHECK(st.neighbor_fraction == doctest::Approx(0.5));
  CHECK(st.per_label[static_cast<int>(Label::appointment)] ==
        doctest::Approx(0.2));
  CHECK(st.per_label[static_cast<int>(Label::medication)] ==
        doctest::Approx(0.1));
}

TEST_CASE("stats: empty-label corpus reports zeros") {
  Document doc = make_document("z", "nothing here. nothing there.");
  CorpusStats st = compute_stats({doc});
  CHECK(st.labeled_fraction == 0.0);
  CHECK(st.multilabel_fraction == 0.0);
  CHECK(st.neighbor_fraction == 0.0);
}

TEST_CASE("corpus jsonl: write-read-write is byte identical") {
  GeneratorConfig cfg;
  cfg.n_documents = 8;
  cfg.sentences_min = 12;
  cfg.sentences_max = 18;
  cfg.targets = default_targets();
  cfg.seed = 13;
  auto docs = generate_corpus(cfg);
  std::ostringstream first;
  write_corpus_jsonl(first, docs);
  std::istringstream in(first.str());
  auto docs2 = read_corpus_jsonl(in);
  std::ostringstream second;
  write_corpus_jsonl(second, docs2);
  CHECK(first.str() == second.str());
  REQUIRE(docs2.size() == docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    CHECK(docs2[i].doc_id == docs[i].doc_id);
    REQUIRE(docs2[i].sentences.size() == docs[i].sentences.size());
    for (std::size_t j = 0; j < docs[i].sentences.size(); ++j) {
      CHECK(docs2[i].sentences[j].text == docs[i].sentences[j].text);
      CHECK(docs2[i].sentences[j].labels == docs[i].sentences[j].labels);
    }
  }
}
