#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "followup/document.hpp"

namespace followup::corpus {

// ---------------------------------------------------------------------------
// Sentence / section segmentation
// ---------------------------------------------------------------------------

struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::optional<std::string> section;  // normalized header name, if any
};

// Clinical-note segmentation. A line whose prefix is letters/"/()- " ending
// in ":" (at most 8 words) is a section header and its own sentence; a line
// starting with an enumeration marker ("1." / "2)") is its own sentence;
// everything else is split on sentence terminators with an abbreviation
// guard. Spans cover all non-whitespace text. Whitespace-only input yields
// an empty list.
std::vector<SentenceSpan> tokenize_sentences(std::string_view raw_text);

bool is_section_header_line(std::string_view line);
bool is_enumerated_item_line(std::string_view line);

// ---------------------------------------------------------------------------
// De-identification surrogates
// ---------------------------------------------------------------------------

// Replaces every `[** ... **]` de-id template with a synthetic entity of
// matching kind (name, date, phone, hospital, other), drawn deterministically
// from seeded pools. Throws Error(malformed_input) naming the byte offset of
// an unclosed template. Idempotent on its own output.
std::string fill_surrogates(std::string_view raw_text, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

enum class CueMode { in_sentence, in_context };

// Label-prevalence targets mirroring a realistic discharge-note skew.
CorpusStats default_targets();

struct GeneratorConfig {
  int n_documents = 600;
  int sentences_min = 150;
  int sentences_max = 170;
  CorpusStats targets = default_targets();
  CueMode cue_mode = CueMode::in_sentence;
  std::uint64_t seed = 1;
};

// Deterministic given (cfg, seed). Label counts are assigned by quota so the
// realized prevalences land within rounding of the targets; each labeled
// sentence carries a label-specific cue phrase (in_sentence) or has a
// neighbor that does (in_context). Throws Error(invalid_config) when the
// targets cannot fit the sentence budget.
std::vector<Document> generate_corpus(const GeneratorConfig& cfg);

// Adds the patient_instructions label to every sentence whose section is
// "followup instructions" or "discharge instructions". Existing labels are
// preserved.
Document auto_label_instruction_sections(Document doc);

// Document-granularity partition, counts by largest remainder.
std::array<std::vector<Document>, 3> split_corpus(
    const std::vector<Document>& docs, const std::array<double, 3>& ratios,
    std::uint64_t seed);

CorpusStats compute_stats(const std::vector<Document>& docs);

// ---------------------------------------------------------------------------
// Corpus files: line-delimited JSON, one document per line.
// ---------------------------------------------------------------------------

void write_corpus_jsonl(std::ostream& os, const std::vector<Document>& docs);
void write_corpus_jsonl(const std::string& path,
                        const std::vector<Document>& docs);
std::vector<Document> read_corpus_jsonl(std::istream& is);
std::vector<Document> read_corpus_jsonl(const std::string& path);

std::string stats_to_json(const CorpusStats& s);

}  // namespace followup::corpus
