#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "followup/checkpoint.hpp"
#include "followup/document.hpp"
#include "followup/metrics.hpp"
#include "followup/subword.hpp"
#include "followup/ttp.hpp"

namespace followup::train {

struct TrainConfig {
  model::EncoderConfig arch;  // vocab_size is taken from the vocabulary
  int batch_size = 32;
  double lr = 3e-4;
  double weight_decay = 0.01;
  int max_epochs = 20;
  int patience = 3;
  int context_radius = 2;  // 0 reproduces the no-context variant
  double pos_weight = 1.0;
  double grad_clip = 0.0;  // off by default
  std::uint64_t seed = 1;

  void validate() const {
    if (batch_size < 1 || patience < 1 || context_radius < 0 ||
        max_epochs < 1 || pos_weight <= 0.0) {
      throw Error(ErrorCode::invalid_config, "invalid training configuration");
    }
  }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_macro_auroc = 0.0;
  double elapsed_s = 0.0;
};

std::string epoch_log_to_json(const EpochLog& log);

struct FinetuneResult {
  model::Checkpoint checkpoint;  // best epoch, phase = "finetuned"
  int best_epoch = 0;
  double best_val_auroc = 0.0;
  std::vector<EpochLog> history;
};

// BCE over all 7 labels, every parameter updated, early stopping on the
// validation macro AUROC. `init` continues from a (pre-trained) checkpoint;
// null starts from random initialization. The training log is written to
// `log` as line-delimited JSON when given.
FinetuneResult finetune(const model::Checkpoint* init,
                        const std::vector<Document>& train_docs,
                        const std::vector<Document>& val_docs,
                        const subword::SubwordVocab& vocab,
                        const TrainConfig& cfg, std::ostream* log = nullptr);

// Fast float-path corpus scoring used for validation and test evaluation.
ttp::ScoreMatrix score_corpus(const model::Checkpoint& ckpt,
                              const std::vector<Document>& docs,
                              const subword::SubwordVocab& vocab, int k,
                              int batch_size = 64);

Eigen::MatrixXi label_matrix(const std::vector<Document>& docs);

// ---------------------------------------------------------------------------
// Document-level extraction
// ---------------------------------------------------------------------------

struct ExtractedSentence {
  int sentence_index = 0;
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::array<double, kNumLabels> scores{};
};

struct ExtractionReport {
  std::string doc_id;
  std::array<std::vector<ExtractedSentence>, kNumLabels> aspects;
  double coverage = 0.0;  // fraction of sentences surfaced under any aspect
};

// Windows, scores and thresholds every sentence; a sentence may appear under
// several aspects. Scoring is batching-invariant (double precision path).
ExtractionReport predict_document(model::Checkpoint& ckpt,
                                  const Document& doc,
                                  const subword::SubwordVocab& vocab,
                                  const eval::Thresholds& thresholds, int k);

std::string extraction_to_json(const ExtractionReport& r);
std::string extraction_to_text(const ExtractionReport& r);

}  // namespace followup::train
