#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "followup/checkpoint.hpp"
#include "followup/document.hpp"
#include "followup/pretrain.hpp"
#include "followup/subword.hpp"

namespace followup::ttp {

// Per-(sentence, label) probabilities with row keys into the corpus.
struct ScoreMatrix {
  Eigen::MatrixXd values;  // n x kNumLabels
  std::vector<pretrain::SentenceRef> rows;
};

struct SelectionManifest {
  double threshold = 0.0;
  std::string seed_checkpoint_fingerprint;
  std::optional<std::size_t> target_size;
  std::vector<pretrain::SentenceRef> selected;
};

// Content hash of a checkpoint (config + tensors), recorded in manifests.
std::string checkpoint_fingerprint(model::Checkpoint& ckpt);

// Scores every sentence of the corpus with the seed model. The seed model
// sees single-sentence input by default (k = 0); pass k = 2 to give it
// context. Errors when the checkpoint was built with a different vocabulary.
ScoreMatrix score_unlabeled(model::Checkpoint& seed,
                            const std::vector<Document>& corpus,
                            const subword::SubwordVocab& vocab, int k = 0,
                            int batch_size = 64);

// Sentences whose maximum label score reaches the threshold (>=).
SelectionManifest select_sentences(const ScoreMatrix& scores,
                                   double threshold);

// The target_size-th largest per-sentence max score: with distinct scores the
// resulting selection has exactly target_size rows.
double calibrate_threshold(const ScoreMatrix& scores, std::size_t target_size);

// Resolves the manifest against a corpus, erroring with the full list of
// dangling references; returns one window reference per selected sentence.
std::vector<pretrain::SentenceRef> build_pretrain_dataset(
    const SelectionManifest& manifest, const std::vector<Document>& corpus);

void save_manifest(const std::string& path, const SelectionManifest& m);
SelectionManifest load_manifest(const std::string& path);

}  // namespace followup::ttp
