#pragma once

#include <string>
#include <utility>
#include <vector>

#include "followup/model.hpp"
#include "followup/window.hpp"

namespace followup::pretrain {

// One pre-training instance: a (possibly focus-switched) window with the
// masked context positions and their original token ids.
struct PretrainExample {
  window::ContextWindow window;
  std::vector<std::pair<int, int>> mlm_targets;  // (position, original id)
  bool switched = false;
};

// Masks each non-special segment-B token independently with probability p.
// SEP, DOC_START and DOC_END are never masked; segment A is never touched.
PretrainExample mask_context(const window::ContextWindow& w, double p,
                             Rng& rng);

// With probability p replaces the focus sentence with a uniformly chosen
// other sentence of the same document, keeping the context. Single-sentence
// documents never switch.
std::pair<window::ContextWindow, bool> switch_focus(
    const Document& doc, int i, double p, Rng& rng,
    const subword::SubwordVocab& vocab, int k = 2, int max_len = 512);

// Evaluation-mode losses for a set of examples (mlm, switch, total).
model::PretrainLossParts<double> pretrain_losses(
    const model::EncoderParams<double>& params,
    const std::vector<PretrainExample>& examples);

// ---------------------------------------------------------------------------
// Pre-training dataset files: line-delimited JSON references into a corpus.
// Windows are rebuilt at load time, keeping the files small.
// ---------------------------------------------------------------------------

struct SentenceRef {
  std::string doc_id;
  int sentence_index = 0;
};

void write_dataset(const std::string& path,
                   const std::vector<SentenceRef>& refs);
std::vector<SentenceRef> read_dataset(const std::string& path);

struct PretrainConfig {
  model::EncoderConfig arch;
  double mask_prob = 0.15;
  double switch_prob = 0.25;
  double heldout_fraction = 0.1;
  int batch_size = 32;
  double lr = 3e-4;
  double weight_decay = 0.01;
  int max_epochs = 12;
  int patience = 3;
  int context_radius = 2;
  std::uint64_t seed = 1;
};

struct PretrainEpochLog {
  int epoch = 0;
  double train_total = 0.0;
  double heldout_total = 0.0;
  double heldout_mlm = 0.0;
  double elapsed_s = 0.0;
};

struct PretrainResult {
  model::EncoderParams<float> params;
  int best_epoch = -1;  // -1: initialization beat every epoch
  double best_heldout = 0.0;
  double init_heldout_mlm = 0.0;
  double init_heldout_total = 0.0;
  std::vector<PretrainEpochLog> history;
};

// Shuffled epochs with fresh masking/switching per epoch; held-out examples
// are drawn once so epoch losses are comparable. Stops after `patience`
// epochs without improvement and returns the best checkpoint by held-out
// total loss.
PretrainResult pretrain_loop(
    const std::vector<Document>& corpus, const std::vector<SentenceRef>& refs,
    const subword::SubwordVocab& vocab, const PretrainConfig& cfg,
    const model::EncoderParams<float>* init_params = nullptr);

}  // namespace followup::pretrain
