#include "followup/train.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "followup/adamw.hpp"
#include "followup/window.hpp"

namespace followup::train {

std::string epoch_log_to_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["train_loss"] = log.train_loss;
  j["val_macro_auroc"] = log.val_macro_auroc;
  j["elapsed_s"] = log.elapsed_s;
  return j.dump();
}

Eigen::MatrixXi label_matrix(const std::vector<Document>& docs) {
  long long n = 0;
  for (const auto& d : docs) n += static_cast<long long>(d.sentences.size());
  Eigen::MatrixXi y(n, kNumLabels);
  Eigen::Index row = 0;
  for (const auto& d : docs) {
    for (const auto& s : d.sentences) {
      for (int l = 0; l < kNumLabels; ++l) {
        y(row, l) = s.labels.bits[static_cast<std::size_t>(l)] ? 1 : 0;
      }
      ++row;
    }
  }
  return y;
}

ttp::ScoreMatrix score_corpus(const model::Checkpoint& ckpt,
                              const std::vector<Document>& docs,
                              const subword::SubwordVocab& vocab, int k,
                              int batch_size) {
  ttp::ScoreMatrix out;
  std::vector<window::ContextWindow> chunk;
  std::vector<Eigen::Index> chunk_rows;
  long long n = 0;
  for (const auto& d : docs) n += static_cast<long long>(d.sentences.size());
  out.values.resize(n, kNumLabels);

  auto flush = [&]() {
    if (chunk.empty()) return;
    auto batch = window::window_batch(chunk);
    auto acts = model::encoder_forward(ckpt.params, batch, model::Mode::eval);
    auto probs = model::classify_probs(ckpt.params, acts, batch);
    for (Eigen::Index b = 0; b < probs.cols(); ++b) {
      for (int l = 0; l < kNumLabels; ++l) {
        out.values(chunk_rows[static_cast<std::size_t>(b)], l) =
            static_cast<double>(probs(l, b));
      }
    }
    chunk.clear();
    chunk_rows.clear();
  };

  Eigen::Index row = 0;
  for (const auto& d : docs) {
    for (int i = 0; i < static_cast<int>(d.sentences.size()); ++i, ++row) {
      out.rows.push_back({d.doc_id, i});
      chunk.push_back(
          window::build_window(d, i, vocab, k, ckpt.params.cfg.max_len));
      chunk_rows.push_back(row);
      if (static_cast<int>(chunk.size()) >= batch_size) flush();
    }
  }
  flush();
  return out;
}

namespace {

double macro_auroc_of(const Eigen::MatrixXd& scores,
                      const Eigen::MatrixXi& labels) {
  double total = 0.0;
  int used = 0;
  for (int l = 0; l < kNumLabels; ++l) {
    auto v = eval::auroc(scores.col(l), labels.col(l));
    if (v) {
      total += *v;
      ++used;
    }
  }
  return used > 0 ? total / used : 0.0;
}

}  // namespace

FinetuneResult finetune(const model::Checkpoint* init,
                        const std::vector<Document>& train_docs,
                        const std::vector<Document>& val_docs,
                        const subword::SubwordVocab& vocab,
                        const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  long long n_train = 0;
  for (const auto& d : train_docs) {
    n_train += static_cast<long long>(d.sentences.size());
  }
  if (n_train == 0) {
    throw Error(ErrorCode::invalid_config, "empty training split");
  }
  if (init && init->vocab_fingerprint != vocab.fingerprint) {
    throw Error(ErrorCode::fingerprint_mismatch,
                "initial checkpoint vocabulary fingerprint does not match");
  }

  model::EncoderConfig arch = cfg.arch;
  arch.vocab_size = vocab.size();
  model::EncoderParams<float> params = [&] {
    if (init) return init->params;
    arch.validate();
    Rng init_rng = seed_stream(cfg.seed, "finetune-init");
    return model::EncoderParams<float>::init(arch, init_rng);
  }();

  const int k = cfg.context_radius;
  const int max_len = params.cfg.max_len;

  // Pre-built windows and targets for both splits.
  struct Example {
    window::ContextWindow window;
    std::array<float, kNumLabels> target{};
  };
  std::vector<Example> examples;
  examples.reserve(static_cast<std::size_t>(n_train));
  for (const auto& d : train_docs) {
    for (int i = 0; i < static_cast<int>(d.sentences.size()); ++i) {
      Example ex;
      ex.window = window::build_window(d, i, vocab, k, max_len);
      for (int l = 0; l < kNumLabels; ++l) {
        ex.target[static_cast<std::size_t>(l)] =
            d.sentences[static_cast<std::size_t>(i)]
                    .labels.bits[static_cast<std::size_t>(l)]
                ? 1.0f
                : 0.0f;
      }
      examples.push_back(std::move(ex));
    }
  }
  std::vector<window::ContextWindow> val_windows;
  for (const auto& d : val_docs) {
    for (int i = 0; i < static_cast<int>(d.sentences.size()); ++i) {
      val_windows.push_back(window::build_window(d, i, vocab, k, max_len));
    }
  }
  const Eigen::MatrixXi val_labels = label_matrix(val_docs);

  auto eval_val = [&](const model::EncoderParams<float>& p) {
    if (val_windows.empty()) return 0.0;
    Eigen::MatrixXd scores(static_cast<Eigen::Index>(val_windows.size()),
                           kNumLabels);
    std::size_t done = 0;
    std::vector<window::ContextWindow> chunk;
    auto flush = [&]() {
      if (chunk.empty()) return;
      auto batch = window::window_batch(chunk);
      auto acts = model::encoder_forward(p, batch, model::Mode::eval);
      auto probs = model::classify_probs(p, acts, batch);
      for (Eigen::Index b = 0; b < probs.cols(); ++b, ++done) {
        for (int l = 0; l < kNumLabels; ++l) {
          scores(static_cast<Eigen::Index>(done), l) =
              static_cast<double>(probs(l, b));
        }
      }
      chunk.clear();
    };
    for (const auto& w : val_windows) {
      chunk.push_back(w);
      if (static_cast<int>(chunk.size()) >= cfg.batch_size) flush();
    }
    flush();
    return macro_auroc_of(scores, val_labels);
  };

  model::AdamW<float>::Options opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.grad_clip = cfg.grad_clip;
  model::AdamW<float> adam(opt);

  Rng shuffle_rng = seed_stream(cfg.seed, "finetune-shuffle");
  Rng dropout_rng = seed_stream(cfg.seed, "finetune-dropout");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  FinetuneResult result;
  result.best_val_auroc = -1.0;
  model::EncoderParams<float> best = params;

  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    long long batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<window::ContextWindow> chunk;
      math::Mat<float> targets(kNumLabels,
                               static_cast<Eigen::Index>(end - start));
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = examples[order[i]];
        chunk.push_back(ex.window);
        for (int l = 0; l < kNumLabels; ++l) {
          targets(l, static_cast<Eigen::Index>(i - start)) =
              ex.target[static_cast<std::size_t>(l)];
        }
      }
      auto batch = window::window_batch(chunk);
      auto grads = model::EncoderParams<float>::zeros(params.cfg);
      loss_sum += static_cast<double>(model::classify_loss_and_grads<float>(
          params, batch, targets, model::Mode::train, &dropout_rng, &grads,
          nullptr, static_cast<float>(cfg.pos_weight)));
      ++batches;
      auto pv = params.param_views();
      auto gv = grads.param_views();
      adam.step(pv, gv);
    }

    EpochLog el;
    el.epoch = epoch;
    el.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    el.val_macro_auroc = eval_val(params);
    el.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.history.push_back(el);
    if (log) *log << epoch_log_to_json(el) << "\n";

    if (el.val_macro_auroc > result.best_val_auroc) {
      result.best_val_auroc = el.val_macro_auroc;
      result.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  result.checkpoint.params = std::move(best);
  result.checkpoint.vocab_fingerprint = vocab.fingerprint;
  result.checkpoint.phase = "finetuned";
  return result;
}

ExtractionReport predict_document(model::Checkpoint& ckpt,
                                  const Document& doc,
                                  const subword::SubwordVocab& vocab,
                                  const eval::Thresholds& thresholds, int k) {
  ExtractionReport report;
  report.doc_id = doc.doc_id;
  ttp::ScoreMatrix scores = ttp::score_unlabeled(ckpt, {doc}, vocab, k);
  long long surfaced = 0;
  for (Eigen::Index i = 0; i < scores.values.rows(); ++i) {
    bool any = false;
    for (int l = 0; l < kNumLabels; ++l) {
      if (scores.values(i, l) <
          thresholds.per_label[static_cast<std::size_t>(l)]) {
        continue;
      }
      any = true;
      const Sentence& s = doc.sentences[static_cast<std::size_t>(i)];
      ExtractedSentence ex;
      ex.sentence_index = static_cast<int>(i);
      ex.text = s.text;
      ex.begin = s.begin;
      ex.end = s.end;
      for (int m = 0; m < kNumLabels; ++m) {
        ex.scores[static_cast<std::size_t>(m)] = scores.values(i, m);
      }
      report.aspects[static_cast<std::size_t>(l)].push_back(std::move(ex));
    }
    surfaced += any ? 1 : 0;
  }
  report.coverage = doc.sentences.empty()
                        ? 0.0
                        : static_cast<double>(surfaced) /
                              static_cast<double>(doc.sentences.size());
  return report;
}

std::string extraction_to_json(const ExtractionReport& r) {
  nlohmann::ordered_json j;
  j["doc_id"] = r.doc_id;
  j["coverage"] = r.coverage;
  nlohmann::ordered_json aspects = nlohmann::ordered_json::object();
  for (int l = 0; l < kNumLabels; ++l) {
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& e : r.aspects[static_cast<std::size_t>(l)]) {
      nlohmann::ordered_json je;
      je["sentence_index"] = e.sentence_index;
      je["text"] = e.text;
      je["start"] = e.begin;
      je["end"] = e.end;
      nlohmann::ordered_json sc = nlohmann::ordered_json::array();
      for (double v : e.scores) sc.push_back(v);
      je["scores"] = std::move(sc);
      list.push_back(std::move(je));
    }
    aspects[std::string(label_names()[l])] = std::move(list);
  }
  j["aspects"] = std::move(aspects);
  return j.dump(2);
}

std::string extraction_to_text(const ExtractionReport& r) {
  std::string out = "action items for " + r.doc_id + "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "coverage: %.1f%% of sentences\n\n",
                100.0 * r.coverage);
  out += buf;
  for (int l = 0; l < kNumLabels; ++l) {
    const auto& list = r.aspects[static_cast<std::size_t>(l)];
    if (list.empty()) continue;
    out += "== " + std::string(label_names()[l]) + " ==\n";
    for (const auto& e : list) {
      std::snprintf(buf, sizeof(buf), "  [%d] ", e.sentence_index);
      out += buf;
      out += e.text;
      out += "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace followup::train
