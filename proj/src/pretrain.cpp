#include "followup/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "followup/adamw.hpp"

namespace followup::pretrain {

using subword::SubwordVocab;

namespace {

bool maskable(int token) {
  return token != SubwordVocab::kSep && token != SubwordVocab::kDocStart &&
         token != SubwordVocab::kDocEnd && token != SubwordVocab::kPad;
}

}  // namespace

PretrainExample mask_context(const window::ContextWindow& w, double p,
                             Rng& rng) {
  PretrainExample ex;
  ex.window = w;
  for (std::size_t t = 0; t < w.token_ids.size(); ++t) {
    if (w.segment_ids[t] != window::kSegmentContext) continue;
    if (!maskable(w.token_ids[t])) continue;
    if (rng.bernoulli(p)) {
      ex.mlm_targets.push_back({static_cast<int>(t), w.token_ids[t]});
      ex.window.token_ids[t] = SubwordVocab::kMask;
    }
  }
  return ex;
}

std::pair<window::ContextWindow, bool> switch_focus(
    const Document& doc, int i, double p, Rng& rng,
    const SubwordVocab& vocab, int k, int max_len) {
  const int n = static_cast<int>(doc.sentences.size());
  const bool roll = rng.bernoulli(p);
  if (!roll || n < 2) {
    return {window::build_window(doc, i, vocab, k, max_len), false};
  }
  int j = static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(n - 1)));
  if (j >= i) ++j;  // uniform over the other sentences
  const std::string& text = doc.sentences[static_cast<std::size_t>(j)].text;
  return {window::build_window(doc, i, vocab, k, max_len, &text), true};
}

namespace {

struct BuiltBatch {
  window::WindowBatch batch;
  std::vector<model::MlmTarget> mlm;
  std::vector<char> switched;
  int n_mask = 0;
};

BuiltBatch build_batch(const std::vector<PretrainExample>& examples) {
  BuiltBatch out;
  std::vector<window::ContextWindow> windows;
  windows.reserve(examples.size());
  for (const auto& e : examples) windows.push_back(e.window);
  out.batch = window::window_batch(windows);
  const int L = out.batch.cols();
  for (std::size_t b = 0; b < examples.size(); ++b) {
    for (const auto& [pos, tok] : examples[b].mlm_targets) {
      out.mlm.push_back({static_cast<int>(b) * L + pos, tok});
    }
    out.switched.push_back(examples[b].switched ? 1 : 0);
  }
  out.n_mask = static_cast<int>(out.mlm.size());
  return out;
}

}  // namespace

model::PretrainLossParts<double> pretrain_losses(
    const model::EncoderParams<double>& params,
    const std::vector<PretrainExample>& examples) {
  BuiltBatch b = build_batch(examples);
  return model::pretrain_loss_and_grads<double>(
      params, b.batch, b.mlm, b.switched, model::Mode::eval, nullptr, nullptr);
}

void write_dataset(const std::string& path,
                   const std::vector<SentenceRef>& refs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::missing_file, "cannot write: " + path);
  for (const auto& r : refs) {
    nlohmann::ordered_json j;
    j["doc_id"] = r.doc_id;
    j["sentence_index"] = r.sentence_index;
    os << j.dump() << "\n";
  }
}

std::vector<SentenceRef> read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::missing_file, "cannot open: " + path);
  std::vector<SentenceRef> refs;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::ordered_json::parse(line);
    refs.push_back({j.at("doc_id").get<std::string>(),
                    j.at("sentence_index").get<int>()});
  }
  return refs;
}

PretrainResult pretrain_loop(const std::vector<Document>& corpus,
                             const std::vector<SentenceRef>& refs,
                             const SubwordVocab& vocab,
                             const PretrainConfig& cfg,
                             const model::EncoderParams<float>* init_params) {
  if (refs.empty()) {
    throw Error(ErrorCode::invalid_config, "empty pre-training dataset");
  }
  if (cfg.heldout_fraction <= 0.0 || cfg.heldout_fraction >= 1.0) {
    throw Error(ErrorCode::invalid_config,
                "held-out fraction must lie in (0, 1)");
  }
  std::unordered_map<std::string, const Document*> by_id;
  for (const Document& d : corpus) by_id[d.doc_id] = &d;
  std::vector<std::pair<const Document*, int>> resolved;
  std::string dangling;
  for (const auto& r : refs) {
    auto it = by_id.find(r.doc_id);
    if (it == by_id.end() ||
        r.sentence_index >= static_cast<int>(it->second->sentences.size()) ||
        r.sentence_index < 0) {
      dangling += " " + r.doc_id + ":" + std::to_string(r.sentence_index);
      continue;
    }
    resolved.push_back({it->second, r.sentence_index});
  }
  if (!dangling.empty()) {
    throw Error(ErrorCode::malformed_input,
                "dangling pre-training references:" + dangling);
  }

  model::EncoderConfig arch = cfg.arch;
  arch.vocab_size = vocab.size();
  arch.validate();

  // Held-out split, with masks and switches drawn once.
  Rng split_rng = seed_stream(cfg.seed, "pretrain-split");
  std::vector<std::size_t> order(resolved.size());
  std::iota(order.begin(), order.end(), 0);
  split_rng.shuffle(order);
  std::size_t n_held = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.heldout_fraction *
                                  static_cast<double>(resolved.size())));
  n_held = std::min(n_held, resolved.size() - 1);

  Rng held_rng = seed_stream(cfg.seed, "pretrain-heldout");
  std::vector<PretrainExample> heldout;
  for (std::size_t i = 0; i < n_held; ++i) {
    const auto& [doc, idx] = resolved[order[i]];
    auto [w, sw] = switch_focus(*doc, idx, cfg.switch_prob, held_rng, vocab,
                                cfg.context_radius, arch.max_len);
    PretrainExample ex = mask_context(w, cfg.mask_prob, held_rng);
    ex.switched = sw;
    heldout.push_back(std::move(ex));
  }
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_held),
                                     order.end());

  model::EncoderParams<float> params =
      init_params ? *init_params : [&] {
        Rng init_rng = seed_stream(cfg.seed, "pretrain-init");
        return model::EncoderParams<float>::init(arch, init_rng);
      }();
  if (params.cfg.vocab_size != vocab.size()) {
    throw Error(ErrorCode::fingerprint_mismatch,
                "initial checkpoint vocabulary size does not match");
  }

  auto eval_heldout = [&](const model::EncoderParams<float>& p) {
    double mlm_sum = 0.0, sw_sum = 0.0;
    long long mlm_n = 0, sw_n = 0;
    for (std::size_t start = 0; start < heldout.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(heldout.size(),
                                 start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<PretrainExample> chunk(heldout.begin() + static_cast<long>(start),
                                         heldout.begin() + static_cast<long>(end));
      BuiltBatch b = build_batch(chunk);
      auto parts = model::pretrain_loss_and_grads<float>(
          p, b.batch, b.mlm, b.switched, model::Mode::eval, nullptr, nullptr);
      mlm_sum += static_cast<double>(parts.mlm) * b.n_mask;
      mlm_n += b.n_mask;
      sw_sum += static_cast<double>(parts.switching) *
                static_cast<double>(chunk.size());
      sw_n += static_cast<long long>(chunk.size());
    }
    const double mlm = mlm_n > 0 ? mlm_sum / static_cast<double>(mlm_n) : 0.0;
    const double sw = sw_n > 0 ? sw_sum / static_cast<double>(sw_n) : 0.0;
    return std::pair<double, double>(mlm, mlm + sw);
  };

  PretrainResult result{params};
  auto [init_mlm, init_total] = eval_heldout(params);
  result.init_heldout_mlm = init_mlm;
  result.init_heldout_total = init_total;
  result.best_heldout = init_total;

  model::AdamW<float>::Options opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  model::AdamW<float> adam(opt);

  Rng shuffle_rng = seed_stream(cfg.seed, "pretrain-shuffle");
  Rng example_rng = seed_stream(cfg.seed, "pretrain-examples");
  Rng dropout_rng = seed_stream(cfg.seed, "pretrain-dropout");

  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(train_idx);
    double train_sum = 0.0;
    long long train_batches = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(train_idx.size(),
                                 start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<PretrainExample> chunk;
      for (std::size_t i = start; i < end; ++i) {
        const auto& [doc, idx] = resolved[train_idx[i]];
        auto [w, sw] = switch_focus(*doc, idx, cfg.switch_prob, example_rng,
                                    vocab, cfg.context_radius, arch.max_len);
        PretrainExample ex = mask_context(w, cfg.mask_prob, example_rng);
        ex.switched = sw;
        chunk.push_back(std::move(ex));
      }
      BuiltBatch b = build_batch(chunk);
      auto grads = model::EncoderParams<float>::zeros(params.cfg);
      auto parts = model::pretrain_loss_and_grads<float>(
          params, b.batch, b.mlm, b.switched, model::Mode::train, &dropout_rng,
          &grads);
      train_sum += static_cast<double>(parts.total);
      ++train_batches;
      auto pv = params.param_views();
      auto gv = grads.param_views();
      adam.step(pv, gv);
    }

    auto [held_mlm, held_total] = eval_heldout(params);
    PretrainEpochLog log;
    log.epoch = epoch;
    log.train_total =
        train_batches > 0 ? train_sum / static_cast<double>(train_batches)
                          : 0.0;
    log.heldout_total = held_total;
    log.heldout_mlm = held_mlm;
    log.elapsed_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    result.history.push_back(log);

    if (held_total < result.best_heldout) {
      result.best_heldout = held_total;
      result.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace followup::pretrain
