#include "followup/ttp.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "followup/window.hpp"

namespace followup::ttp {

using ordered_json = nlohmann::ordered_json;

std::string checkpoint_fingerprint(model::Checkpoint& ckpt) {
  std::uint64_t h = 14695981039346656037ull;
  h = fnv1a64(ckpt.vocab_fingerprint, h);
  for (const auto& v : ckpt.params.param_views()) {
    h = fnv1a64(v.name, h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data),
                                 static_cast<std::size_t>(v.size()) *
                                     sizeof(float)),
                h);
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

ScoreMatrix score_unlabeled(model::Checkpoint& seed,
                            const std::vector<Document>& corpus,
                            const subword::SubwordVocab& vocab, int k,
                            int batch_size) {
  if (seed.vocab_fingerprint != vocab.fingerprint) {
    throw Error(ErrorCode::fingerprint_mismatch,
                "seed checkpoint was built with vocabulary " +
                    seed.vocab_fingerprint + " but the corpus is encoded "
                    "with " + vocab.fingerprint);
  }
  // Scoring runs in double and deduplicates identical windows, so equal
  // sentences always land on bit-identical rows regardless of batching.
  const auto params = model::EncoderParams<double>::from(seed.params);

  ScoreMatrix out;
  std::vector<std::size_t> window_of_row;  // row -> unique window index
  std::vector<window::ContextWindow> unique_windows;
  std::unordered_map<std::string, std::size_t> window_index;
  for (const Document& d : corpus) {
    for (int i = 0; i < static_cast<int>(d.sentences.size()); ++i) {
      out.rows.push_back({d.doc_id, i});
      auto w = window::build_window(d, i, vocab, k, params.cfg.max_len);
      std::string key(reinterpret_cast<const char*>(w.token_ids.data()),
                      w.token_ids.size() * sizeof(int));
      key.push_back(static_cast<char>(w.focus_sep_index & 0xff));
      key.push_back(static_cast<char>((w.focus_sep_index >> 8) & 0xff));
      auto [it, fresh] = window_index.emplace(std::move(key),
                                              unique_windows.size());
      if (fresh) unique_windows.push_back(std::move(w));
      window_of_row.push_back(it->second);
    }
  }
  out.values.resize(static_cast<Eigen::Index>(out.rows.size()), kNumLabels);

  Eigen::MatrixXd unique_scores(static_cast<Eigen::Index>(
                                    unique_windows.size()),
                                kNumLabels);
  std::size_t done = 0;
  std::vector<window::ContextWindow> chunk;
  auto flush = [&]() {
    if (chunk.empty()) return;
    auto batch = window::window_batch(chunk);
    auto acts = model::encoder_forward(params, batch, model::Mode::eval);
    auto probs = model::classify_probs(params, acts, batch);
    for (Eigen::Index b = 0; b < probs.cols(); ++b, ++done) {
      for (int l = 0; l < kNumLabels; ++l) {
        unique_scores(static_cast<Eigen::Index>(done), l) = probs(l, b);
      }
    }
    chunk.clear();
  };
  for (const auto& w : unique_windows) {
    chunk.push_back(w);
    if (static_cast<int>(chunk.size()) >= batch_size) flush();
  }
  flush();

  for (std::size_t r = 0; r < window_of_row.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) =
        unique_scores.row(static_cast<Eigen::Index>(window_of_row[r]));
  }
  return out;
}

SelectionManifest select_sentences(const ScoreMatrix& scores,
                                   double threshold) {
  SelectionManifest m;
  m.threshold = threshold;
  for (Eigen::Index i = 0; i < scores.values.rows(); ++i) {
    if (scores.values.row(i).maxCoeff() >= threshold) {
      m.selected.push_back(scores.rows[static_cast<std::size_t>(i)]);
    }
  }
  return m;
}

double calibrate_threshold(const ScoreMatrix& scores,
                           std::size_t target_size) {
  const std::size_t n = static_cast<std::size_t>(scores.values.rows());
  if (target_size == 0 || target_size > n) {
    throw Error(ErrorCode::invalid_config,
                "target size must lie in [1, corpus sentence count]");
  }
  std::vector<double> maxes(n);
  for (std::size_t i = 0; i < n; ++i) {
    maxes[i] = scores.values.row(static_cast<Eigen::Index>(i)).maxCoeff();
  }
  std::nth_element(maxes.begin(),
                   maxes.begin() + static_cast<long>(target_size - 1),
                   maxes.end(), std::greater<double>());
  return maxes[target_size - 1];
}

std::vector<pretrain::SentenceRef> build_pretrain_dataset(
    const SelectionManifest& manifest, const std::vector<Document>& corpus) {
  std::unordered_map<std::string, const Document*> by_id;
  for (const Document& d : corpus) by_id[d.doc_id] = &d;
  std::string dangling;
  std::vector<pretrain::SentenceRef> refs;
  for (const auto& r : manifest.selected) {
    auto it = by_id.find(r.doc_id);
    if (it == by_id.end() || r.sentence_index < 0 ||
        r.sentence_index >= static_cast<int>(it->second->sentences.size())) {
      dangling += " " + r.doc_id + ":" + std::to_string(r.sentence_index);
      continue;
    }
    refs.push_back(r);
  }
  if (!dangling.empty()) {
    throw Error(ErrorCode::malformed_input,
                "manifest references missing sentences:" + dangling);
  }
  return refs;
}

void save_manifest(const std::string& path, const SelectionManifest& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::missing_file, "cannot write: " + path);
  ordered_json j;
  j["threshold"] = m.threshold;
  j["seed_checkpoint_fingerprint"] = m.seed_checkpoint_fingerprint;
  if (m.target_size) {
    j["target_size"] = *m.target_size;
  } else {
    j["target_size"] = nullptr;
  }
  ordered_json sel = ordered_json::array();
  for (const auto& r : m.selected) {
    sel.push_back({r.doc_id, r.sentence_index});
  }
  j["selected"] = std::move(sel);
  os << j.dump() << "\n";
}

SelectionManifest load_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::missing_file, "cannot open: " + path);
  ordered_json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::malformed_input,
                std::string("bad manifest: ") + e.what());
  }
  SelectionManifest m;
  m.threshold = j.at("threshold").get<double>();
  m.seed_checkpoint_fingerprint =
      j.at("seed_checkpoint_fingerprint").get<std::string>();
  if (!j.at("target_size").is_null()) {
    m.target_size = j.at("target_size").get<std::size_t>();
  }
  for (const auto& r : j.at("selected")) {
    m.selected.push_back({r.at(0).get<std::string>(), r.at(1).get<int>()});
  }
  return m;
}

}  // namespace followup::ttp
