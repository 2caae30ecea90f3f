// followup: extract clinical action items from discharge notes.
//
// Subcommands mirror the pipeline: gen -> split -> vocab -> finetune (seed)
// -> ttp-select -> pretrain -> finetune -> tune-thresholds -> eval/extract.
// Every command is a deterministic wrapper over one library pipeline; all
// randomness flows from --seed through named sub-streams.
//
// Exit codes: 0 ok, 2 usage, 3 missing file, 4 fingerprint mismatch,
// 5 invalid config, 6 malformed input, 1 other. Errors are emitted as JSON
// on stderr.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "followup/baselines.hpp"
#include "followup/corpus.hpp"
#include "followup/gradcheck.hpp"
#include "followup/pretrain.hpp"
#include "followup/train.hpp"

using namespace followup;
using nlohmann::ordered_json;

namespace {

// Flat dotted-key JSON config; flags win over config values.
class Config {
 public:
  void load(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
      throw Error(ErrorCode::missing_file, "config file not found: " + path);
    }
    ordered_json j;
    try {
      is >> j;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::invalid_config,
                  std::string("bad config file: ") + e.what());
    }
    for (const auto& [key, value] : j.items()) values_[key] = value;
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return it->second.get<T>();
  }

 private:
  std::map<std::string, ordered_json> values_;
};

Config g_config;

subword::SubwordVocab load_vocab_checked(const std::string& path) {
  return subword::load_vocab(path);
}

model::Checkpoint load_model_checked(const std::string& path,
                                     const subword::SubwordVocab& vocab) {
  model::Checkpoint ckpt = model::load_checkpoint(path);
  if (ckpt.vocab_fingerprint != vocab.fingerprint) {
    throw Error(ErrorCode::fingerprint_mismatch,
                "checkpoint " + path + " was built with vocabulary " +
                    ckpt.vocab_fingerprint + ", not " + vocab.fingerprint);
  }
  return ckpt;
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stod(part));
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::missing_file, "cannot write: " + path);
  os << text;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::missing_file, "cannot open: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------- gen

struct GenArgs {
  int docs = 600;
  int smin = 150, smax = 170;
  std::string cue_mode = "in_sentence";
  double labeled_frac = -1, multi_frac = -1, neighbor_frac = -1;
  std::string prevalences;  // comma list of 7 overrides
  std::uint64_t seed = 1;
  std::string out;
  std::string stats_out;
};

int run_gen(const GenArgs& a) {
  corpus::GeneratorConfig cfg;
  cfg.n_documents = a.docs;
  cfg.sentences_min = a.smin;
  cfg.sentences_max = a.smax;
  cfg.targets = corpus::default_targets();
  if (a.labeled_frac >= 0) cfg.targets.labeled_fraction = a.labeled_frac;
  if (a.multi_frac >= 0) cfg.targets.multilabel_fraction = a.multi_frac;
  if (a.neighbor_frac >= 0) cfg.targets.neighbor_fraction = a.neighbor_frac;
  if (!a.prevalences.empty()) {
    auto vals = parse_ratios(a.prevalences);
    if (vals.size() != kNumLabels) {
      throw Error(ErrorCode::invalid_config,
                  "--prevalence needs exactly 7 comma-separated values");
    }
    for (int l = 0; l < kNumLabels; ++l) {
      cfg.targets.per_label[static_cast<std::size_t>(l)] = vals[l];
    }
  }
  if (a.cue_mode == "in_sentence") {
    cfg.cue_mode = corpus::CueMode::in_sentence;
  } else if (a.cue_mode == "in_context") {
    cfg.cue_mode = corpus::CueMode::in_context;
  } else {
    throw Error(ErrorCode::invalid_config,
                "--cue-mode must be in_sentence or in_context");
  }
  cfg.seed = a.seed;
  auto docs = corpus::generate_corpus(cfg);
  corpus::write_corpus_jsonl(a.out, docs);
  if (!a.stats_out.empty()) {
    write_text_file(a.stats_out, corpus::stats_to_json(corpus::compute_stats(docs)));
  }
  std::cout << "wrote " << docs.size() << " documents to " << a.out << "\n";
  return 0;
}

// -------------------------------------------------------------------- split

int run_split(const std::string& in, const std::string& ratios,
              std::uint64_t seed, const std::string& out_prefix) {
  auto docs = corpus::read_corpus_jsonl(in);
  auto r = parse_ratios(ratios);
  if (r.size() != 3) {
    throw Error(ErrorCode::invalid_config, "--ratios needs 3 values");
  }
  auto parts = corpus::split_corpus(docs, {r[0], r[1], r[2]}, seed);
  const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    std::string path = out_prefix + "." + names[i] + ".jsonl";
    corpus::write_corpus_jsonl(path, parts[static_cast<std::size_t>(i)]);
    std::cout << names[i] << ": " << parts[static_cast<std::size_t>(i)].size()
              << " docs -> " << path << "\n";
  }
  return 0;
}

// -------------------------------------------------------------------- vocab

int run_vocab(const std::vector<std::string>& inputs, int size,
              const std::string& out) {
  if (size < 300) {
    throw Error(ErrorCode::invalid_config,
                "--size must be at least 300 for a usable vocabulary");
  }
  std::vector<std::string> lines;
  for (const auto& path : inputs) {
    for (const auto& d : corpus::read_corpus_jsonl(path)) {
      for (const auto& s : d.sentences) lines.push_back(s.text);
    }
  }
  auto vocab = subword::train_vocab(lines, size);
  subword::save_vocab(out, vocab);
  std::cout << "vocab of " << vocab.size() << " pieces, fingerprint "
            << vocab.fingerprint << " -> " << out << "\n";
  return 0;
}

// --------------------------------------------------------------- ttp-select

struct TtpArgs {
  std::string model, vocab, pool, out, dataset_out;
  double threshold = -1;
  double target_frac = -1;
  long long target_size = -1;
  long long random_size = -1;
  bool with_context = false;
  std::uint64_t seed = 1;
};

int run_ttp_select(const TtpArgs& a) {
  auto pool = corpus::read_corpus_jsonl(a.pool);
  ttp::SelectionManifest manifest;
  if (a.random_size > 0) {
    // Random-selection control of the same size, no seed model involved.
    std::vector<pretrain::SentenceRef> rows;
    for (const auto& d : pool) {
      for (int i = 0; i < static_cast<int>(d.sentences.size()); ++i) {
        rows.push_back({d.doc_id, i});
      }
    }
    if (static_cast<std::size_t>(a.random_size) > rows.size()) {
      throw Error(ErrorCode::invalid_config,
                  "--random-size exceeds the pool sentence count");
    }
    Rng rng = seed_stream(a.seed, "ttp-random-control");
    rng.shuffle(rows);
    rows.resize(static_cast<std::size_t>(a.random_size));
    manifest.threshold = 0.0;
    manifest.seed_checkpoint_fingerprint = "random-control";
    manifest.target_size = static_cast<std::size_t>(a.random_size);
    manifest.selected = std::move(rows);
  } else {
    auto vocab = load_vocab_checked(a.vocab);
    auto seed_model = load_model_checked(a.model, vocab);
    ttp::ScoreMatrix scores =
        ttp::score_unlabeled(seed_model, pool, vocab, a.with_context ? 2 : 0);
    double threshold = a.threshold;
    std::optional<std::size_t> target;
    if (threshold < 0) {
      long long size = a.target_size;
      if (size <= 0 && a.target_frac > 0) {
        size = std::llround(a.target_frac *
                            static_cast<double>(scores.values.rows()));
        size = std::max<long long>(size, 1);
      }
      if (size <= 0) {
        throw Error(ErrorCode::invalid_config,
                    "need --threshold, --target-frac, or --target-size");
      }
      target = static_cast<std::size_t>(size);
      threshold = ttp::calibrate_threshold(scores, *target);
    }
    manifest = ttp::select_sentences(scores, threshold);
    manifest.target_size = target;
    manifest.seed_checkpoint_fingerprint =
        ttp::checkpoint_fingerprint(seed_model);
  }
  ttp::save_manifest(a.out, manifest);
  std::cout << "selected " << manifest.selected.size()
            << " sentences at threshold " << manifest.threshold << " -> "
            << a.out << "\n";
  if (!a.dataset_out.empty()) {
    auto refs = ttp::build_pretrain_dataset(manifest, pool);
    pretrain::write_dataset(a.dataset_out, refs);
    std::cout << "pre-training dataset -> " << a.dataset_out << "\n";
  }
  return 0;
}

// ----------------------------------------------------------------- pretrain

struct ArchArgs {
  int layers = 4, heads = 4, d_model = 128, d_ff = 512, max_len = 512;
  double dropout = 0.1;

  void apply(model::EncoderConfig& cfg) const {
    cfg.n_layers = layers;
    cfg.n_heads = heads;
    cfg.d_model = d_model;
    cfg.d_ff = d_ff;
    cfg.max_len = max_len;
    cfg.dropout = dropout;
  }
};

void add_arch_flags(CLI::App* cmd, ArchArgs& a) {
  cmd->add_option("--layers", a.layers, "encoder layers");
  cmd->add_option("--heads", a.heads, "attention heads");
  cmd->add_option("--d-model", a.d_model, "model width");
  cmd->add_option("--d-ff", a.d_ff, "feed-forward width");
  cmd->add_option("--max-len", a.max_len, "window length budget");
  cmd->add_option("--dropout", a.dropout, "dropout rate");
}

struct PretrainArgs {
  std::string corpus, dataset, vocab, out, init, log;
  ArchArgs arch;
  int epochs = 12, patience = 3, batch = 32;
  double lr = 3e-4, heldout = 0.1, mask_prob = 0.15, switch_prob = 0.25;
  std::uint64_t seed = 1;
};

int run_pretrain(const PretrainArgs& a) {
  auto vocab = load_vocab_checked(a.vocab);
  auto docs = corpus::read_corpus_jsonl(a.corpus);
  auto refs = pretrain::read_dataset(a.dataset);

  pretrain::PretrainConfig cfg;
  a.arch.apply(cfg.arch);
  cfg.max_epochs = a.epochs;
  cfg.patience = a.patience;
  cfg.batch_size = a.batch;
  cfg.lr = a.lr;
  cfg.heldout_fraction = a.heldout;
  cfg.mask_prob = a.mask_prob;
  cfg.switch_prob = a.switch_prob;
  cfg.seed = a.seed;

  std::optional<model::EncoderParams<float>> init;
  if (!a.init.empty()) {
    auto ckpt = load_model_checked(a.init, vocab);
    init = ckpt.params;
  }
  auto result = pretrain::pretrain_loop(docs, refs, vocab, cfg,
                                        init ? &*init : nullptr);
  model::Checkpoint out;
  out.params = result.params;
  out.vocab_fingerprint = vocab.fingerprint;
  out.phase = "pretrained";
  model::save_checkpoint(a.out, out);
  if (!a.log.empty()) {
    std::string text;
    for (const auto& h : result.history) {
      ordered_json j;
      j["epoch"] = h.epoch;
      j["train_total"] = h.train_total;
      j["heldout_total"] = h.heldout_total;
      j["heldout_mlm"] = h.heldout_mlm;
      j["elapsed_s"] = h.elapsed_s;
      text += j.dump() + "\n";
    }
    write_text_file(a.log, text);
  }
  std::cout << "best epoch " << result.best_epoch << ", held-out loss "
            << result.best_heldout << " (mlm at init "
            << result.init_heldout_mlm << ") -> " << a.out << "\n";
  return 0;
}

// ----------------------------------------------------------------- finetune

struct FinetuneArgs {
  std::string train, val, vocab, out, init, log;
  ArchArgs arch;
  int epochs = 20, patience = 3, batch = 32, k = 2;
  double lr = 3e-4, pos_weight = 1.0, grad_clip = 0.0, weight_decay = 0.01;
  std::uint64_t seed = 1;
};

int run_finetune(const FinetuneArgs& a) {
  auto vocab = load_vocab_checked(a.vocab);
  auto train_docs = corpus::read_corpus_jsonl(a.train);
  auto val_docs = corpus::read_corpus_jsonl(a.val);

  train::TrainConfig cfg;
  a.arch.apply(cfg.arch);
  cfg.max_epochs = a.epochs;
  cfg.patience = a.patience;
  cfg.batch_size = a.batch;
  cfg.context_radius = a.k;
  cfg.lr = a.lr;
  cfg.pos_weight = a.pos_weight;
  cfg.grad_clip = a.grad_clip;
  cfg.weight_decay = a.weight_decay;
  cfg.seed = a.seed;

  std::optional<model::Checkpoint> init;
  if (!a.init.empty()) init = load_model_checked(a.init, vocab);

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log, std::ios::binary);
    if (!log) throw Error(ErrorCode::missing_file, "cannot write: " + a.log);
  }
  auto result = train::finetune(init ? &*init : nullptr, train_docs, val_docs,
                                vocab, cfg, a.log.empty() ? nullptr : &log);
  model::save_checkpoint(a.out, result.checkpoint);
  std::cout << "best epoch " << result.best_epoch << ", val macro AUROC "
            << result.best_val_auroc << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------- tune-thresholds / eval

int run_tune_thresholds(const std::string& model_path,
                        const std::string& vocab_path, const std::string& val,
                        int k, const std::string& out) {
  auto vocab = load_vocab_checked(vocab_path);
  auto ckpt = load_model_checked(model_path, vocab);
  auto docs = corpus::read_corpus_jsonl(val);
  auto scores = train::score_corpus(ckpt, docs, vocab, k);
  auto thresholds =
      eval::tune_thresholds(scores.values, train::label_matrix(docs));
  write_text_file(out, eval::thresholds_to_json(thresholds));
  std::cout << "thresholds -> " << out << "\n";
  return 0;
}

int run_eval(const std::string& model_path, const std::string& vocab_path,
             const std::string& in, const std::string& thresholds_path, int k,
             const std::string& out, bool table) {
  auto vocab = load_vocab_checked(vocab_path);
  auto ckpt = load_model_checked(model_path, vocab);
  auto docs = corpus::read_corpus_jsonl(in);
  auto thresholds = eval::thresholds_from_json(read_text_file(thresholds_path));
  auto scores = train::score_corpus(ckpt, docs, vocab, k);
  auto report =
      eval::evaluate(scores.values, train::label_matrix(docs), thresholds);
  if (!out.empty()) write_text_file(out, eval::report_to_json(report));
  if (table || out.empty()) std::cout << eval::report_to_table(report);
  return 0;
}

// ------------------------------------------------------------------ extract

int run_extract(const std::string& model_path, const std::string& vocab_path,
                const std::string& in, const std::string& doc_id,
                const std::string& thresholds_path, int k,
                const std::string& out, bool text) {
  auto vocab = load_vocab_checked(vocab_path);
  auto ckpt = load_model_checked(model_path, vocab);
  auto docs = corpus::read_corpus_jsonl(in);
  auto thresholds = eval::thresholds_from_json(read_text_file(thresholds_path));
  const Document* doc = nullptr;
  for (const auto& d : docs) {
    if (d.doc_id == doc_id) {
      doc = &d;
      break;
    }
  }
  if (!doc) {
    throw Error(ErrorCode::invalid_config,
                "doc id '" + doc_id + "' not present in " + in);
  }
  auto report = train::predict_document(ckpt, *doc, vocab, thresholds, k);
  if (!out.empty()) write_text_file(out, train::extraction_to_json(report));
  if (text || out.empty()) std::cout << train::extraction_to_text(report);
  return 0;
}

// -------------------------------------------------------------------- stats

int run_stats(const std::string& in, const std::string& vocab_path,
              const std::string& out) {
  auto docs = corpus::read_corpus_jsonl(in);
  auto stats = corpus::compute_stats(docs);
  ordered_json j = ordered_json::parse(corpus::stats_to_json(stats));
  if (!vocab_path.empty()) {
    auto vocab = load_vocab_checked(vocab_path);
    double total = 0;
    int counted = 0;
    for (const auto& d : docs) {
      for (const auto& s : d.sentences) {
        if (!s.labels.any() || counted >= 100) continue;
        total += subword::count_oov(s.text, vocab);
        ++counted;
      }
    }
    j["avg_oov_per_labeled_sentence"] =
        counted > 0 ? total / counted : 0.0;
    j["oov_sample_size"] = counted;
  }
  const std::string text = j.dump(2);
  if (!out.empty()) {
    write_text_file(out, text);
  } else {
    std::cout << text << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- gradcheck

int run_gradcheck(int samples, std::uint64_t seed) {
  using namespace followup::model;
  int failures = 0;
  auto report = [&](const char* name, const GradCheckResult& r) {
    const bool ok = r.max_rel_error < 1e-4;
    failures += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << ": max rel err "
              << r.max_rel_error << " over " << r.checked << " samples\n";
  };

  EncoderConfig cfg;  // desk-scale defaults: 4 layers, 4 heads, 128 wide
  cfg.vocab_size = 500;
  cfg.dropout = 0.0;
  Rng rng = seed_stream(seed, "gradcheck-params");
  auto params = EncoderParams<double>::init(cfg, rng);
  for (Eigen::Index j = 0; j < params.cls_w.cols(); ++j) {
    for (Eigen::Index i = 0; i < params.cls_w.rows(); ++i) {
      params.cls_w(i, j) = 0.05 * rng.normal();
    }
  }
  for (Eigen::Index i = 0; i < params.switch_w.size(); ++i) {
    params.switch_w(i) = 0.05 * rng.normal();
  }

  // Synthetic ragged batch.
  window::WindowBatch batch;
  const int B = 2, L = 24;
  Rng brng = seed_stream(seed, "gradcheck-batch");
  batch.tokens = Eigen::MatrixXi::Constant(B, L, 0);
  batch.segments = Eigen::MatrixXi::Constant(B, L, 1);
  for (int r = 0; r < B; ++r) {
    int len = r == 0 ? L : L - 5;
    int fb = 3, fe = 10;
    for (int t = 0; t < len; ++t) {
      batch.tokens(r, t) = static_cast<int>(brng.uniform_int(7, 499));
      batch.segments(r, t) = (t >= fb && t <= fe) ? 0 : 1;
    }
    batch.tokens(r, fe) = subword::SubwordVocab::kSep;
    batch.lengths.push_back(len);
    batch.focus_sep.push_back(fe);
  }
  Eigen::MatrixXd targets(kNumLabels, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    for (Eigen::Index i = 0; i < kNumLabels; ++i) {
      targets(i, j) = brng.bernoulli(0.4) ? 1.0 : 0.0;
    }
  }

  {
    auto grads = EncoderParams<double>::zeros(cfg);
    classify_loss_and_grads(params, batch, targets, Mode::eval, nullptr,
                            &grads);
    Rng pick = seed_stream(seed, "gradcheck-pick-bce");
    report("encoder + classification BCE",
           grad_check(
               params.param_views(), grads.param_views(),
               [&] {
                 return classify_loss_and_grads<double>(
                     params, batch, targets, Mode::eval, nullptr, nullptr);
               },
               1e-4, samples, &pick));
  }
  {
    std::vector<MlmTarget> mlm;
    for (int r = 0; r < B; ++r) {
      for (int t = 0; t < batch.lengths[static_cast<std::size_t>(r)]; t += 4) {
        if (batch.segments(r, t) == 1) {
          mlm.push_back({r * L + t, batch.tokens(r, t)});
        }
      }
    }
    std::vector<char> switched = {1, 0};
    auto grads = EncoderParams<double>::zeros(cfg);
    pretrain_loss_and_grads(params, batch, mlm, switched, Mode::eval, nullptr,
                            &grads);
    Rng pick = seed_stream(seed, "gradcheck-pick-mlm");
    report("mlm + switch losses",
           grad_check(
               params.param_views(), grads.param_views(),
               [&] {
                 return static_cast<double>(
                     pretrain_loss_and_grads<double>(params, batch, mlm,
                                                     switched, Mode::eval,
                                                     nullptr, nullptr)
                         .total);
               },
               1e-4, samples, &pick));
  }
  {
    baselines::CnnConfig ccfg;
    ccfg.vocab_size = 60;
    ccfg.emb_dim = 16;
    ccfg.filters = 8;
    Rng crng = seed_stream(seed, "gradcheck-cnn");
    auto cp = baselines::CnnParams<double>::init(ccfg, crng);
    for (Eigen::Index j = 0; j < cp.cls_w.cols(); ++j) {
      for (Eigen::Index i = 0; i < cp.cls_w.rows(); ++i) {
        cp.cls_w(i, j) = 0.1 * crng.normal();
      }
    }
    std::vector<std::vector<int>> sentences = {
        {2, 3, 4, 5, 6, 7}, {8, 9, 10}, {11, 12, 13, 14}};
    math::Mat<double> ctargets(kNumLabels, 3);
    for (Eigen::Index j = 0; j < 3; ++j) {
      for (Eigen::Index i = 0; i < kNumLabels; ++i) {
        ctargets(i, j) = crng.bernoulli(0.4) ? 1.0 : 0.0;
      }
    }
    auto cgrads = baselines::CnnParams<double>::zeros(ccfg);
    baselines::cnn_loss_and_grads(cp, sentences, ctargets, &cgrads);
    Rng pick = seed_stream(seed, "gradcheck-pick-cnn");
    report("cnn baseline",
           grad_check(
               cp.param_views(), cgrads.param_views(),
               [&] {
                 return baselines::cnn_loss_and_grads<double>(
                     cp, sentences, ctargets, nullptr, nullptr);
               },
               1e-5, samples, &pick));
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"action-item extraction pipeline for discharge notes"};
  app.require_subcommand(1);

  // Config file (flag or FOLLOWUP_CONFIG); values become flag defaults.
  std::string config_path;
  if (const char* env = std::getenv("FOLLOWUP_CONFIG")) config_path = env;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  }
  try {
    if (!config_path.empty()) g_config.load(config_path);
  } catch (const Error& e) {
    ordered_json j;
    j["code"] = static_cast<int>(e.code());
    j["error"] = e.what();
    std::cerr << j.dump() << "\n";
    return static_cast<int>(e.code());
  }
  app.add_option("--config", config_path, "JSON config with flat dotted keys");

  const std::uint64_t root_seed = g_config.get<std::uint64_t>("seed", 1);

  GenArgs gen;
  gen.docs = g_config.get<int>("gen.docs", 600);
  gen.smin = g_config.get<int>("gen.sentences_min", 150);
  gen.smax = g_config.get<int>("gen.sentences_max", 170);
  gen.cue_mode = g_config.get<std::string>("gen.cue_mode", "in_sentence");
  gen.seed = g_config.get<std::uint64_t>("gen.seed", root_seed);
  auto* cgen = app.add_subcommand("gen", "generate a synthetic corpus");
  cgen->add_option("--docs", gen.docs, "number of documents");
  cgen->add_option("--sentences-min", gen.smin, "min sentences per document");
  cgen->add_option("--sentences-max", gen.smax, "max sentences per document");
  cgen->add_option("--cue-mode", gen.cue_mode, "in_sentence | in_context");
  cgen->add_option("--labeled-frac", gen.labeled_frac, "labeled fraction");
  cgen->add_option("--multi-frac", gen.multi_frac, "multi-label fraction");
  cgen->add_option("--neighbor-frac", gen.neighbor_frac,
                   "neighbor same-label fraction");
  cgen->add_option("--prevalence", gen.prevalences,
                   "7 comma-separated per-label prevalences");
  cgen->add_option("--seed", gen.seed, "rng seed");
  cgen->add_option("--out", gen.out, "output corpus jsonl")->required();
  cgen->add_option("--stats-out", gen.stats_out, "also write a stats report");

  std::string split_in, split_ratios = "0.7215,0.13925,0.13925",
              split_prefix;
  std::uint64_t split_seed = g_config.get<std::uint64_t>("split.seed",
                                                         root_seed);
  auto* csplit = app.add_subcommand("split", "document-level corpus split");
  csplit->add_option("--in", split_in, "corpus jsonl")->required();
  csplit->add_option("--ratios", split_ratios, "three ratios summing to 1");
  csplit->add_option("--seed", split_seed, "rng seed");
  csplit->add_option("--out-prefix", split_prefix, "output path prefix")
      ->required();

  std::vector<std::string> vocab_in;
  int vocab_size = g_config.get<int>("vocab.size", 8000);
  std::string vocab_out;
  auto* cvocab = app.add_subcommand("vocab", "train a subword vocabulary");
  cvocab->add_option("--in", vocab_in, "corpus jsonl file(s)")->required();
  cvocab->add_option("--size", vocab_size, "target vocabulary size");
  cvocab->add_option("--out", vocab_out, "output vocab file")->required();

  TtpArgs ttp_args;
  ttp_args.seed = g_config.get<std::uint64_t>("ttp.seed", root_seed);
  auto* cttp = app.add_subcommand(
      "ttp-select", "select task-targeted pre-training sentences");
  cttp->add_option("--model", ttp_args.model, "seed checkpoint");
  cttp->add_option("--vocab", ttp_args.vocab, "vocab file");
  cttp->add_option("--pool", ttp_args.pool, "unlabeled corpus jsonl")
      ->required();
  cttp->add_option("--threshold", ttp_args.threshold, "fixed score threshold");
  cttp->add_option("--target-frac", ttp_args.target_frac,
                   "calibrate the threshold to select this fraction");
  cttp->add_option("--target-size", ttp_args.target_size,
                   "calibrate the threshold to select this many sentences");
  cttp->add_option("--random-size", ttp_args.random_size,
                   "random-selection control of this size (no seed model)");
  cttp->add_flag("--context", ttp_args.with_context,
                 "score with k=2 context (default: single sentences)");
  cttp->add_option("--seed", ttp_args.seed, "rng seed (random control)");
  cttp->add_option("--out", ttp_args.out, "manifest path")->required();
  cttp->add_option("--dataset-out", ttp_args.dataset_out,
                   "also write the pre-training dataset references");

  PretrainArgs pre;
  pre.epochs = g_config.get<int>("pretrain.epochs", 12);
  pre.lr = g_config.get<double>("pretrain.lr", 3e-4);
  pre.seed = g_config.get<std::uint64_t>("pretrain.seed", root_seed);
  auto* cpre = app.add_subcommand("pretrain",
                                  "masked-context + switch pre-training");
  cpre->add_option("--corpus", pre.corpus, "corpus jsonl")->required();
  cpre->add_option("--dataset", pre.dataset, "dataset references jsonl")
      ->required();
  cpre->add_option("--vocab", pre.vocab, "vocab file")->required();
  cpre->add_option("--out", pre.out, "output checkpoint")->required();
  cpre->add_option("--init", pre.init, "continue from this checkpoint");
  cpre->add_option("--log", pre.log, "epoch log jsonl");
  add_arch_flags(cpre, pre.arch);
  cpre->add_option("--epochs", pre.epochs, "max epochs");
  cpre->add_option("--patience", pre.patience, "early-stopping patience");
  cpre->add_option("--batch", pre.batch, "batch size");
  cpre->add_option("--lr", pre.lr, "learning rate");
  cpre->add_option("--heldout-frac", pre.heldout, "held-out fraction");
  cpre->add_option("--mask-prob", pre.mask_prob, "context mask probability");
  cpre->add_option("--switch-prob", pre.switch_prob,
                   "focus switch probability");
  cpre->add_option("--seed", pre.seed, "rng seed");

  FinetuneArgs fin;
  fin.epochs = g_config.get<int>("finetune.epochs", 20);
  fin.lr = g_config.get<double>("finetune.lr", 3e-4);
  fin.k = g_config.get<int>("finetune.k", 2);
  fin.seed = g_config.get<std::uint64_t>("finetune.seed", root_seed);
  auto* cfin = app.add_subcommand("finetune", "supervised fine-tuning");
  cfin->add_option("--train", fin.train, "training corpus jsonl")->required();
  cfin->add_option("--val", fin.val, "validation corpus jsonl")->required();
  cfin->add_option("--vocab", fin.vocab, "vocab file")->required();
  cfin->add_option("--out", fin.out, "output checkpoint")->required();
  cfin->add_option("--init", fin.init, "start from this checkpoint");
  cfin->add_option("--log", fin.log, "epoch log jsonl");
  add_arch_flags(cfin, fin.arch);
  cfin->add_option("--k", fin.k, "context radius (0 or 2)");
  cfin->add_option("--epochs", fin.epochs, "max epochs");
  cfin->add_option("--patience", fin.patience, "early-stopping patience");
  cfin->add_option("--batch", fin.batch, "batch size");
  cfin->add_option("--lr", fin.lr, "learning rate");
  cfin->add_option("--pos-weight", fin.pos_weight, "positive-class weight");
  cfin->add_option("--grad-clip", fin.grad_clip,
                   "global-norm gradient clip (0 = off)");
  cfin->add_option("--weight-decay", fin.weight_decay, "decoupled decay");
  cfin->add_option("--seed", fin.seed, "rng seed");

  std::string tt_model, tt_vocab, tt_val, tt_out;
  int tt_k = g_config.get<int>("finetune.k", 2);
  auto* ctt = app.add_subcommand("tune-thresholds",
                                 "maximize validation F1 per label");
  ctt->add_option("--model", tt_model, "checkpoint")->required();
  ctt->add_option("--vocab", tt_vocab, "vocab file")->required();
  ctt->add_option("--val", tt_val, "validation corpus jsonl")->required();
  ctt->add_option("--k", tt_k, "context radius");
  ctt->add_option("--out", tt_out, "thresholds json")->required();

  std::string ev_model, ev_vocab, ev_in, ev_th, ev_out;
  int ev_k = g_config.get<int>("finetune.k", 2);
  bool ev_table = false;
  auto* cev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  cev->add_option("--model", ev_model, "checkpoint")->required();
  cev->add_option("--vocab", ev_vocab, "vocab file")->required();
  cev->add_option("--in", ev_in, "corpus jsonl")->required();
  cev->add_option("--thresholds", ev_th, "thresholds json")->required();
  cev->add_option("--k", ev_k, "context radius");
  cev->add_option("--out", ev_out, "metrics report json");
  cev->add_flag("--table", ev_table, "print the metrics table");

  std::string ex_model, ex_vocab, ex_in, ex_doc, ex_th, ex_out;
  int ex_k = g_config.get<int>("finetune.k", 2);
  bool ex_text = false;
  auto* cex = app.add_subcommand("extract",
                                 "extract action items from one document");
  cex->add_option("--model", ex_model, "checkpoint")->required();
  cex->add_option("--vocab", ex_vocab, "vocab file")->required();
  cex->add_option("--in", ex_in, "corpus jsonl")->required();
  cex->add_option("--doc-id", ex_doc, "document id")->required();
  cex->add_option("--thresholds", ex_th, "thresholds json")->required();
  cex->add_option("--k", ex_k, "context radius");
  cex->add_option("--out", ex_out, "extraction report json");
  cex->add_flag("--text", ex_text, "print the text rendering");

  std::string st_in, st_vocab, st_out;
  auto* cst = app.add_subcommand("stats", "corpus statistics report");
  cst->add_option("--in", st_in, "corpus jsonl")->required();
  cst->add_option("--vocab", st_vocab,
                  "vocab file (adds the average OOV count)");
  cst->add_option("--out", st_out, "stats json (stdout when omitted)");

  int gc_samples = 200;
  std::uint64_t gc_seed = g_config.get<std::uint64_t>("gradcheck.seed",
                                                      root_seed);
  auto* cgc = app.add_subcommand(
      "gradcheck", "finite-difference check of every analytic gradient");
  cgc->add_option("--samples", gc_samples, "sampled parameters per check");
  cgc->add_option("--seed", gc_seed, "rng seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cgen->parsed()) return run_gen(gen);
    if (csplit->parsed()) {
      return run_split(split_in, split_ratios, split_seed, split_prefix);
    }
    if (cvocab->parsed()) return run_vocab(vocab_in, vocab_size, vocab_out);
    if (cttp->parsed()) return run_ttp_select(ttp_args);
    if (cpre->parsed()) return run_pretrain(pre);
    if (cfin->parsed()) return run_finetune(fin);
    if (ctt->parsed()) {
      return run_tune_thresholds(tt_model, tt_vocab, tt_val, tt_k, tt_out);
    }
    if (cev->parsed()) {
      return run_eval(ev_model, ev_vocab, ev_in, ev_th, ev_k, ev_out,
                      ev_table);
    }
    if (cex->parsed()) {
      return run_extract(ex_model, ex_vocab, ex_in, ex_doc, ex_th, ex_k,
                         ex_out, ex_text);
    }
    if (cst->parsed()) return run_stats(st_in, st_vocab, st_out);
    if (cgc->parsed()) return run_gradcheck(gc_samples, gc_seed);
  } catch (const Error& e) {
    ordered_json j;
    j["code"] = static_cast<int>(e.code());
    j["error"] = e.what();
    std::cerr << j.dump() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    ordered_json j;
    j["code"] = 1;
    j["error"] = e.what();
    std::cerr << j.dump() << "\n";
    return 1;
  }
  return 0;
}
