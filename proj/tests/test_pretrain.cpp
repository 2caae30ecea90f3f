#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "followup/corpus.hpp"
#include "followup/gradcheck.hpp"
#include "followup/pretrain.hpp"

using namespace followup;
using namespace followup::pretrain;
using subword::SubwordVocab;

namespace {

struct Fixture {
  std::vector<Document> docs;
  SubwordVocab vocab;
};

Fixture make_fixture(int n_docs, int smin, int smax, std::uint64_t seed,
                     int vocab_size = 1200) {
  corpus::GeneratorConfig cfg;
  cfg.n_documents = n_docs;
  cfg.sentences_min = smin;
  cfg.sentences_max = smax;
  cfg.targets = corpus::default_targets();
  cfg.seed = seed;
  Fixture f;
  f.docs = corpus::generate_corpus(cfg);
  std::vector<std::string> lines;
  for (const auto& d : f.docs) {
    for (const auto& s : d.sentences) lines.push_back(s.text);
  }
  f.vocab = subword::train_vocab(lines, vocab_size);
  return f;
}

}  // namespace

TEST_CASE("mask_context: p=0 and p=1 extremes") {
  Fixture f = make_fixture(3, 8, 12, 1);
  Rng rng(2);
  auto w = window::build_window(f.docs[0], 2, f.vocab, 2);

  auto none = mask_context(w, 0.0, rng);
  CHECK(none.mlm_targets.empty());
  CHECK(none.window.token_ids == w.token_ids);

  auto all = mask_context(w, 1.0, rng);
  int eligible = 0;
  for (std::size_t t = 0; t < w.token_ids.size(); ++t) {
    bool context = w.segment_ids[t] == window::kSegmentContext;
    bool special = w.token_ids[t] == SubwordVocab::kSep ||
                   w.token_ids[t] == SubwordVocab::kDocStart ||
                   w.token_ids[t] == SubwordVocab::kDocEnd;
    if (context && !special) {
      ++eligible;
      CHECK(all.window.token_ids[t] == SubwordVocab::kMask);
    } else {
      CHECK(all.window.token_ids[t] == w.token_ids[t]);
    }
  }
  CHECK(static_cast<int>(all.mlm_targets.size()) == eligible);
  // Targets remember the original ids.
  for (const auto& [pos, tok] : all.mlm_targets) {
    CHECK(w.token_ids[static_cast<std::size_t>(pos)] == tok);
  }
}

TEST_CASE("mask_context: empirical rate 0.15 and zero focus masks") {
  Fixture f = make_fixture(20, 10, 16, 3);
  Rng rng(4);
  long long eligible = 0, masked = 0, focus_masked = 0;
  int made = 0;
  for (int rep = 0; made < 10000; ++rep) {
    for (const auto& d : f.docs) {
      for (int i = 0; i < static_cast<int>(d.sentences.size()) && made < 10000;
           ++i, ++made) {
        auto w = window::build_window(d, i, f.vocab, 2);
        auto ex = mask_context(w, 0.15, rng);
        for (std::size_t t = 0; t < w.token_ids.size(); ++t) {
          bool context = w.segment_ids[t] == window::kSegmentContext;
          bool special = w.token_ids[t] == SubwordVocab::kSep ||
                         w.token_ids[t] == SubwordVocab::kDocStart ||
                         w.token_ids[t] == SubwordVocab::kDocEnd;
          if (context && !special) ++eligible;
          if (ex.window.token_ids[t] == SubwordVocab::kMask &&
              w.segment_ids[t] == window::kSegmentFocus) {
            ++focus_masked;
          }
        }
        masked += static_cast<long long>(ex.mlm_targets.size());
      }
    }
  }
  const double rate =
      static_cast<double>(masked) / static_cast<double>(eligible);
  CHECK(rate == doctest::Approx(0.15).epsilon(0.0667));  // 0.15 +- 0.01
  CHECK(focus_masked == 0);
}

TEST_CASE("switch_focus: extremes and context preservation") {
  Fixture f = make_fixture(2, 6, 8, 5);
  const Document& doc = f.docs[0];
  Rng rng(6);

  auto [w0, flag0] = switch_focus(doc, 1, 0.0, rng, f.vocab, 2);
  CHECK(!flag0);
  CHECK(w0.token_ids ==
        window::build_window(doc, 1, f.vocab, 2).token_ids);

  // Two-sentence document, p=1, i=0: the focus must become sentence 1.
  Document two = make_document("two", "alpha beta gamma.\ndelta epsilon.");
  REQUIRE(two.sentences.size() == 2);
  auto [w1, flag1] = switch_focus(two, 0, 1.0, rng, f.vocab, 2);
  CHECK(flag1);
  auto expect = subword::encode(two.sentences[1].text, f.vocab);
  std::vector<int> got(w1.token_ids.begin() + w1.focus_begin,
                       w1.token_ids.begin() + w1.focus_end);
  CHECK(got == expect);

  // Context tokens are identical to the unswitched window.
  auto plain = window::build_window(two, 0, f.vocab, 2);
  std::vector<int> ctx_plain, ctx_switched;
  for (std::size_t t = 0; t < plain.token_ids.size(); ++t) {
    if (plain.segment_ids[t] == window::kSegmentContext) {
      ctx_plain.push_back(plain.token_ids[t]);
    }
  }
  for (std::size_t t = 0; t < w1.token_ids.size(); ++t) {
    if (w1.segment_ids[t] == window::kSegmentContext) {
      ctx_switched.push_back(w1.token_ids[t]);
    }
  }
  CHECK(ctx_plain == ctx_switched);
}

TEST_CASE("switch_focus: single-sentence document never switches") {
  Fixture f = make_fixture(1, 3, 3, 7);
  Document one = make_document("one", "only sentence here.");
  Rng rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    auto [w, flag] = switch_focus(one, 0, 1.0, rng, f.vocab, 2);
    CHECK(!flag);
  }
}

TEST_CASE("switch_focus: empirical rate 0.25 +- 0.02") {
  Fixture f = make_fixture(4, 10, 12, 9);
  Rng rng(10);
  int switched = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    const Document& d = f.docs[static_cast<std::size_t>(rep) % f.docs.size()];
    auto [w, flag] =
        switch_focus(d, rep % static_cast<int>(d.sentences.size()), 0.25, rng,
                     f.vocab, 2);
    switched += flag ? 1 : 0;
  }
  CHECK(static_cast<double>(switched) / 10000.0 ==
        doctest::Approx(0.25).epsilon(0.08));  // 0.25 +- 0.02
}

TEST_CASE("pretrain losses: no masks -> total equals switch loss") {
  Fixture f = make_fixture(2, 6, 8, 11);
  Rng rng(12);
  model::EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = f.vocab.size();
  cfg.dropout = 0.0;
  auto params = model::EncoderParams<double>::init(cfg, rng);

  PretrainExample ex;
  ex.window = window::build_window(f.docs[0], 1, f.vocab, 2);
  ex.switched = true;
  auto parts = pretrain_losses(params, {ex});
  CHECK(parts.mlm == 0.0);
  CHECK(parts.total == parts.switching);
  CHECK(parts.switching == doctest::Approx(std::log(2.0)));  // zero head
}

TEST_CASE("pretrain losses: uniform mlm head gives ln(vocab)") {
  Fixture f = make_fixture(2, 6, 8, 13);
  Rng rng(14);
  model::EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = f.vocab.size();
  cfg.dropout = 0.0;
  auto params = model::EncoderParams<double>::init(cfg, rng);
  params.mlm_w.setZero();
  params.mlm_b.setZero();

  Rng mrng(15);
  auto w = window::build_window(f.docs[0], 2, f.vocab, 2);
  auto ex = mask_context(w, 0.5, mrng);
  REQUIRE(!ex.mlm_targets.empty());
  auto parts = pretrain_losses(params, {ex});
  CHECK(parts.mlm ==
        doctest::Approx(std::log(static_cast<double>(f.vocab.size())))
            .epsilon(1e-12));
}

TEST_CASE("pretrain gradients match finite differences") {
  Fixture f = make_fixture(2, 6, 8, 16, 400);
  Rng rng(17);
  model::EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = f.vocab.size();
  cfg.dropout = 0.0;
  auto params = model::EncoderParams<double>::init(cfg, rng);
  // Non-zero switch head so its path is exercised.
  for (Eigen::Index i = 0; i < params.switch_w.size(); ++i) {
    params.switch_w(i) = 0.05 * rng.normal();
  }

  Rng mrng(18);
  std::vector<PretrainExample> examples;
  for (int i = 0; i < 3; ++i) {
    auto [w, sw] =
        switch_focus(f.docs[0], i + 1, 0.5, mrng, f.vocab, 2);
    auto ex = mask_context(w, 0.3, mrng);
    ex.switched = sw;
    examples.push_back(std::move(ex));
  }

  // Build batch once; loss closure re-evaluates on the same inputs.
  std::vector<window::ContextWindow> ws;
  for (const auto& e : examples) ws.push_back(e.window);
  auto batch = window::window_batch(ws);
  std::vector<model::MlmTarget> mlm;
  for (std::size_t b = 0; b < examples.size(); ++b) {
    for (auto& [pos, tok] : examples[b].mlm_targets) {
      mlm.push_back({static_cast<int>(b) * batch.cols() + pos, tok});
    }
  }
  std::vector<char> switched;
  for (const auto& e : examples) switched.push_back(e.switched ? 1 : 0);
  REQUIRE(!mlm.empty());

  auto grads = model::EncoderParams<double>::zeros(cfg);
  model::pretrain_loss_and_grads<double>(params, batch, mlm, switched,
                                         model::Mode::eval, nullptr, &grads);
  Rng pick(19);
  auto result = model::grad_check(
      params.param_views(), grads.param_views(),
      [&] {
        return static_cast<double>(
            model::pretrain_loss_and_grads<double>(params, batch, mlm,
                                                   switched, model::Mode::eval,
                                                   nullptr, nullptr)
                .total);
      },
      1e-4, 250, &pick);
  CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("pretrain loop: stopping rule, determinism, and dataset files") {
  Fixture f = make_fixture(12, 10, 14, 20, 800);
  std::vector<SentenceRef> refs;
  for (const auto& d : f.docs) {
    for (int i = 0; i < static_cast<int>(d.sentences.size()); i += 3) {
      refs.push_back({d.doc_id, i});
    }
  }

  auto tmp = std::filesystem::temp_directory_path() / "followup_ptset.jsonl";
  write_dataset(tmp.string(), refs);
  auto refs2 = read_dataset(tmp.string());
  REQUIRE(refs2.size() == refs.size());
  CHECK(refs2[3].doc_id == refs[3].doc_id);
  std::filesystem::remove(tmp);

  PretrainConfig cfg;
  cfg.arch.n_layers = 1;
  cfg.arch.n_heads = 2;
  cfg.arch.d_model = 16;
  cfg.arch.d_ff = 32;
  cfg.arch.dropout = 0.1;
  cfg.max_epochs = 3;
  cfg.patience = 2;
  cfg.seed = 21;
  auto r1 = pretrain_loop(f.docs, refs, f.vocab, cfg);
  auto r2 = pretrain_loop(f.docs, refs, f.vocab, cfg);
  CHECK(r1.best_epoch == r2.best_epoch);
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].heldout_total == r2.history[i].heldout_total);
  }
  // The returned checkpoint carries the minimum recorded held-out loss.
  double min_total = r1.init_heldout_total;
  for (const auto& h : r1.history) min_total = std::min(min_total, h.heldout_total);
  CHECK(r1.best_heldout == min_total);

  CHECK_THROWS_AS(pretrain_loop(f.docs, {{"missing-doc", 0}}, f.vocab, cfg),
                  Error);
  PretrainConfig bad = cfg;
  bad.heldout_fraction = 1.5;
  CHECK_THROWS_AS(pretrain_loop(f.docs, refs, f.vocab, bad), Error);
}

TEST_CASE("pretrain loop: held-out MLM loss drops at least 30 percent") {
  // 600 docs x ~85 sentences ~= 50k-sentence corpus; a subsample of windows
  // is enough to learn the templated text at this scale.
  corpus::GeneratorConfig gcfg;
  gcfg.n_documents = 600;
  gcfg.sentences_min = 80;
  gcfg.sentences_max = 90;
  gcfg.targets = corpus::default_targets();
  gcfg.seed = 22;
  auto docs = corpus::generate_corpus(gcfg);
  long long total = 0;
  for (const auto& d : docs) total += static_cast<long long>(d.sentences.size());
  REQUIRE(total >= 48000);

  std::vector<std::string> lines;
  for (const auto& d : docs) {
    for (const auto& s : d.sentences) lines.push_back(s.text);
  }
  auto vocab = subword::train_vocab(lines, 1500);

  std::vector<SentenceRef> refs;
  Rng pick(23);
  for (const auto& d : docs) {
    // ~5 windows per document.
    for (int k = 0; k < 5; ++k) {
      refs.push_back(
          {d.doc_id,
           static_cast<int>(pick.uniform_u64(d.sentences.size()))});
    }
  }

  PretrainConfig cfg;
  cfg.arch.n_layers = 2;
  cfg.arch.n_heads = 2;
  cfg.arch.d_model = 32;
  cfg.arch.d_ff = 128;
  cfg.arch.dropout = 0.1;
  cfg.max_epochs = 3;
  cfg.patience = 3;
  cfg.lr = 1e-3;
  cfg.seed = 24;
  auto result = pretrain_loop(docs, refs, vocab, cfg);

  double best_mlm = result.init_heldout_mlm;
  for (const auto& h : result.history) {
    best_mlm = std::min(best_mlm, h.heldout_mlm);
  }
  CAPTURE(result.init_heldout_mlm);
  CAPTURE(best_mlm);
  CHECK(best_mlm < 0.7 * result.init_heldout_mlm);
}
