#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "followup/corpus.hpp"
#include "followup/ttp.hpp"

using namespace followup;
using namespace followup::ttp;

namespace {

ScoreMatrix matrix_from(const Eigen::MatrixXd& values) {
  ScoreMatrix m;
  m.values = values;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    m.rows.push_back({"doc-" + std::to_string(i / 10),
                      static_cast<int>(i % 10)});
  }
  return m;
}

std::set<std::pair<std::string, int>> as_set(
    const std::vector<pretrain::SentenceRef>& refs) {
  std::set<std::pair<std::string, int>> s;
  for (const auto& r : refs) s.insert({r.doc_id, r.sentence_index});
  return s;
}

}  // namespace

TEST_CASE("select: threshold extremes") {
  Rng rng(1);
  Eigen::MatrixXd v(20, kNumLabels);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i / kNumLabels, i % kNumLabels) = 0.95 * rng.uniform01();
  }
  ScoreMatrix m = matrix_from(v);
  CHECK(select_sentences(m, 1.0).selected.empty());
  CHECK(select_sentences(m, 0.0).selected.size() == 20);
}

TEST_CASE("select: hand-built 5x7 at threshold 0.6") {
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(5, kNumLabels, 0.1);
  v(1, 3) = 0.72;  // row 1 max 0.72
  v(3, 0) = 0.60;  // row 3 max exactly 0.60 (>= selects it)
  v(4, 6) = 0.59;  // row 4 just below
  ScoreMatrix m = matrix_from(v);
  auto sel = select_sentences(m, 0.6);
  REQUIRE(sel.selected.size() == 2);
  CHECK(sel.selected[0].doc_id == m.rows[1].doc_id);
  CHECK(sel.selected[0].sentence_index == m.rows[1].sentence_index);
  CHECK(sel.selected[1].doc_id == m.rows[3].doc_id);
}

TEST_CASE("select: monotone shrinkage over random matrices") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Index n = 10 + static_cast<Eigen::Index>(rng.uniform_u64(60));
    Eigen::MatrixXd v(n, kNumLabels);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int l = 0; l < kNumLabels; ++l) v(i, l) = rng.uniform01();
    }
    ScoreMatrix m = matrix_from(v);
    double t1 = rng.uniform01();
    double t2 = rng.uniform01();
    if (t1 > t2) std::swap(t1, t2);
    auto low = as_set(select_sentences(m, t1).selected);
    auto high = as_set(select_sentences(m, t2).selected);
    CHECK(high.size() <= low.size());
    for (const auto& r : high) CHECK(low.count(r) == 1);
  }
}

TEST_CASE("calibrate: target N selects all; distinct scores hit exactly") {
  Rng rng(3);
  const Eigen::Index n = 400;
  Eigen::MatrixXd v(n, kNumLabels);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int l = 0; l < kNumLabels; ++l) v(i, l) = rng.uniform01();
  }
  ScoreMatrix m = matrix_from(v);

  double tmin = calibrate_threshold(m, n);
  CHECK(select_sentences(m, tmin).selected.size() == n);

  // Brute-force oracle: sort the row maxima.
  std::vector<double> maxes;
  for (Eigen::Index i = 0; i < n; ++i) maxes.push_back(v.row(i).maxCoeff());
  std::sort(maxes.begin(), maxes.end(), std::greater<double>());
  for (std::size_t target : {100u, 1u, 37u, 399u}) {
    double t = calibrate_threshold(m, target);
    CHECK(t == maxes[target - 1]);
    CHECK(select_sentences(m, t).selected.size() == target);
  }

  CHECK_THROWS_AS(calibrate_threshold(m, 0), Error);
  CHECK_THROWS_AS(calibrate_threshold(m, n + 1), Error);
}

TEST_CASE("calibrate: proportional dataset sizes like the scaled paper grid") {
  Rng rng(4);
  const Eigen::Index n = 10000;
  Eigen::MatrixXd v(n, kNumLabels);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int l = 0; l < kNumLabels; ++l) v(i, l) = rng.uniform01();
  }
  ScoreMatrix m = matrix_from(v);
  for (double frac : {0.025, 0.05, 0.11, 0.22}) {
    auto target = static_cast<std::size_t>(frac * n);
    double t = calibrate_threshold(m, target);
    CHECK(select_sentences(m, t).selected.size() == target);
  }
}

TEST_CASE("calibrate: ties keep the size error within the tie count") {
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(30, kNumLabels, 0.2);
  for (Eigen::Index i = 0; i < 12; ++i) v(i, 0) = 0.8;  // 12-way tie
  ScoreMatrix m = matrix_from(v);
  double t = calibrate_threshold(m, 5);
  auto size = select_sentences(m, t).selected.size();
  CHECK(size >= 5);
  CHECK(size <= 12);  // off by at most the ties at the threshold
}

TEST_CASE("score_unlabeled: shapes, determinism, fingerprint guard") {
  corpus::GeneratorConfig gcfg;
  gcfg.n_documents = 6;
  gcfg.sentences_min = 8;
  gcfg.sentences_max = 12;
  gcfg.targets = corpus::default_targets();
  gcfg.seed = 5;
  auto docs = corpus::generate_corpus(gcfg);
  std::vector<std::string> lines;
  for (const auto& d : docs) {
    for (const auto& s : d.sentences) lines.push_back(s.text);
  }
  auto vocab = subword::train_vocab(lines, 600);

  model::EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.vocab_size = vocab.size();
  cfg.dropout = 0.0;
  Rng rng(6);
  model::Checkpoint seed;
  seed.params = model::EncoderParams<float>::init(cfg, rng);
  for (Eigen::Index j = 0; j < seed.params.cls_w.cols(); ++j) {
    for (Eigen::Index i = 0; i < seed.params.cls_w.rows(); ++i) {
      seed.params.cls_w(i, j) = 0.05f * static_cast<float>(rng.normal());
    }
  }
  seed.vocab_fingerprint = vocab.fingerprint;

  long long n = 0;
  for (const auto& d : docs) n += static_cast<long long>(d.sentences.size());
  ScoreMatrix scores = score_unlabeled(seed, docs, vocab, 0);
  CHECK(scores.values.rows() == n);
  CHECK(static_cast<long long>(scores.rows.size()) == n);

  // Identical rows for identical sentences (duplicate a document).
  auto docs2 = docs;
  docs2.push_back(docs[0]);
  docs2.back().doc_id = "copy";
  ScoreMatrix twice = score_unlabeled(seed, docs2, vocab, 0);
  const Eigen::Index first_len =
      static_cast<Eigen::Index>(docs[0].sentences.size());
  for (Eigen::Index i = 0; i < first_len; ++i) {
    CHECK((twice.values.row(i) - twice.values.row(n + i)).cwiseAbs()
              .maxCoeff() == 0.0);
  }

  // Unbatched oracle.
  ScoreMatrix one_at_a_time = score_unlabeled(seed, docs, vocab, 0, 1);
  CHECK((one_at_a_time.values - scores.values).cwiseAbs().maxCoeff() < 1e-8);

  model::Checkpoint wrong = seed;
  wrong.vocab_fingerprint = "ffffffffffffffff";
  CHECK_THROWS_AS(score_unlabeled(wrong, docs, vocab, 0), Error);
}

TEST_CASE("manifest: file round trip is byte identical") {
  SelectionManifest m;
  m.threshold = 0.625;
  m.seed_checkpoint_fingerprint = "00ff00ff00ff00ff";
  m.target_size = 123;
  m.selected = {{"note-000001", 4}, {"note-000002", 0}, {"note-000002", 9}};
  auto path = std::filesystem::temp_directory_path() / "followup_manifest.json";
  save_manifest(path.string(), m);
  SelectionManifest back = load_manifest(path.string());
  save_manifest(path.string(), back);
  SelectionManifest again = load_manifest(path.string());
  CHECK(back.threshold == m.threshold);
  CHECK(back.target_size == m.target_size);
  CHECK(as_set(back.selected) == as_set(m.selected));
  CHECK(again.threshold == back.threshold);

  std::ifstream is(path);
  std::string contents((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
  CHECK(contents.find("\"selected\"") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("build_pretrain_dataset: resolves and reports dangling refs") {
  corpus::GeneratorConfig gcfg;
  gcfg.n_documents = 3;
  gcfg.sentences_min = 5;
  gcfg.sentences_max = 7;
  gcfg.targets = CorpusStats{};
  gcfg.seed = 7;
  auto docs = corpus::generate_corpus(gcfg);

  SelectionManifest empty;
  CHECK(build_pretrain_dataset(empty, docs).empty());

  SelectionManifest good;
  good.selected = {{docs[0].doc_id, 0},
                   {docs[1].doc_id,
                    static_cast<int>(docs[1].sentences.size()) - 1}};
  auto refs = build_pretrain_dataset(good, docs);
  CHECK(refs.size() == good.selected.size());

  SelectionManifest bad = good;
  bad.selected.push_back({"nonexistent", 2});
  bad.selected.push_back({docs[0].doc_id, 9999});
  try {
    build_pretrain_dataset(bad, docs);
    FAIL("expected error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("nonexistent:2") != std::string::npos);
    CHECK(msg.find(":9999") != std::string::npos);
  }
}
