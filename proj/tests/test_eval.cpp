#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "followup/metrics.hpp"
#include "followup/rng.hpp"

using namespace followup;
using namespace followup::eval;

namespace {

Eigen::MatrixXd random_scores(Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd s(n, kNumLabels);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int l = 0; l < kNumLabels; ++l) s(i, l) = rng.uniform01();
  }
  return s;
}

Eigen::MatrixXi random_labels(Eigen::Index n, double p, Rng& rng) {
  Eigen::MatrixXi y(n, kNumLabels);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int l = 0; l < kNumLabels; ++l) y(i, l) = rng.bernoulli(p) ? 1 : 0;
  }
  return y;
}

// Brute-force reference: explicit enumeration of every (sentence, label)
// decision.
struct BruteCounts {
  long long tp = 0, fp = 0, fn = 0;
};

double brute_micro_f1(const Eigen::MatrixXd& s, const Eigen::MatrixXi& y,
                      double t) {
  BruteCounts c;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (int l = 0; l < kNumLabels; ++l) {
      bool pred = s(i, l) >= t;
      bool gold = y(i, l) != 0;
      if (pred && gold) ++c.tp;
      if (pred && !gold) ++c.fp;
      if (!pred && gold) ++c.fn;
    }
  }
  double den = static_cast<double>(2 * c.tp + c.fp + c.fn);
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / den;
}

double brute_label_f1(const Eigen::MatrixXd& s, const Eigen::MatrixXi& y,
                      int l, double t) {
  BruteCounts c;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    bool pred = s(i, l) >= t;
    bool gold = y(i, l) != 0;
    if (pred && gold) ++c.tp;
    if (pred && !gold) ++c.fp;
    if (!pred && gold) ++c.fn;
  }
  double den = static_cast<double>(2 * c.tp + c.fp + c.fn);
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / den;
}

// O(n^2) pairwise AUROC oracle.
double brute_auroc(const Eigen::VectorXd& s, const Eigen::VectorXi& y) {
  double wins = 0, ties = 0;
  long long pos = 0, neg = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (y(i) == 0) continue;
    ++pos;
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      if (y(j) != 0) continue;
      if (s(i) > s(j)) wins += 1;
      if (s(i) == s(j)) ties += 1;
    }
  }
  for (Eigen::Index j = 0; j < s.size(); ++j) neg += y(j) == 0 ? 1 : 0;
  return (wins + 0.5 * ties) /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace

TEST_CASE("f1: analytic cases") {
  CHECK(f1(10, 0, 0) == 1.0);
  CHECK(f1(0, 5, 3) == 0.0);
  CHECK(f1(0, 0, 0) == 0.0);
  CHECK(f1(3, 1, 2) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("micro/macro: perfect scores give 1.0 everywhere") {
  Rng rng(1);
  Eigen::MatrixXi y = random_labels(60, 0.3, rng);
  Eigen::MatrixXd s(60, kNumLabels);
  for (Eigen::Index i = 0; i < 60; ++i) {
    for (int l = 0; l < kNumLabels; ++l) s(i, l) = y(i, l) ? 1.0 : 0.0;
  }
  // Make sure every label has a positive so per-label F1 is defined.
  for (int l = 0; l < kNumLabels; ++l) {
    y(l, l) = 1;
    s(l, l) = 1.0;
  }
  Thresholds t;  // all 0.5
  auto mm = micro_macro(s, y, t);
  CHECK(mm.micro == 1.0);
  CHECK(mm.macro == 1.0);
  for (double v : mm.per_label) CHECK(v == 1.0);
}

TEST_CASE("micro/macro: equals the enumeration oracle exactly") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Index n = 50 + static_cast<Eigen::Index>(rng.uniform_u64(150));
    auto s = random_scores(n, rng);
    auto y = random_labels(n, 0.2, rng);
    Thresholds t;
    t.micro = rng.uniform01();
    for (auto& v : t.per_label) v = rng.uniform01();
    auto mm = micro_macro(s, y, t);
    CHECK(mm.micro == brute_micro_f1(s, y, t.micro));
    double macro = 0;
    for (int l = 0; l < kNumLabels; ++l) {
      double ref =
          brute_label_f1(s, y, l, t.per_label[static_cast<std::size_t>(l)]);
      CHECK(mm.per_label[static_cast<std::size_t>(l)] == ref);
      macro += ref;
    }
    CHECK(mm.macro == doctest::Approx(macro / kNumLabels).epsilon(1e-15));
    // Internal consistency: micro F1 equals f1 over pooled counts.
    long long tp = 0, fp = 0, fn = 0;
    Thresholds pool;
    pool.micro = t.micro;
    for (auto& v : pool.per_label) v = t.micro;
    auto mm2 = micro_macro(s, y, pool);
    for (const auto& c : mm2.counts) {
      tp += c.tp;
      fp += c.fp;
      fn += c.fn;
    }
    CHECK(mm.micro == f1(tp, fp, fn));
  }
}

TEST_CASE("micro: all-negative predictions on a set with positives is 0") {
  Rng rng(3);
  auto y = random_labels(40, 0.3, rng);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(40, kNumLabels);
  Thresholds t;
  t.micro = 0.9;
  auto mm = micro_macro(s, y, t);
  CHECK(mm.micro == 0.0);
}

TEST_CASE("auroc: separable, all-ties, degenerate") {
  Eigen::VectorXd s(6);
  Eigen::VectorXi y(6);
  s << 0.9, 0.8, 0.7, 0.3, 0.2, 0.1;
  y << 1, 1, 1, 0, 0, 0;
  CHECK(auroc(s, y).value() == 1.0);

  Eigen::VectorXd ties = Eigen::VectorXd::Constant(6, 0.4);
  CHECK(auroc(ties, y).value() == 0.5);

  Eigen::VectorXi ones = Eigen::VectorXi::Constant(6, 1);
  CHECK(!auroc(s, ones).has_value());
  Eigen::VectorXi zeros = Eigen::VectorXi::Zero(6);
  CHECK(!auroc(s, zeros).has_value());
}

TEST_CASE("auroc: matches the pairwise-count oracle exactly") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Index n = 30;
    Eigen::VectorXd s(n);
    Eigen::VectorXi y(n);
    bool pos = false, neg = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      // Quantized scores force ties.
      s(i) = static_cast<double>(rng.uniform_int(0, 9)) / 10.0;
      y(i) = rng.bernoulli(0.4) ? 1 : 0;
      pos |= y(i) == 1;
      neg |= y(i) == 0;
    }
    if (!pos || !neg) continue;
    CHECK(auroc(s, y).value() == brute_auroc(s, y));
  }
}

TEST_CASE("auroc: invariant under strictly monotone transforms") {
  Rng rng(5);
  Eigen::VectorXd s(40);
  Eigen::VectorXi y(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    s(i) = rng.uniform01();
    y(i) = rng.bernoulli(0.5) ? 1 : 0;
  }
  y(0) = 1;
  y(1) = 0;
  Eigen::VectorXd expanded = (3.0 * s.array() + 1.0).exp();
  CHECK(auroc(s, y).value() == doctest::Approx(auroc(expanded, y).value())
                                   .epsilon(1e-15));
}

TEST_CASE("tune: separable scores reach F1 1.0 inside the gap") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(10, kNumLabels);
  Eigen::MatrixXi y = Eigen::MatrixXi::Zero(10, kNumLabels);
  for (int i = 0; i < 10; ++i) {
    for (int l = 0; l < kNumLabels; ++l) {
      bool gold = (i + l) % 3 == 0;
      y(i, l) = gold ? 1 : 0;
      s(i, l) = gold ? 0.75 + 0.02 * i : 0.65 - 0.02 * i;
    }
  }
  Thresholds t = tune_thresholds(s, y);
  auto mm = micro_macro(s, y, t);
  CHECK(mm.micro == 1.0);
  for (int l = 0; l < kNumLabels; ++l) {
    CHECK(mm.per_label[static_cast<std::size_t>(l)] == 1.0);
    // Above every negative, at or below that label's smallest positive.
    double min_pos = 2.0;
    for (int i = 0; i < 10; ++i) {
      if (y(i, l)) min_pos = std::min(min_pos, s(i, l));
    }
    CHECK(t.per_label[static_cast<std::size_t>(l)] > 0.65);
    CHECK(t.per_label[static_cast<std::size_t>(l)] <= min_pos);
  }
}

TEST_CASE("tune: exhaustive grid check on random matrices") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Index n = 20 + static_cast<Eigen::Index>(rng.uniform_u64(60));
    Eigen::MatrixXd s(n, kNumLabels);
    Eigen::MatrixXi y(n, kNumLabels);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int l = 0; l < kNumLabels; ++l) {
        s(i, l) = static_cast<double>(rng.uniform_int(0, 20)) / 20.0;
        y(i, l) = rng.bernoulli(0.25) ? 1 : 0;
      }
    }
    Thresholds t = tune_thresholds(s, y);

    for (int l = 0; l < kNumLabels; ++l) {
      double best = brute_label_f1(s, y, l,
                                   t.per_label[static_cast<std::size_t>(l)]);
      // Grid: every observed score and a dense sweep.
      for (Eigen::Index i = 0; i < n; ++i) {
        CHECK(best >= brute_label_f1(s, y, l, s(i, l)));
      }
      for (int g = 0; g <= 40; ++g) {
        CHECK(best >= brute_label_f1(s, y, l, g / 40.0));
      }
      // Never below the default 0.5 threshold.
      CHECK(best >= brute_label_f1(s, y, l, 0.5));
    }
    double best_micro = brute_micro_f1(s, y, t.micro);
    for (int g = 0; g <= 40; ++g) {
      CHECK(best_micro >= brute_micro_f1(s, y, g / 40.0));
    }
  }
}

TEST_CASE("tune: identical scores tie-break toward the highest candidate") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(8, kNumLabels, 0.3);
  Eigen::MatrixXi y = Eigen::MatrixXi::Zero(8, kNumLabels);
  for (int l = 0; l < kNumLabels; ++l) y(0, l) = 1;
  Thresholds t = tune_thresholds(s, y);
  // Candidates are {0.3, 0.5}; both give the same F1 per label (predict-none
  // vs predict-all depends; with >= semantics 0.3 predicts all). The rule
  // keeps the highest threshold among ties.
  for (int l = 0; l < kNumLabels; ++l) {
    double f_at_low = brute_label_f1(s, y, l, 0.3);
    double f_at_high = brute_label_f1(s, y, l, 0.5);
    double kept = t.per_label[static_cast<std::size_t>(l)];
    if (f_at_low == f_at_high) {
      CHECK(kept == 0.5);
    } else {
      CHECK(kept == (f_at_low > f_at_high ? 0.3 : 0.5));
    }
  }
}

TEST_CASE("tune: label without validation positives defaults to 0.5") {
  Rng rng(7);
  auto s = random_scores(30, rng);
  Eigen::MatrixXi y = Eigen::MatrixXi::Zero(30, kNumLabels);
  y.col(0).setConstant(1);
  Thresholds t = tune_thresholds(s, y);
  CHECK(!t.defaulted[0]);
  for (int l = 1; l < kNumLabels; ++l) {
    CHECK(t.defaulted[static_cast<std::size_t>(l)]);
    CHECK(t.per_label[static_cast<std::size_t>(l)] == 0.5);
  }
}

TEST_CASE("binary reduction: OR semantics and type-ignoring TP") {
  // Gold {medication, lab} -> binary 1.
  Eigen::MatrixXi gold(1, kNumLabels);
  gold << 0, 0, 1, 1, 0, 0, 0;
  CHECK(binary_reduce(gold)(0) == 1);

  // Prediction {appointment} vs gold {lab}: binary true positive.
  Eigen::MatrixXd pred = Eigen::MatrixXd::Zero(1, kNumLabels);
  pred(0, 1) = 0.9;
  Eigen::MatrixXi gold2 = Eigen::MatrixXi::Zero(1, kNumLabels);
  gold2(0, 3) = 1;
  Thresholds t;
  CHECK(binary_f1(binary_reduce(pred, t), binary_reduce(gold2)) == 1.0);
}

TEST_CASE("binary reduction: matches the OR-then-F1 oracle exactly") {
  Rng rng(8);
  auto s = random_scores(100, rng);
  auto y = random_labels(100, 0.2, rng);
  Thresholds t;
  for (auto& v : t.per_label) v = rng.uniform01();

  Eigen::VectorXi pred_ref(100), gold_ref(100);
  for (int i = 0; i < 100; ++i) {
    bool p = false, g = false;
    for (int l = 0; l < kNumLabels; ++l) {
      p |= s(i, l) >= t.per_label[static_cast<std::size_t>(l)];
      g |= y(i, l) != 0;
    }
    pred_ref(i) = p ? 1 : 0;
    gold_ref(i) = g ? 1 : 0;
  }
  CHECK(binary_f1(binary_reduce(s, t), binary_reduce(y)) ==
        binary_f1(pred_ref, gold_ref));
}

TEST_CASE("binary F1 equals micro F1 on single-label-only corpora") {
  // Only label 0 ever fires: the reductions coincide when the micro and
  // per-label thresholds agree.
  Rng rng(9);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(80, kNumLabels);
  Eigen::MatrixXi y = Eigen::MatrixXi::Zero(80, kNumLabels);
  for (int i = 0; i < 80; ++i) {
    y(i, 0) = rng.bernoulli(0.3) ? 1 : 0;
    s(i, 0) = rng.uniform01();
  }
  Thresholds t;
  t.micro = 0.5;
  auto mm = micro_macro(s, y, t);
  CHECK(binary_f1(binary_reduce(s, t), binary_reduce(y)) ==
        doctest::Approx(mm.micro));
}

TEST_CASE("kappa: identical, independent, and hand-built 2x2") {
  Eigen::VectorXi a(6), b(6);
  a << 1, 0, 1, 1, 0, 0;
  CHECK(cohen_kappa(a, a) == 1.0);

  Rng rng(10);
  const int n = 100000;
  Eigen::VectorXi x(n), z(n);
  for (int i = 0; i < n; ++i) {
    x(i) = rng.bernoulli(0.5) ? 1 : 0;
    z(i) = rng.bernoulli(0.5) ? 1 : 0;
  }
  CHECK(std::abs(cohen_kappa(x, z)) < 0.02);

  // a=40 both-yes, b=10 yes/no, c=10 no/yes, d=40 both-no -> kappa 0.6.
  Eigen::VectorXi pa(100), pb(100);
  int idx = 0;
  for (int i = 0; i < 40; ++i, ++idx) {
    pa(idx) = 1;
    pb(idx) = 1;
  }
  for (int i = 0; i < 10; ++i, ++idx) {
    pa(idx) = 1;
    pb(idx) = 0;
  }
  for (int i = 0; i < 10; ++i, ++idx) {
    pa(idx) = 0;
    pb(idx) = 1;
  }
  for (int i = 0; i < 40; ++i, ++idx) {
    pa(idx) = 0;
    pb(idx) = 0;
  }
  CHECK(cohen_kappa(pa, pb) == doctest::Approx(0.6));
}

TEST_CASE("kappa: constant equal columns are flagged") {
  Eigen::VectorXi ones = Eigen::VectorXi::Constant(5, 1);
  bool flagged = false;
  CHECK(cohen_kappa(ones, ones, &flagged) == 1.0);
  CHECK(flagged);

  Eigen::VectorXi zeros = Eigen::VectorXi::Zero(5);
  Eigen::VectorXi mixed(5);
  mixed << 1, 1, 1, 1, 0;
  // pe < 1 here, so the regular formula applies.
  flagged = false;
  cohen_kappa(zeros, mixed, &flagged);
  CHECK(!flagged);
}

TEST_CASE("report: json round trip is byte identical") {
  Rng rng(11);
  auto s = random_scores(50, rng);
  auto y = random_labels(50, 0.25, rng);
  Thresholds t = tune_thresholds(s, y);
  MetricsReport r = evaluate(s, y, t);
  std::string j1 = report_to_json(r);
  MetricsReport r2 = report_from_json(j1);
  std::string j2 = report_to_json(r2);
  CHECK(j1 == j2);

  std::string table = report_to_table(r);
  CHECK(table.find("Micro F1") != std::string::npos);
  CHECK(table.find("Binary F1") != std::string::npos);
}
