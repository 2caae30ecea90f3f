#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "followup/document.hpp"

namespace followup::eval {

// Score and label matrices are (n_sentences x kNumLabels), rows aligned.

double f1(long long tp, long long fp, long long fn);

struct Thresholds {
  std::array<double, kNumLabels> per_label{};
  double micro = 0.5;
  std::array<bool, kNumLabels> defaulted{};  // label had no positives in val

  Thresholds() {
    per_label.fill(0.5);
  }
};

struct LabelCounts {
  long long tp = 0, fp = 0, fn = 0;
};

struct MetricsReport {
  double micro_f1 = 0.0;
  double micro_auroc = 0.0;
  double macro_f1 = 0.0;
  double macro_auroc = 0.0;
  double binary_f1 = 0.0;
  std::array<double, kNumLabels> per_label_f1{};
  Thresholds thresholds;
  std::array<LabelCounts, kNumLabels> counts{};
  std::vector<int> degenerate_auroc_labels;  // skipped in the macro average
};

// Micro pools every (sentence, label) decision at the micro threshold; macro
// averages per-label F1, each label decided at its own threshold.
struct MicroMacroF1 {
  double micro = 0.0;
  double macro = 0.0;
  std::array<double, kNumLabels> per_label{};
  std::array<LabelCounts, kNumLabels> counts{};
};
MicroMacroF1 micro_macro(const Eigen::MatrixXd& scores,
                         const Eigen::MatrixXi& labels,
                         const Thresholds& thresholds);

// Mann-Whitney AUROC with ties counted 1/2. Degenerate columns (no positives
// or no negatives) are undefined -> nullopt.
std::optional<double> auroc(const Eigen::VectorXd& scores,
                            const Eigen::VectorXi& labels);

// Per-label thresholds maximize that label's validation F1; the micro
// threshold maximizes pooled micro F1. Candidates are the observed scores,
// midpoints between consecutive distinct scores, and 0.5. Ties break toward
// the higher threshold. Labels without validation positives get 0.5 and are
// flagged.
Thresholds tune_thresholds(const Eigen::MatrixXd& scores,
                           const Eigen::MatrixXi& labels);

// Binary reduction: a sentence is flagged when any label meets its per-label
// threshold (for gold labels: when any label is present).
Eigen::VectorXi binary_reduce(const Eigen::MatrixXd& scores,
                              const Thresholds& thresholds);
Eigen::VectorXi binary_reduce(const Eigen::MatrixXi& labels);
double binary_f1(const Eigen::VectorXi& pred, const Eigen::VectorXi& gold);

// Chance-corrected agreement on two binary columns. When both marginals are
// constant and equal (expected agreement 1) the statistic is defined as 1
// for identical columns and 0 otherwise, and *flagged is set.
double cohen_kappa(const Eigen::VectorXi& a, const Eigen::VectorXi& b,
                   bool* flagged = nullptr);

MetricsReport evaluate(const Eigen::MatrixXd& scores,
                       const Eigen::MatrixXi& labels,
                       const Thresholds& thresholds);

std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const std::string& text);
// Aligned table: Micro F1, Micro AUC, Macro F1, Macro AUC, Binary F1.
std::string report_to_table(const MetricsReport& r);

std::string thresholds_to_json(const Thresholds& t);
Thresholds thresholds_from_json(const std::string& text);

}  // namespace followup::eval
