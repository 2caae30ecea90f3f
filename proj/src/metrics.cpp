#include "followup/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include <json.hpp>

namespace followup::eval {

using ordered_json = nlohmann::ordered_json;

double f1(long long tp, long long fp, long long fn) {
  const long long denom = 2 * tp + fp + fn;
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

MicroMacroF1 micro_macro(const Eigen::MatrixXd& scores,
                         const Eigen::MatrixXi& labels,
                         const Thresholds& thresholds) {
  MicroMacroF1 out;
  long long mtp = 0, mfp = 0, mfn = 0;
  for (int l = 0; l < kNumLabels; ++l) {
    LabelCounts c;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      const bool pred_label =
          scores(i, l) >= thresholds.per_label[static_cast<std::size_t>(l)];
      const bool pred_micro = scores(i, l) >= thresholds.micro;
      const bool gold = labels(i, l) != 0;
      if (pred_label && gold) ++c.tp;
      if (pred_label && !gold) ++c.fp;
      if (!pred_label && gold) ++c.fn;
      if (pred_micro && gold) ++mtp;
      if (pred_micro && !gold) ++mfp;
      if (!pred_micro && gold) ++mfn;
    }
    out.counts[static_cast<std::size_t>(l)] = c;
    out.per_label[static_cast<std::size_t>(l)] = f1(c.tp, c.fp, c.fn);
  }
  out.micro = f1(mtp, mfp, mfn);
  out.macro = std::accumulate(out.per_label.begin(), out.per_label.end(), 0.0) /
              static_cast<double>(kNumLabels);
  return out;
}

std::optional<double> auroc(const Eigen::VectorXd& scores,
                            const Eigen::VectorXi& labels) {
  const Eigen::Index n = scores.size();
  long long pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) pos += labels(i) != 0 ? 1 : 0;
  const long long neg = static_cast<long long>(n) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return scores(a) < scores(b);
  });

  // Rank sum of positives with average ranks for ties.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores(order[j + 1]) == scores(order[i])) {
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) +
                             static_cast<double>(j + 1)) /
                            2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels(order[k]) != 0) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum - static_cast<double>(pos) *
                                  (static_cast<double>(pos) + 1.0) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

namespace {

// Candidate set: observed scores, midpoints of consecutive distinct scores,
// and 0.5.
std::vector<double> candidate_thresholds(std::vector<double> observed) {
  std::sort(observed.begin(), observed.end());
  observed.erase(std::unique(observed.begin(), observed.end()),
                 observed.end());
  std::vector<double> cands = observed;
  for (std::size_t i = 0; i + 1 < observed.size(); ++i) {
    cands.push_back(0.5 * (observed[i] + observed[i + 1]));
  }
  cands.push_back(0.5);
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  return cands;
}

double f1_at(const Eigen::MatrixXd& scores, const Eigen::MatrixXi& labels,
             int label, double threshold) {
  long long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const bool pred = scores(i, label) >= threshold;
    const bool gold = labels(i, label) != 0;
    if (pred && gold) ++tp;
    if (pred && !gold) ++fp;
    if (!pred && gold) ++fn;
  }
  return f1(tp, fp, fn);
}

double micro_f1_at(const Eigen::MatrixXd& scores, const Eigen::MatrixXi& labels,
                   double threshold) {
  long long tp = 0, fp = 0, fn = 0;
  for (int l = 0; l < kNumLabels; ++l) {
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      const bool pred = scores(i, l) >= threshold;
      const bool gold = labels(i, l) != 0;
      if (pred && gold) ++tp;
      if (pred && !gold) ++fp;
      if (!pred && gold) ++fn;
    }
  }
  return f1(tp, fp, fn);
}

}  // namespace

Thresholds tune_thresholds(const Eigen::MatrixXd& scores,
                           const Eigen::MatrixXi& labels) {
  if (scores.rows() == 0) {
    throw Error(ErrorCode::invalid_config,
                "cannot tune thresholds on an empty validation set");
  }
  Thresholds out;
  for (int l = 0; l < kNumLabels; ++l) {
    bool has_positive = false;
    for (Eigen::Index i = 0; i < labels.rows(); ++i) {
      has_positive |= labels(i, l) != 0;
    }
    if (!has_positive) {
      out.per_label[static_cast<std::size_t>(l)] = 0.5;
      out.defaulted[static_cast<std::size_t>(l)] = true;
      continue;
    }
    std::vector<double> observed;
    observed.reserve(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      observed.push_back(scores(i, l));
    }
    double best_f1 = -1.0, best_t = 0.5;
    for (double t : candidate_thresholds(std::move(observed))) {
      const double v = f1_at(scores, labels, l, t);
      if (v > best_f1 || (v == best_f1 && t > best_t)) {
        best_f1 = v;
        best_t = t;
      }
    }
    out.per_label[static_cast<std::size_t>(l)] = best_t;
  }

  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (int l = 0; l < kNumLabels; ++l) all.push_back(scores(i, l));
  }
  double best_f1 = -1.0, best_t = 0.5;
  for (double t : candidate_thresholds(std::move(all))) {
    const double v = micro_f1_at(scores, labels, t);
    if (v > best_f1 || (v == best_f1 && t > best_t)) {
      best_f1 = v;
      best_t = t;
    }
  }
  out.micro = best_t;
  return out;
}

Eigen::VectorXi binary_reduce(const Eigen::MatrixXd& scores,
                              const Thresholds& thresholds) {
  Eigen::VectorXi out = Eigen::VectorXi::Zero(scores.rows());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (int l = 0; l < kNumLabels; ++l) {
      if (scores(i, l) >= thresholds.per_label[static_cast<std::size_t>(l)]) {
        out(i) = 1;
        break;
      }
    }
  }
  return out;
}

Eigen::VectorXi binary_reduce(const Eigen::MatrixXi& labels) {
  Eigen::VectorXi out = Eigen::VectorXi::Zero(labels.rows());
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    out(i) = labels.row(i).any() ? 1 : 0;
  }
  return out;
}

double binary_f1(const Eigen::VectorXi& pred, const Eigen::VectorXi& gold) {
  long long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (pred(i) != 0 && gold(i) != 0) ++tp;
    if (pred(i) != 0 && gold(i) == 0) ++fp;
    if (pred(i) == 0 && gold(i) != 0) ++fn;
  }
  return f1(tp, fp, fn);
}

double cohen_kappa(const Eigen::VectorXi& a, const Eigen::VectorXi& b,
                   bool* flagged) {
  if (a.size() != b.size() || a.size() == 0) {
    throw Error(ErrorCode::invalid_config,
                "kappa needs two equal-length, non-empty columns");
  }
  if (flagged) *flagged = false;
  const double n = static_cast<double>(a.size());
  double agree = 0, a1 = 0, b1 = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    agree += (a(i) != 0) == (b(i) != 0) ? 1.0 : 0.0;
    a1 += a(i) != 0 ? 1.0 : 0.0;
    b1 += b(i) != 0 ? 1.0 : 0.0;
  }
  const double po = agree / n;
  const double pe =
      (a1 / n) * (b1 / n) + ((n - a1) / n) * ((n - b1) / n);
  if (pe >= 1.0) {
    if (flagged) *flagged = true;
    return po == 1.0 ? 1.0 : 0.0;
  }
  return (po - pe) / (1.0 - pe);
}

MetricsReport evaluate(const Eigen::MatrixXd& scores,
                       const Eigen::MatrixXi& labels,
                       const Thresholds& thresholds) {
  MetricsReport r;
  r.thresholds = thresholds;
  MicroMacroF1 mm = micro_macro(scores, labels, thresholds);
  r.micro_f1 = mm.micro;
  r.macro_f1 = mm.macro;
  r.per_label_f1 = mm.per_label;
  r.counts = mm.counts;

  // Micro AUROC: every (sentence, label) pair pooled into one column.
  {
    Eigen::VectorXd s(scores.size());
    Eigen::VectorXi y(labels.size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      for (int l = 0; l < kNumLabels; ++l, ++k) {
        s(k) = scores(i, l);
        y(k) = labels(i, l);
      }
    }
    r.micro_auroc = auroc(s, y).value_or(0.0);
  }

  // Macro AUROC: skip degenerate labels and record them.
  {
    double total = 0.0;
    int used = 0;
    for (int l = 0; l < kNumLabels; ++l) {
      auto v = auroc(scores.col(l), labels.col(l));
      if (v) {
        total += *v;
        ++used;
      } else {
        r.degenerate_auroc_labels.push_back(l);
      }
    }
    r.macro_auroc = used > 0 ? total / used : 0.0;
  }

  r.binary_f1 =
      binary_f1(binary_reduce(scores, thresholds), binary_reduce(labels));
  return r;
}

// --------------------------------------------------------------------- json

std::string thresholds_to_json(const Thresholds& t) {
  ordered_json j;
  ordered_json per = ordered_json::object();
  for (int l = 0; l < kNumLabels; ++l) {
    per[std::string(label_names()[l])] = t.per_label[static_cast<std::size_t>(l)];
  }
  j["per_label"] = std::move(per);
  j["micro"] = t.micro;
  ordered_json defaulted = ordered_json::array();
  for (int l = 0; l < kNumLabels; ++l) {
    if (t.defaulted[static_cast<std::size_t>(l)]) {
      defaulted.push_back(std::string(label_names()[l]));
    }
  }
  j["defaulted"] = std::move(defaulted);
  return j.dump(2);
}

Thresholds thresholds_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  Thresholds t;
  for (int l = 0; l < kNumLabels; ++l) {
    t.per_label[static_cast<std::size_t>(l)] =
        j.at("per_label").at(std::string(label_names()[l])).get<double>();
  }
  t.micro = j.at("micro").get<double>();
  if (j.contains("defaulted")) {
    for (const auto& name : j.at("defaulted")) {
      auto l = label_from_name(name.get<std::string>());
      if (l) t.defaulted[static_cast<std::size_t>(*l)] = true;
    }
  }
  return t;
}

std::string report_to_json(const MetricsReport& r) {
  ordered_json j;
  j["micro_f1"] = r.micro_f1;
  j["micro_auroc"] = r.micro_auroc;
  j["macro_f1"] = r.macro_f1;
  j["macro_auroc"] = r.macro_auroc;
  j["binary_f1"] = r.binary_f1;
  ordered_json per = ordered_json::object();
  for (int l = 0; l < kNumLabels; ++l) {
    per[std::string(label_names()[l])] =
        r.per_label_f1[static_cast<std::size_t>(l)];
  }
  j["per_label_f1"] = std::move(per);
  j["thresholds"] = ordered_json::parse(thresholds_to_json(r.thresholds));
  ordered_json counts = ordered_json::object();
  for (int l = 0; l < kNumLabels; ++l) {
    const auto& c = r.counts[static_cast<std::size_t>(l)];
    counts[std::string(label_names()[l])] = {{"tp", c.tp},
                                             {"fp", c.fp},
                                             {"fn", c.fn}};
  }
  j["counts"] = std::move(counts);
  ordered_json degen = ordered_json::array();
  for (int l : r.degenerate_auroc_labels) {
    degen.push_back(std::string(label_names()[l]));
  }
  j["degenerate_auroc_labels"] = std::move(degen);
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  MetricsReport r;
  r.micro_f1 = j.at("micro_f1").get<double>();
  r.micro_auroc = j.at("micro_auroc").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.macro_auroc = j.at("macro_auroc").get<double>();
  r.binary_f1 = j.at("binary_f1").get<double>();
  for (int l = 0; l < kNumLabels; ++l) {
    const auto name = std::string(label_names()[l]);
    r.per_label_f1[static_cast<std::size_t>(l)] =
        j.at("per_label_f1").at(name).get<double>();
    const auto& c = j.at("counts").at(name);
    r.counts[static_cast<std::size_t>(l)] = {c.at("tp").get<long long>(),
                                             c.at("fp").get<long long>(),
                                             c.at("fn").get<long long>()};
  }
  r.thresholds = thresholds_from_json(j.at("thresholds").dump());
  for (const auto& name : j.at("degenerate_auroc_labels")) {
    auto l = label_from_name(name.get<std::string>());
    if (l) r.degenerate_auroc_labels.push_back(static_cast<int>(*l));
  }
  return r;
}

std::string report_to_table(const MetricsReport& r) {
  char buf[256];
  std::string out;
  out += "Micro F1  Micro AUC  Macro F1  Macro AUC  Binary F1\n";
  std::snprintf(buf, sizeof(buf), "%8.3f  %9.3f  %8.3f  %9.3f  %9.3f\n",
                r.micro_f1, r.micro_auroc, r.macro_f1, r.macro_auroc,
                r.binary_f1);
  out += buf;
  out += "\nPer-label F1\n";
  for (int l = 0; l < kNumLabels; ++l) {
    std::snprintf(buf, sizeof(buf), "%-22s %6.3f\n",
                  std::string(label_names()[l]).c_str(),
                  r.per_label_f1[static_cast<std::size_t>(l)]);
    out += buf;
  }
  if (!r.degenerate_auroc_labels.empty()) {
    out += "\nmacro AUROC skipped degenerate labels:";
    for (int l : r.degenerate_auroc_labels) {
      out += " ";
      out += std::string(label_names()[l]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace followup::eval
