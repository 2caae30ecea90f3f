#include "followup/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "followup/adamw.hpp"
#include "followup/metrics.hpp"
#include "followup/rng.hpp"

namespace followup::baselines {

namespace {

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ws(text[i])) ++i;
    std::size_t b = i;
    while (i < text.size() && !is_ws(text[i])) ++i;
    if (i > b) fn(text.substr(b, i - b));
  }
}

}  // namespace

// --------------------------------------------------------------------- tfidf

TfidfVocab fit_tfidf(const std::vector<std::string>& train_sentences) {
  if (train_sentences.empty()) {
    throw Error(ErrorCode::invalid_config,
                "cannot fit tf-idf on an empty training set");
  }
  TfidfVocab vocab;
  std::vector<long long> df;
  std::unordered_map<std::string, bool> seen_in_doc;
  for (const std::string& s : train_sentences) {
    seen_in_doc.clear();
    for_each_word(s, [&](std::string_view w) {
      std::string key(w);
      if (seen_in_doc.emplace(key, true).second) {
        auto [it, fresh] = vocab.index.emplace(key, vocab.index.size());
        if (fresh) {
          df.push_back(1);
        } else {
          ++df[static_cast<std::size_t>(it->second)];
        }
      }
    });
  }
  const double n = static_cast<double>(train_sentences.size());
  vocab.idf.resize(df.size());
  for (std::size_t i = 0; i < df.size(); ++i) {
    vocab.idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) +
                   1.0;
  }
  return vocab;
}

SparseVec transform_tfidf(const TfidfVocab& vocab, const std::string& text) {
  std::unordered_map<int, double> counts;
  for_each_word(text, [&](std::string_view w) {
    auto it = vocab.index.find(std::string(w));
    if (it != vocab.index.end()) counts[it->second] += 1.0;
  });
  SparseVec out;
  out.entries.reserve(counts.size());
  double sq = 0.0;
  for (const auto& [id, tf] : counts) {
    const double v = tf * vocab.idf[static_cast<std::size_t>(id)];
    out.entries.push_back({id, v});
    sq += v * v;
  }
  if (sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& e : out.entries) e.second *= inv;
  }
  std::sort(out.entries.begin(), out.entries.end());
  return out;
}

// ------------------------------------------------------- logistic regression

namespace {

// Spectral norm estimate of the design matrix (with bias column) by power
// iteration; bounds the logistic-loss Lipschitz constant.
double spectral_norm_sq(const std::vector<SparseVec>& xs, int dim) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(dim).normalized();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
  for (int it = 0; it < 12; ++it) {
    u.setZero();
    // u = X^T (X v)
    for (const SparseVec& x : xs) {
      double dot = v(dim - 1);  // bias feature of 1.0
      for (const auto& [id, val] : x.entries) dot += val * v(id);
      for (const auto& [id, val] : x.entries) u(id) += val * dot;
      u(dim - 1) += dot;
    }
    const double norm = u.norm();
    if (norm == 0.0) return 1.0;
    v = u / norm;
  }
  // One more product gives the Rayleigh quotient.
  double lambda = 0.0;
  for (const SparseVec& x : xs) {
    double dot = v(dim - 1);
    for (const auto& [id, val] : x.entries) dot += val * v(id);
    lambda += dot * dot;
  }
  return lambda;
}

double logistic_objective(const std::vector<SparseVec>& xs,
                          const std::vector<double>& ysigned,
                          const Eigen::VectorXd& w, double l1) {
  const int dim = static_cast<int>(w.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double z = w(dim - 1);
    for (const auto& [id, val] : xs[i].entries) z += val * w(id);
    const double m = -ysigned[i] * z;
    // log(1 + exp(m)), stable
    loss += m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
  }
  loss /= static_cast<double>(xs.size());
  return loss + l1 * w.cwiseAbs().sum();
}

Eigen::VectorXd logistic_gradient(const std::vector<SparseVec>& xs,
                                  const std::vector<double>& ysigned,
                                  const Eigen::VectorXd& w) {
  const int dim = static_cast<int>(w.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double z = w(dim - 1);
    for (const auto& [id, val] : xs[i].entries) z += val * w(id);
    const double m = -ysigned[i] * z;
    const double sig = 1.0 / (1.0 + std::exp(-m));  // sigma(-y z)
    const double coeff = -ysigned[i] * sig;
    for (const auto& [id, val] : xs[i].entries) g(id) += coeff * val;
    g(dim - 1) += coeff;
  }
  return g / static_cast<double>(xs.size());
}

}  // namespace

BowModel bow_logreg_train(const std::vector<LabeledSentence>& train,
                          double l1_strength) {
  if (train.empty()) {
    throw Error(ErrorCode::invalid_config, "empty training set");
  }
  BowModel model;
  model.l1 = l1_strength;
  {
    std::vector<std::string> texts;
    texts.reserve(train.size());
    for (const auto& s : train) texts.push_back(s.text);
    model.vocab = fit_tfidf(texts);
  }
  const int dim = model.vocab.size() + 1;  // + bias feature
  std::vector<SparseVec> xs;
  xs.reserve(train.size());
  for (const auto& s : train) xs.push_back(transform_tfidf(model.vocab, s.text));

  model.weights = Eigen::MatrixXd::Zero(kNumLabels, dim);
  const double lip =
      std::max(spectral_norm_sq(xs, dim) / (4.0 * train.size()), 1e-12);
  const double step = 1.0 / lip;

  for (int l = 0; l < kNumLabels; ++l) {
    std::vector<double> ysigned(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      ysigned[i] = train[i].labels.bits[static_cast<std::size_t>(l)] ? 1.0
                                                                     : -1.0;
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd momentum = w;
    double t_acc = 1.0;
    double prev_obj = logistic_objective(xs, ysigned, w, l1_strength);
    for (int it = 0; it < 2000; ++it) {
      Eigen::VectorXd g = logistic_gradient(xs, ysigned, momentum);
      Eigen::VectorXd next = momentum - step * g;
      // Soft-threshold everything, bias included.
      const double thresh = l1_strength * step;
      for (int k = 0; k < dim; ++k) {
        const double v = next(k);
        next(k) = v > thresh ? v - thresh : (v < -thresh ? v + thresh : 0.0);
      }
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
      momentum = next + ((t_acc - 1.0) / t_next) * (next - w);
      w = next;
      t_acc = t_next;
      const double obj = logistic_objective(xs, ysigned, w, l1_strength);
      if (std::abs(prev_obj - obj) < 1e-6) break;
      prev_obj = obj;
    }
    model.weights.row(l) = w.transpose();
  }
  return model;
}

std::array<double, kNumLabels> bow_logreg_score(const BowModel& model,
                                                const std::string& text) {
  SparseVec x = transform_tfidf(model.vocab, text);
  const int dim = static_cast<int>(model.weights.cols());
  std::array<double, kNumLabels> out{};
  for (int l = 0; l < kNumLabels; ++l) {
    double z = model.weights(l, dim - 1);
    for (const auto& [id, val] : x.entries) z += val * model.weights(l, id);
    out[static_cast<std::size_t>(l)] = 1.0 / (1.0 + std::exp(-z));
  }
  return out;
}

// ----------------------------------------------------------------------- cnn

WordVocab fit_word_vocab(const std::vector<std::string>& sentences,
                         int max_size) {
  std::unordered_map<std::string, long long> counts;
  std::vector<std::string> order;
  for (const std::string& s : sentences) {
    for_each_word(s, [&](std::string_view w) {
      auto [it, fresh] = counts.emplace(std::string(w), 0);
      if (fresh) order.push_back(it->first);
      ++it->second;
    });
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) {
                     return counts[a] > counts[b];
                   });
  WordVocab vocab;
  for (const std::string& w : order) {
    if (vocab.size >= max_size) break;
    vocab.index.emplace(w, vocab.size++);
  }
  return vocab;
}

std::vector<int> word_ids(const WordVocab& vocab, const std::string& text) {
  std::vector<int> out;
  for_each_word(text, [&](std::string_view w) {
    auto it = vocab.index.find(std::string(w));
    out.push_back(it == vocab.index.end() ? WordVocab::kUnk : it->second);
  });
  return out;
}

namespace {

template <typename Scalar>
struct CnnForwardCache {
  std::vector<int> padded;
  math::Mat<Scalar> x;                        // (emb x len)
  std::vector<math::Mat<Scalar>> conv;        // raw conv outputs per width
  std::vector<std::vector<int>> argmax;       // per width, per filter
  math::Vec<Scalar> feat;                     // pooled features after relu
};

template <typename Scalar>
CnnForwardCache<Scalar> cnn_forward_one(const CnnParams<Scalar>& p,
                                        const std::vector<int>& ids) {
  CnnForwardCache<Scalar> c;
  c.padded = ids;
  while (static_cast<int>(c.padded.size()) < p.cfg.max_width()) {
    c.padded.push_back(WordVocab::kPad);
  }
  const int len = static_cast<int>(c.padded.size());
  c.x.resize(p.cfg.emb_dim, len);
  for (int t = 0; t < len; ++t) {
    c.x.col(t) = p.emb.col(c.padded[static_cast<std::size_t>(t)]);
  }
  c.feat.resize(p.cfg.feature_dim());
  for (std::size_t wi = 0; wi < p.cfg.widths.size(); ++wi) {
    const int w = p.cfg.widths[wi];
    const int positions = len - w + 1;
    math::Mat<Scalar> cols(p.cfg.emb_dim * w, positions);
    for (int t = 0; t < positions; ++t) {
      for (int k = 0; k < w; ++k) {
        cols.block(k * p.cfg.emb_dim, t, p.cfg.emb_dim, 1) = c.x.col(t + k);
      }
    }
    math::Mat<Scalar> raw;
    raw.noalias() = p.conv_w[wi] * cols;
    raw.colwise() += p.conv_b[wi];
    std::vector<int> arg(static_cast<std::size_t>(p.cfg.filters));
    for (int f = 0; f < p.cfg.filters; ++f) {
      int best = 0;
      for (int t = 1; t < positions; ++t) {
        if (raw(f, t) > raw(f, best)) best = t;
      }
      arg[static_cast<std::size_t>(f)] = best;
      const Scalar pooled = raw(f, best);
      c.feat(static_cast<Eigen::Index>(wi) * p.cfg.filters + f) =
          pooled > Scalar(0) ? pooled : Scalar(0);
    }
    c.conv.push_back(std::move(raw));
    c.argmax.push_back(std::move(arg));
  }
  return c;
}

}  // namespace

template <typename Scalar>
math::Mat<Scalar> cnn_scores(const CnnParams<Scalar>& p,
                             const std::vector<std::vector<int>>& batch) {
  math::Mat<Scalar> out(p.cfg.n_labels,
                        static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto cache = cnn_forward_one(p, batch[b]);
    math::Vec<Scalar> z = p.cls_w * cache.feat + p.cls_b;
    out.col(static_cast<Eigen::Index>(b)) =
        z.unaryExpr([](Scalar t) { return math::sigmoid(t); });
  }
  return out;
}

template <typename Scalar>
Scalar cnn_loss_and_grads(const CnnParams<Scalar>& p,
                          const std::vector<std::vector<int>>& batch,
                          const math::Mat<Scalar>& targets,
                          CnnParams<Scalar>* grads,
                          math::Mat<Scalar>* probs_out) {
  const Scalar eps = Scalar(model::kBceEps);
  Scalar loss = 0;
  const Eigen::Index denom =
      static_cast<Eigen::Index>(batch.size()) * p.cfg.n_labels;
  if (probs_out) probs_out->resize(p.cfg.n_labels, batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto cache = cnn_forward_one(p, batch[b]);
    math::Vec<Scalar> z = p.cls_w * cache.feat + p.cls_b;
    math::Vec<Scalar> probs =
        z.unaryExpr([](Scalar t) { return math::sigmoid(t); });
    if (probs_out) probs_out->col(static_cast<Eigen::Index>(b)) = probs;
    for (int l = 0; l < p.cfg.n_labels; ++l) {
      const Scalar pr =
          std::min(std::max(probs(l), eps), Scalar(1) - eps);
      const Scalar y = targets(l, static_cast<Eigen::Index>(b));
      loss += -(y * std::log(pr) + (Scalar(1) - y) * std::log(Scalar(1) - pr));
    }
    if (!grads) continue;

    math::Vec<Scalar> dz =
        (probs - targets.col(static_cast<Eigen::Index>(b))) /
        static_cast<Scalar>(denom);
    grads->cls_w.noalias() += dz * cache.feat.transpose();
    grads->cls_b += dz;
    math::Vec<Scalar> dfeat = p.cls_w.transpose() * dz;

    const int len = static_cast<int>(cache.padded.size());
    math::Mat<Scalar> dx = math::Mat<Scalar>::Zero(p.cfg.emb_dim, len);
    for (std::size_t wi = 0; wi < p.cfg.widths.size(); ++wi) {
      const int w = p.cfg.widths[wi];
      for (int f = 0; f < p.cfg.filters; ++f) {
        const Eigen::Index fi =
            static_cast<Eigen::Index>(wi) * p.cfg.filters + f;
        if (cache.feat(fi) <= Scalar(0)) continue;  // relu gate
        const int t = cache.argmax[wi][static_cast<std::size_t>(f)];
        const Scalar d = dfeat(fi);
        grads->conv_b[wi](f) += d;
        for (int k = 0; k < w; ++k) {
          grads->conv_w[wi]
              .block(f, k * p.cfg.emb_dim, 1, p.cfg.emb_dim)
              .noalias() += d * cache.x.col(t + k).transpose();
          dx.col(t + k).noalias() +=
              d *
              p.conv_w[wi]
                  .block(f, k * p.cfg.emb_dim, 1, p.cfg.emb_dim)
                  .transpose();
        }
      }
    }
    for (int t = 0; t < len; ++t) {
      grads->emb.col(cache.padded[static_cast<std::size_t>(t)]) += dx.col(t);
    }
  }
  return loss / static_cast<Scalar>(denom);
}

template math::Mat<float> cnn_scores<float>(
    const CnnParams<float>&, const std::vector<std::vector<int>>&);
template math::Mat<double> cnn_scores<double>(
    const CnnParams<double>&, const std::vector<std::vector<int>>&);
template float cnn_loss_and_grads<float>(const CnnParams<float>&,
                                         const std::vector<std::vector<int>>&,
                                         const math::Mat<float>&,
                                         CnnParams<float>*,
                                         math::Mat<float>*);
template double cnn_loss_and_grads<double>(
    const CnnParams<double>&, const std::vector<std::vector<int>>&,
    const math::Mat<double>&, CnnParams<double>*, math::Mat<double>*);

CnnModel cnn_train(const std::vector<LabeledSentence>& train,
                   const std::vector<LabeledSentence>& val,
                   const CnnTrainConfig& cfg) {
  if (train.empty() || val.empty()) {
    throw Error(ErrorCode::invalid_config, "empty split for cnn training");
  }
  CnnModel model;
  {
    std::vector<std::string> texts;
    for (const auto& s : train) texts.push_back(s.text);
    model.vocab = fit_word_vocab(texts);
  }
  CnnConfig arch = cfg.arch;
  arch.vocab_size = model.vocab.size;
  Rng init_rng = seed_stream(cfg.seed, "cnn-init");
  model.params = CnnParams<float>::init(arch, init_rng);

  std::vector<std::vector<int>> train_ids, val_ids;
  math::Mat<float> train_y(kNumLabels,
                           static_cast<Eigen::Index>(train.size()));
  Eigen::MatrixXi val_y(static_cast<Eigen::Index>(val.size()), kNumLabels);
  for (std::size_t i = 0; i < train.size(); ++i) {
    train_ids.push_back(word_ids(model.vocab, train[i].text));
    for (int l = 0; l < kNumLabels; ++l) {
      train_y(l, static_cast<Eigen::Index>(i)) =
          train[i].labels.bits[static_cast<std::size_t>(l)] ? 1.0f : 0.0f;
    }
  }
  for (std::size_t i = 0; i < val.size(); ++i) {
    val_ids.push_back(word_ids(model.vocab, val[i].text));
    for (int l = 0; l < kNumLabels; ++l) {
      val_y(static_cast<Eigen::Index>(i), l) =
          val[i].labels.bits[static_cast<std::size_t>(l)] ? 1 : 0;
    }
  }

  model::AdamW<float>::Options opt;
  opt.lr = cfg.lr;
  model::AdamW<float> adam(opt);
  Rng shuffle_rng = seed_stream(cfg.seed, "cnn-shuffle");

  CnnParams<float> best = model.params;
  double best_auroc = -1.0;
  int since_best = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::vector<int>> batch;
      math::Mat<float> targets(kNumLabels,
                               static_cast<Eigen::Index>(end - start));
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train_ids[order[i]]);
        targets.col(static_cast<Eigen::Index>(i - start)) =
            train_y.col(static_cast<Eigen::Index>(order[i]));
      }
      CnnParams<float> grads = CnnParams<float>::zeros(arch);
      cnn_loss_and_grads(model.params, batch, targets, &grads);
      auto pv = model.params.param_views();
      auto gv = grads.param_views();
      adam.step(pv, gv);
    }

    math::Mat<float> val_scores = cnn_scores(model.params, val_ids);
    Eigen::MatrixXd scores =
        val_scores.transpose().cast<double>();
    double total = 0.0;
    int used = 0;
    for (int l = 0; l < kNumLabels; ++l) {
      auto a = eval::auroc(scores.col(l), val_y.col(l));
      if (a) {
        total += *a;
        ++used;
      }
    }
    const double macro = used > 0 ? total / used : 0.0;
    if (macro > best_auroc) {
      best_auroc = macro;
      best = model.params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  model.params = best;
  return model;
}

std::array<double, kNumLabels> cnn_score(const CnnModel& model,
                                         const std::string& text) {
  auto scores = cnn_scores(model.params, {word_ids(model.vocab, text)});
  std::array<double, kNumLabels> out{};
  for (int l = 0; l < kNumLabels; ++l) {
    out[static_cast<std::size_t>(l)] = static_cast<double>(scores(l, 0));
  }
  return out;
}

}  // namespace followup::baselines
