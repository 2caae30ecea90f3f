#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "followup/math.hpp"
#include "followup/model.hpp"

namespace followup::baselines {

// ---------------------------------------------------------------------------
// TF-IDF bag-of-words logistic regression, one-vs-rest, L1-regularized.
// ---------------------------------------------------------------------------

struct TfidfVocab {
  std::unordered_map<std::string, int> index;
  std::vector<double> idf;
  int size() const { return static_cast<int>(idf.size()); }
};

struct SparseVec {
  std::vector<std::pair<int, double>> entries;  // sorted by feature id
};

// Fitted on the training split only; idf = ln((1+n)/(1+df)) + 1 and the
// resulting tf*idf vector is L2-normalized. Terms absent from a sentence
// contribute nothing.
TfidfVocab fit_tfidf(const std::vector<std::string>& train_sentences);
SparseVec transform_tfidf(const TfidfVocab& vocab, const std::string& text);

struct LabeledSentence {
  std::string text;
  LabelSet labels;
};

struct BowModel {
  TfidfVocab vocab;
  // One weight row per label over [features..., bias]; the bias is the last
  // coordinate and is L1-penalized like the rest, so l1 -> infinity shrinks
  // every score to 0.5.
  Eigen::MatrixXd weights;
  double l1 = 0.0;
};

// Proximal-gradient (FISTA) optimization of the L1-penalized logistic loss,
// run until the objective changes by less than 1e-6.
BowModel bow_logreg_train(const std::vector<LabeledSentence>& train,
                          double l1_strength);
std::array<double, kNumLabels> bow_logreg_score(const BowModel& model,
                                                const std::string& text);

// ---------------------------------------------------------------------------
// Max-pooling 1-D convolutional network over word embeddings.
// ---------------------------------------------------------------------------

struct WordVocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  std::unordered_map<std::string, int> index;
  int size = 2;
};

WordVocab fit_word_vocab(const std::vector<std::string>& sentences,
                         int max_size = 20000);
std::vector<int> word_ids(const WordVocab& vocab, const std::string& text);

struct CnnConfig {
  int vocab_size = 2;
  int emb_dim = 64;
  std::vector<int> widths = {2, 3, 4};
  int filters = 32;
  int n_labels = kNumLabels;

  int feature_dim() const {
    return filters * static_cast<int>(widths.size());
  }
  int max_width() const {
    int m = 1;
    for (int w : widths) m = std::max(m, w);
    return m;
  }
};

template <typename Scalar>
struct CnnParams {
  using MatS = math::Mat<Scalar>;
  using VecS = math::Vec<Scalar>;

  CnnConfig cfg;
  MatS emb;                    // (emb_dim x vocab)
  std::vector<MatS> conv_w;    // per width: (filters x emb_dim*width)
  std::vector<VecS> conv_b;
  MatS cls_w;                  // (n_labels x feature_dim)
  VecS cls_b;

  static CnnParams zeros(const CnnConfig& cfg) {
    CnnParams p;
    p.cfg = cfg;
    p.emb = MatS::Zero(cfg.emb_dim, cfg.vocab_size);
    for (int w : cfg.widths) {
      p.conv_w.push_back(MatS::Zero(cfg.filters, cfg.emb_dim * w));
      p.conv_b.push_back(VecS::Zero(cfg.filters));
    }
    p.cls_w = MatS::Zero(cfg.n_labels, cfg.feature_dim());
    p.cls_b = VecS::Zero(cfg.n_labels);
    return p;
  }

  // Random word embeddings (no external vectors at this scale) and small
  // random convolution filters; the classifier starts at zero.
  static CnnParams init(const CnnConfig& cfg, Rng& rng) {
    CnnParams p = zeros(cfg);
    auto fill = [&](MatS& m, Scalar sd) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          m(i, j) = sd * static_cast<Scalar>(rng.normal());
        }
      }
    };
    fill(p.emb, Scalar(0.1));
    for (auto& w : p.conv_w) fill(w, Scalar(0.05));
    return p;
  }

  std::vector<model::ParamView<Scalar>> param_views() {
    std::vector<model::ParamView<Scalar>> v;
    v.push_back({"emb", emb.data(), emb.rows(), emb.cols()});
    for (std::size_t i = 0; i < conv_w.size(); ++i) {
      v.push_back({"conv_w" + std::to_string(i), conv_w[i].data(),
                   conv_w[i].rows(), conv_w[i].cols()});
      v.push_back({"conv_bias" + std::to_string(i), conv_b[i].data(),
                   conv_b[i].rows(), 1});
    }
    v.push_back({"cls_w", cls_w.data(), cls_w.rows(), cls_w.cols()});
    v.push_back({"cls_bias", cls_b.data(), cls_b.rows(), 1});
    return v;
  }
};

// Sigmoid scores, (n_labels x batch). Sentences shorter than the widest
// kernel are right-padded with the PAD id.
template <typename Scalar>
math::Mat<Scalar> cnn_scores(const CnnParams<Scalar>& p,
                             const std::vector<std::vector<int>>& batch);

// Mean BCE over (sentence, label); accumulates grads when non-null.
template <typename Scalar>
Scalar cnn_loss_and_grads(const CnnParams<Scalar>& p,
                          const std::vector<std::vector<int>>& batch,
                          const math::Mat<Scalar>& targets,
                          CnnParams<Scalar>* grads,
                          math::Mat<Scalar>* probs_out = nullptr);

struct CnnTrainConfig {
  CnnConfig arch;
  int batch_size = 32;
  double lr = 3e-3;
  int max_epochs = 30;
  int patience = 5;
  std::uint64_t seed = 1;
};

struct CnnModel {
  WordVocab vocab;
  CnnParams<float> params;
};

// Early-stops on validation macro AUROC, like every neural model here.
CnnModel cnn_train(const std::vector<LabeledSentence>& train,
                   const std::vector<LabeledSentence>& val,
                   const CnnTrainConfig& cfg);
std::array<double, kNumLabels> cnn_score(const CnnModel& model,
                                         const std::string& text);

extern template math::Mat<float> cnn_scores<float>(
    const CnnParams<float>&, const std::vector<std::vector<int>>&);
extern template math::Mat<double> cnn_scores<double>(
    const CnnParams<double>&, const std::vector<std::vector<int>>&);
extern template float cnn_loss_and_grads<float>(
    const CnnParams<float>&, const std::vector<std::vector<int>>&,
    const math::Mat<float>&, CnnParams<float>*, math::Mat<float>*);
extern template double cnn_loss_and_grads<double>(
    const CnnParams<double>&, const std::vector<std::vector<int>>&,
    const math::Mat<double>&, CnnParams<double>*, math::Mat<double>*);

}  // namespace followup::baselines
