#pragma once

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "followup/document.hpp"
#include "followup/math.hpp"
#include "followup/rng.hpp"
#include "followup/subword.hpp"
#include "followup/window.hpp"

namespace followup::model {

using math::Mat;
using math::RowVec;
using math::Vec;

struct EncoderConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int max_len = 512;
  int vocab_size = 0;
  int n_segments = 2;
  int n_labels = kNumLabels;
  double dropout = 0.1;

  void validate() const {
    if (n_layers < 0 || n_heads < 1 || d_model < 1 || d_ff < 1 ||
        max_len < 2 || vocab_size < subword::SubwordVocab::kNumReserved ||
        n_segments != 2 || n_labels != kNumLabels) {
      throw Error(ErrorCode::invalid_config, "invalid encoder configuration");
    }
    if (d_model % n_heads != 0) {
      throw Error(ErrorCode::invalid_config,
                  "d_model must be divisible by n_heads");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
      throw Error(ErrorCode::invalid_config, "dropout must be in [0, 1)");
    }
  }

  int head_dim() const { return d_model / n_heads; }
};

// Type-erased handle on one parameter tensor; the traversal order of
// param_views() is the canonical order used by the optimizer, the checkpoint
// format, and gradient checking.
template <typename Scalar>
struct ParamView {
  std::string name;
  Scalar* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};

template <typename Scalar>
struct EncoderParams {
  using MatS = Mat<Scalar>;
  using VecS = Vec<Scalar>;

  EncoderConfig cfg;

  MatS tok_emb, pos_emb, seg_emb;

  struct Layer {
    VecS ln1_g, ln1_b;
    MatS wq, wk, wv, wo;
    VecS bq, bk, bv, bo;
    VecS ln2_g, ln2_b;
    MatS w1;
    VecS b1;
    MatS w2;
    VecS b2;
  };
  std::vector<Layer> layers;

  VecS lnf_g, lnf_b;
  MatS cls_w;
  VecS cls_b;
  MatS mlm_w;
  VecS mlm_b;
  VecS switch_w;
  VecS switch_b;  // single element

  static EncoderParams zeros(const EncoderConfig& cfg) {
    cfg.validate();
    EncoderParams p;
    p.cfg = cfg;
    const int d = cfg.d_model;
    p.tok_emb = MatS::Zero(d, cfg.vocab_size);
    p.pos_emb = MatS::Zero(d, cfg.max_len);
    p.seg_emb = MatS::Zero(d, cfg.n_segments);
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& l : p.layers) {
      l.ln1_g = VecS::Zero(d);
      l.ln1_b = VecS::Zero(d);
      l.wq = MatS::Zero(d, d);
      l.wk = MatS::Zero(d, d);
      l.wv = MatS::Zero(d, d);
      l.wo = MatS::Zero(d, d);
      l.bq = VecS::Zero(d);
      l.bk = VecS::Zero(d);
      l.bv = VecS::Zero(d);
      l.bo = VecS::Zero(d);
      l.ln2_g = VecS::Zero(d);
      l.ln2_b = VecS::Zero(d);
      l.w1 = MatS::Zero(cfg.d_ff, d);
      l.b1 = VecS::Zero(cfg.d_ff);
      l.w2 = MatS::Zero(d, cfg.d_ff);
      l.b2 = VecS::Zero(d);
    }
    p.lnf_g = VecS::Zero(d);
    p.lnf_b = VecS::Zero(d);
    p.cls_w = MatS::Zero(cfg.n_labels, d);
    p.cls_b = VecS::Zero(cfg.n_labels);
    p.mlm_w = MatS::Zero(cfg.vocab_size, d);
    p.mlm_b = VecS::Zero(cfg.vocab_size);
    p.switch_w = VecS::Zero(d);
    p.switch_b = VecS::Zero(1);
    return p;
  }

  // Embeddings and projections start at N(0, 0.02^2); layer norms at
  // identity; the classification and switch heads start at zero so initial
  // scores are exactly 0.5.
  static EncoderParams init(const EncoderConfig& cfg, Rng& rng) {
    EncoderParams p = zeros(cfg);
    const Scalar sd = Scalar(0.02);
    auto fill = [&](MatS& m) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          m(i, j) = sd * static_cast<Scalar>(rng.normal());
        }
      }
    };
    fill(p.tok_emb);
    fill(p.pos_emb);
    fill(p.seg_emb);
    for (auto& l : p.layers) {
      l.ln1_g.setOnes();
      l.ln2_g.setOnes();
      fill(l.wq);
      fill(l.wk);
      fill(l.wv);
      fill(l.wo);
      fill(l.w1);
      fill(l.w2);
    }
    p.lnf_g.setOnes();
    fill(p.mlm_w);
    return p;
  }

  std::vector<ParamView<Scalar>> param_views() {
    std::vector<ParamView<Scalar>> v;
    auto add = [&](const std::string& name, MatS& m) {
      v.push_back({name, m.data(), m.rows(), m.cols()});
    };
    auto addv = [&](const std::string& name, VecS& x) {
      v.push_back({name, x.data(), x.rows(), 1});
    };
    add("tok_emb", tok_emb);
    add("pos_emb", pos_emb);
    add("seg_emb", seg_emb);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string pre = "layers." + std::to_string(i) + ".";
      Layer& l = layers[i];
      addv(pre + "ln1_g", l.ln1_g);
      addv(pre + "ln1_b", l.ln1_b);
      add(pre + "wq", l.wq);
      addv(pre + "bq", l.bq);
      add(pre + "wk", l.wk);
      addv(pre + "bk", l.bk);
      add(pre + "wv", l.wv);
      addv(pre + "bv", l.bv);
      add(pre + "wo", l.wo);
      addv(pre + "bo", l.bo);
      addv(pre + "ln2_g", l.ln2_g);
      addv(pre + "ln2_b", l.ln2_b);
      add(pre + "w1", l.w1);
      addv(pre + "b1", l.b1);
      add(pre + "w2", l.w2);
      addv(pre + "b2", l.b2);
    }
    addv("lnf_g", lnf_g);
    addv("lnf_b", lnf_b);
    add("cls_w", cls_w);
    addv("cls_b", cls_b);
    add("mlm_w", mlm_w);
    addv("mlm_b", mlm_b);
    addv("switch_w", switch_w);
    addv("switch_b", switch_b);
    return v;
  }

  template <typename Other>
  static EncoderParams from(const EncoderParams<Other>& src) {
    EncoderParams p = zeros(src.cfg);
    auto dst_views = p.param_views();
    auto src_views = const_cast<EncoderParams<Other>&>(src).param_views();
    for (std::size_t i = 0; i < dst_views.size(); ++i) {
      for (Eigen::Index k = 0; k < dst_views[i].size(); ++k) {
        dst_views[i].data[k] = static_cast<Scalar>(src_views[i].data[k]);
      }
    }
    return p;
  }
};

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LayerActs {
  Mat<Scalar> x_in;                      // residual stream entering the layer
  math::LayerNormCache<Scalar> ln1;
  Mat<Scalar> a;                         // ln1 output
  Mat<Scalar> q, k, v;
  std::vector<Mat<Scalar>> probs;        // attention probs, [window * head]
  Mat<Scalar> o;                         // concatenated head mixes
  Mat<Scalar> drop_attn;                 // inverted-dropout factors (train)
  Mat<Scalar> x_mid;                     // after attention residual
  math::LayerNormCache<Scalar> ln2;
  Mat<Scalar> c;                         // ln2 output
  Mat<Scalar> h1;                        // w1*c + b1
  Mat<Scalar> g;                         // gelu(h1)
  Mat<Scalar> drop_ff;
};

template <typename Scalar>
struct Activations {
  Mat<Scalar> x0;                        // embedding sum (after dropout)
  Mat<Scalar> drop_emb;
  std::vector<LayerActs<Scalar>> layers;
  Mat<Scalar> x_last;                    // input to the final layer norm
  math::LayerNormCache<Scalar> lnf;
  Mat<Scalar> y;                         // final token representations (d x T)
  int batch = 0;
  int padded_len = 0;
};

namespace detail {

template <typename Scalar>
Mat<Scalar> dropout_factors(Eigen::Index rows, Eigen::Index cols, double p,
                            Rng& rng) {
  Mat<Scalar> m(rows, cols);
  const Scalar keep = Scalar(1.0 / (1.0 - p));
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      m(i, j) = rng.uniform01() < p ? Scalar(0) : keep;
    }
  }
  return m;
}

}  // namespace detail

// Sum of token/position/segment embeddings through n_layers of pre-norm
// self-attention and feed-forward blocks with residuals, then a final layer
// norm. Attention is masked so real tokens never attend PAD. Dropout draws
// from `rng` in train mode only.
template <typename Scalar>
Activations<Scalar> encoder_forward(const EncoderParams<Scalar>& p,
                                    const window::WindowBatch& batch,
                                    Mode mode = Mode::eval,
                                    Rng* rng = nullptr) {
  const EncoderConfig& cfg = p.cfg;
  const int B = batch.rows();
  const int L = batch.cols();
  const int T = B * L;
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const bool train = mode == Mode::train && cfg.dropout > 0.0;
  if (train && rng == nullptr) {
    throw Error(ErrorCode::invalid_config,
                "train-mode forward needs an rng for dropout");
  }
  if (L > cfg.max_len) {
    throw Error(ErrorCode::invalid_config,
                "window length exceeds the encoder max_len");
  }

  Activations<Scalar> acts;
  acts.batch = B;
  acts.padded_len = L;
  acts.x0.resize(d, T);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) {
      const int tok = batch.tokens(b, t);
      const int seg = batch.segments(b, t);
      acts.x0.col(b * L + t) =
          p.tok_emb.col(tok) + p.pos_emb.col(t) + p.seg_emb.col(seg);
    }
  }
  if (train) {
    acts.drop_emb = detail::dropout_factors<Scalar>(d, T, cfg.dropout, *rng);
    acts.x0 = acts.x0.cwiseProduct(acts.drop_emb);
  }

  const Scalar inv_sqrt_dh = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  Mat<Scalar> x = acts.x0;
  acts.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (int li = 0; li < cfg.n_layers; ++li) {
    const auto& lp = p.layers[static_cast<std::size_t>(li)];
    LayerActs<Scalar>& la = acts.layers[static_cast<std::size_t>(li)];
    la.x_in = std::move(x);

    la.a = math::layer_norm(la.x_in, lp.ln1_g, lp.ln1_b, la.ln1);
    la.q.noalias() = lp.wq * la.a;
    la.q.colwise() += lp.bq;
    la.k.noalias() = lp.wk * la.a;
    la.k.colwise() += lp.bk;
    la.v.noalias() = lp.wv * la.a;
    la.v.colwise() += lp.bv;

    la.o.resize(d, T);
    la.probs.assign(static_cast<std::size_t>(B) * H, Mat<Scalar>());
    for (int b = 0; b < B; ++b) {
      const int len = batch.lengths[static_cast<std::size_t>(b)];
      for (int h = 0; h < H; ++h) {
        auto qb = la.q.block(h * dh, b * L, dh, L);
        auto kb = la.k.block(h * dh, b * L, dh, L);
        auto vb = la.v.block(h * dh, b * L, dh, L);
        Mat<Scalar> scores(L, L);
        scores.noalias() = kb.transpose() * qb;
        scores *= inv_sqrt_dh;
        if (len < L) {
          scores.bottomRows(L - len).setConstant(Scalar(-1e30));
        }
        math::softmax_columns(scores);
        if (len < L) {
          // Eigen's vectorized exp saturates at a denormal rather than 0;
          // the contract is that PAD keys get weight exactly 0.
          scores.bottomRows(L - len).setZero();
        }
        la.o.block(h * dh, b * L, dh, L).noalias() = vb * scores;
        la.probs[static_cast<std::size_t>(b) * H + h] = std::move(scores);
      }
    }

    Mat<Scalar> attn_out;
    attn_out.noalias() = lp.wo * la.o;
    attn_out.colwise() += lp.bo;
    if (train) {
      la.drop_attn = detail::dropout_factors<Scalar>(d, T, cfg.dropout, *rng);
      attn_out = attn_out.cwiseProduct(la.drop_attn);
    }
    la.x_mid = la.x_in + attn_out;

    la.c = math::layer_norm(la.x_mid, lp.ln2_g, lp.ln2_b, la.ln2);
    la.h1.noalias() = lp.w1 * la.c;
    la.h1.colwise() += lp.b1;
    la.g = la.h1.unaryExpr([](Scalar t) { return math::gelu(t); });
    Mat<Scalar> ff;
    ff.noalias() = lp.w2 * la.g;
    ff.colwise() += lp.b2;
    if (train) {
      la.drop_ff = detail::dropout_factors<Scalar>(d, T, cfg.dropout, *rng);
      ff = ff.cwiseProduct(la.drop_ff);
    }
    x = la.x_mid + ff;
  }

  acts.x_last = std::move(x);
  acts.y = math::layer_norm(acts.x_last, p.lnf_g, p.lnf_b, acts.lnf);
  return acts;
}

// Accumulates parameter gradients for upstream dL/dY into `grads`.
template <typename Scalar>
void encoder_backward(const EncoderParams<Scalar>& p,
                      const window::WindowBatch& batch,
                      const Activations<Scalar>& acts, Mat<Scalar> dy,
                      EncoderParams<Scalar>& grads) {
  const EncoderConfig& cfg = p.cfg;
  const int B = acts.batch;
  const int L = acts.padded_len;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const Scalar inv_sqrt_dh = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const bool train = acts.drop_emb.size() > 0;

  Mat<Scalar> dx =
      math::layer_norm_backward(dy, p.lnf_g, acts.lnf, grads.lnf_g,
                                grads.lnf_b);

  for (int li = cfg.n_layers - 1; li >= 0; --li) {
    const auto& lp = p.layers[static_cast<std::size_t>(li)];
    auto& lg = grads.layers[static_cast<std::size_t>(li)];
    const LayerActs<Scalar>& la = acts.layers[static_cast<std::size_t>(li)];

    // Feed-forward block.
    Mat<Scalar> dff = train ? dx.cwiseProduct(la.drop_ff).eval() : dx;
    lg.b2.noalias() += dff.rowwise().sum();
    lg.w2.noalias() += dff * la.g.transpose();
    Mat<Scalar> dg;
    dg.noalias() = lp.w2.transpose() * dff;
    Mat<Scalar> dh1 =
        dg.cwiseProduct(la.h1.unaryExpr([](Scalar t) {
          return math::gelu_grad(t);
        }));
    lg.b1.noalias() += dh1.rowwise().sum();
    lg.w1.noalias() += dh1 * la.c.transpose();
    Mat<Scalar> dc;
    dc.noalias() = lp.w1.transpose() * dh1;
    Mat<Scalar> dx_mid =
        dx + math::layer_norm_backward(dc, lp.ln2_g, la.ln2, lg.ln2_g,
                                       lg.ln2_b);

    // Attention block.
    Mat<Scalar> dattn =
        train ? dx_mid.cwiseProduct(la.drop_attn).eval() : dx_mid;
    lg.bo.noalias() += dattn.rowwise().sum();
    lg.wo.noalias() += dattn * la.o.transpose();
    Mat<Scalar> do_cat;
    do_cat.noalias() = lp.wo.transpose() * dattn;

    Mat<Scalar> dq = Mat<Scalar>::Zero(cfg.d_model, B * L);
    Mat<Scalar> dk = Mat<Scalar>::Zero(cfg.d_model, B * L);
    Mat<Scalar> dv = Mat<Scalar>::Zero(cfg.d_model, B * L);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        const Mat<Scalar>& probs =
            la.probs[static_cast<std::size_t>(b) * H + h];
        auto dob = do_cat.block(h * dh, b * L, dh, L);
        auto qb = la.q.block(h * dh, b * L, dh, L);
        auto kb = la.k.block(h * dh, b * L, dh, L);
        auto vb = la.v.block(h * dh, b * L, dh, L);
        dv.block(h * dh, b * L, dh, L).noalias() = dob * probs.transpose();
        Mat<Scalar> dprobs;
        dprobs.noalias() = vb.transpose() * dob;
        Mat<Scalar> dscores = math::softmax_columns_backward(probs, dprobs);
        dscores *= inv_sqrt_dh;
        dq.block(h * dh, b * L, dh, L).noalias() = kb * dscores;
        dk.block(h * dh, b * L, dh, L).noalias() = qb * dscores.transpose();
      }
    }

    lg.bq.noalias() += dq.rowwise().sum();
    lg.bk.noalias() += dk.rowwise().sum();
    lg.bv.noalias() += dv.rowwise().sum();
    lg.wq.noalias() += dq * la.a.transpose();
    lg.wk.noalias() += dk * la.a.transpose();
    lg.wv.noalias() += dv * la.a.transpose();
    Mat<Scalar> da;
    da.noalias() = lp.wq.transpose() * dq;
    da.noalias() += lp.wk.transpose() * dk;
    da.noalias() += lp.wv.transpose() * dv;

    dx = dx_mid + math::layer_norm_backward(da, lp.ln1_g, la.ln1, lg.ln1_g,
                                            lg.ln1_b);
  }

  if (train) dx = dx.cwiseProduct(acts.drop_emb);
  for (int b = 0; b < B; ++b) {
    const int len = batch.lengths[static_cast<std::size_t>(b)];
    for (int t = 0; t < len; ++t) {
      const int col = b * L + t;
      grads.tok_emb.col(batch.tokens(b, t)) += dx.col(col);
      grads.pos_emb.col(t) += dx.col(col);
      grads.seg_emb.col(batch.segments(b, t)) += dx.col(col);
    }
  }
}

// ---------------------------------------------------------------------------
// Heads and losses
// ---------------------------------------------------------------------------

// Per-label probabilities from the focus-SEP representation: (n_labels x B).
template <typename Scalar>
Mat<Scalar> classify_probs(const EncoderParams<Scalar>& p,
                           const Activations<Scalar>& acts,
                           const window::WindowBatch& batch) {
  const int B = acts.batch;
  Mat<Scalar> ysep(p.cfg.d_model, B);
  for (int b = 0; b < B; ++b) {
    ysep.col(b) =
        acts.y.col(b * acts.padded_len +
                   batch.focus_sep[static_cast<std::size_t>(b)]);
  }
  Mat<Scalar> z;
  z.noalias() = p.cls_w * ysep;
  z.colwise() += p.cls_b;
  return z.unaryExpr([](Scalar t) { return math::sigmoid(t); });
}

inline constexpr double kBceEps = 1e-7;

// Mean over (sentence, label) of the binary cross entropy, with probabilities
// clamped to [eps, 1-eps]. pos_weight scales the positive terms.
template <typename Scalar>
Scalar multilabel_bce_loss(const Mat<Scalar>& probs, const Mat<Scalar>& targets,
                           Scalar pos_weight = Scalar(1)) {
  const Scalar eps = Scalar(kBceEps);
  Scalar total = 0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      Scalar pr = std::min(std::max(probs(i, j), eps), Scalar(1) - eps);
      Scalar y = targets(i, j);
      total += -(pos_weight * y * std::log(pr) +
                 (Scalar(1) - y) * std::log(Scalar(1) - pr));
    }
  }
  return total / static_cast<Scalar>(probs.size());
}

// Fine-tuning objective: BCE over all 7 labels at the focus SEP. Returns the
// loss; accumulates gradients into `grads` when non-null. `probs_out`
// receives the (n_labels x B) scores when non-null.
template <typename Scalar>
Scalar classify_loss_and_grads(const EncoderParams<Scalar>& p,
                               const window::WindowBatch& batch,
                               const Mat<Scalar>& targets, Mode mode, Rng* rng,
                               EncoderParams<Scalar>* grads,
                               Mat<Scalar>* probs_out = nullptr,
                               Scalar pos_weight = Scalar(1)) {
  Activations<Scalar> acts = encoder_forward(p, batch, mode, rng);
  Mat<Scalar> probs = classify_probs(p, acts, batch);
  const Scalar loss = multilabel_bce_loss(probs, targets, pos_weight);
  if (probs_out) *probs_out = probs;
  if (!grads) return loss;

  const int B = acts.batch;
  const int L = acts.padded_len;
  Mat<Scalar> dz =
      (pos_weight * targets.array() * (probs.array() - Scalar(1)) +
       (Scalar(1) - targets.array()) * probs.array())
          .matrix() /
      static_cast<Scalar>(probs.size());
  Mat<Scalar> ysep(p.cfg.d_model, B);
  for (int b = 0; b < B; ++b) {
    ysep.col(b) =
        acts.y.col(b * L + batch.focus_sep[static_cast<std::size_t>(b)]);
  }
  grads->cls_w.noalias() += dz * ysep.transpose();
  grads->cls_b.noalias() += dz.rowwise().sum();
  Mat<Scalar> dysep;
  dysep.noalias() = p.cls_w.transpose() * dz;
  Mat<Scalar> dy = Mat<Scalar>::Zero(p.cfg.d_model, B * L);
  for (int b = 0; b < B; ++b) {
    dy.col(b * L + batch.focus_sep[static_cast<std::size_t>(b)]) +=
        dysep.col(b);
  }
  encoder_backward(p, batch, acts, std::move(dy), *grads);
  return loss;
}

// One masked-position target: flattened batch column and the original id.
struct MlmTarget {
  int column;
  int token;
};

template <typename Scalar>
struct PretrainLossParts {
  Scalar mlm = 0;
  Scalar switching = 0;
  Scalar total = 0;
};

// Joint pre-training objective: masked-token cross entropy over the
// vocabulary (mean across masked positions; 0 when none) plus the binary
// cross entropy of the switch head, which reads the mean of the final-layer
// context (segment B) representations. Losses are summed.
template <typename Scalar>
PretrainLossParts<Scalar> pretrain_loss_and_grads(
    const EncoderParams<Scalar>& p, const window::WindowBatch& batch,
    const std::vector<MlmTarget>& mlm_targets,
    const std::vector<char>& switched, Mode mode, Rng* rng,
    EncoderParams<Scalar>* grads) {
  Activations<Scalar> acts = encoder_forward(p, batch, mode, rng);
  const int B = acts.batch;
  const int L = acts.padded_len;
  const int d = p.cfg.d_model;
  PretrainLossParts<Scalar> out;

  Mat<Scalar> dy = Mat<Scalar>::Zero(d, B * L);

  // Masked language model head.
  const int n_mask = static_cast<int>(mlm_targets.size());
  if (n_mask > 0) {
    Mat<Scalar> ym(d, n_mask);
    for (int m = 0; m < n_mask; ++m) {
      ym.col(m) = acts.y.col(mlm_targets[static_cast<std::size_t>(m)].column);
    }
    Mat<Scalar> logits;
    logits.noalias() = p.mlm_w * ym;
    logits.colwise() += p.mlm_b;
    math::softmax_columns(logits);  // now probabilities
    Scalar mlm_loss = 0;
    for (int m = 0; m < n_mask; ++m) {
      Scalar pr = logits(mlm_targets[static_cast<std::size_t>(m)].token, m);
      mlm_loss += -std::log(std::max(pr, Scalar(1e-30)));
    }
    out.mlm = mlm_loss / static_cast<Scalar>(n_mask);
    if (grads) {
      Mat<Scalar>& dlogits = logits;  // reuse: softmax - onehot, scaled
      for (int m = 0; m < n_mask; ++m) {
        dlogits(mlm_targets[static_cast<std::size_t>(m)].token, m) -=
            Scalar(1);
      }
      dlogits /= static_cast<Scalar>(n_mask);
      grads->mlm_w.noalias() += dlogits * ym.transpose();
      grads->mlm_b.noalias() += dlogits.rowwise().sum();
      Mat<Scalar> dym;
      dym.noalias() = p.mlm_w.transpose() * dlogits;
      for (int m = 0; m < n_mask; ++m) {
        dy.col(mlm_targets[static_cast<std::size_t>(m)].column) += dym.col(m);
      }
    }
  }

  // Switch-prediction head: mean over real segment-B columns.
  {
    std::vector<std::vector<int>> ctx_cols(static_cast<std::size_t>(B));
    int usable = 0;
    for (int b = 0; b < B; ++b) {
      auto& cols = ctx_cols[static_cast<std::size_t>(b)];
      const int len = batch.lengths[static_cast<std::size_t>(b)];
      for (int t = 0; t < len; ++t) {
        if (batch.segments(b, t) == window::kSegmentContext) {
          cols.push_back(b * L + t);
        }
      }
      usable += cols.empty() ? 0 : 1;
    }
    if (usable > 0) {
      Scalar sw_loss = 0;
      const Scalar eps = Scalar(kBceEps);
      for (int b = 0; b < B; ++b) {
        const auto& cols = ctx_cols[static_cast<std::size_t>(b)];
        if (cols.empty()) continue;
        Vec<Scalar> u = Vec<Scalar>::Zero(d);
        for (int c : cols) u += acts.y.col(c);
        u /= static_cast<Scalar>(cols.size());
        Scalar z = p.switch_w.dot(u) + p.switch_b(0);
        Scalar pr = math::sigmoid(z);
        Scalar y = switched[static_cast<std::size_t>(b)] ? Scalar(1)
                                                         : Scalar(0);
        Scalar pc = std::min(std::max(pr, eps), Scalar(1) - eps);
        sw_loss += -(y * std::log(pc) +
                     (Scalar(1) - y) * std::log(Scalar(1) - pc));
        if (grads) {
          Scalar dz = (pr - y) / static_cast<Scalar>(usable);
          grads->switch_w.noalias() += dz * u;
          grads->switch_b(0) += dz;
          Vec<Scalar> du = (dz / static_cast<Scalar>(cols.size())) *
                           p.switch_w;
          for (int c : cols) dy.col(c) += du;
        }
      }
      out.switching = sw_loss / static_cast<Scalar>(usable);
    }
  }

  out.total = out.mlm + out.switching;
  if (grads) {
    encoder_backward(p, batch, acts, std::move(dy), *grads);
  }
  return out;
}

}  // namespace followup::model
