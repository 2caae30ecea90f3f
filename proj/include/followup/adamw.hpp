#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "followup/model.hpp"

namespace followup::model {

// Adam with decoupled weight decay. Layer-norm parameters and biases are not
// decayed. Updates run in the canonical param_views order, so training is
// deterministic for a fixed batch sequence.
template <typename Scalar>
class AdamW {
 public:
  struct Options {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double grad_clip = 0.0;  // 0 disables global-norm clipping
  };

  explicit AdamW(Options opt = {}) : opt_(opt) {}

  const Options& options() const { return opt_; }

  static bool decays(const std::string& name) {
    auto dot = name.rfind('.');
    std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    if (leaf.rfind("ln", 0) == 0) return false;
    if (!leaf.empty() && leaf[0] == 'b') return false;  // bq, bk, bv, bo, b1..
    auto n = leaf.size();
    return !(n >= 2 && leaf[n - 2] == '_' && leaf[n - 1] == 'b');
  }

  void step(std::vector<ParamView<Scalar>>& params,
            std::vector<ParamView<Scalar>>& grads) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(static_cast<std::size_t>(params[i].size()), Scalar(0));
        v_[i].assign(static_cast<std::size_t>(params[i].size()), Scalar(0));
      }
    }
    ++t_;

    Scalar scale = Scalar(1);
    if (opt_.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads) {
        for (Eigen::Index k = 0; k < g.size(); ++k) {
          sq += static_cast<double>(g.data[k]) * static_cast<double>(g.data[k]);
        }
      }
      const double norm = std::sqrt(sq);
      if (norm > opt_.grad_clip) {
        scale = static_cast<Scalar>(opt_.grad_clip / norm);
      }
    }

    const Scalar b1 = static_cast<Scalar>(opt_.beta1);
    const Scalar b2 = static_cast<Scalar>(opt_.beta2);
    const Scalar corr1 =
        Scalar(1) - std::pow(b1, static_cast<Scalar>(t_));
    const Scalar corr2 =
        Scalar(1) - std::pow(b2, static_cast<Scalar>(t_));
    const Scalar lr = static_cast<Scalar>(opt_.lr);
    const Scalar eps = static_cast<Scalar>(opt_.eps);

    for (std::size_t i = 0; i < params.size(); ++i) {
      Scalar* w = params[i].data;
      const Scalar* g = grads[i].data;
      Scalar* m = m_[i].data();
      Scalar* v = v_[i].data();
      const Scalar decay =
          decays(params[i].name) ? static_cast<Scalar>(opt_.weight_decay)
                                 : Scalar(0);
      const Eigen::Index n = params[i].size();
      for (Eigen::Index k = 0; k < n; ++k) {
        const Scalar gk = g[k] * scale;
        m[k] = b1 * m[k] + (Scalar(1) - b1) * gk;
        v[k] = b2 * v[k] + (Scalar(1) - b2) * gk * gk;
        const Scalar mhat = m[k] / corr1;
        const Scalar vhat = v[k] / corr2;
        w[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + decay * w[k]);
      }
    }
  }

 private:
  Options opt_;
  long long t_ = 0;
  std::vector<std::vector<Scalar>> m_, v_;
};

}  // namespace followup::model
