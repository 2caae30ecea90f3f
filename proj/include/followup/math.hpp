#pragma once

#include <Eigen/Core>
#include <cmath>

namespace followup::math {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// Exact (erf-based) GELU and its derivative.
template <typename Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x *
         (Scalar(1) + std::erf(x * Scalar(0.7071067811865475)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar phi = std::exp(Scalar(-0.5) * x * x) *
                     Scalar(0.3989422804014327);  // standard normal pdf
  const Scalar Phi =
      Scalar(0.5) * (Scalar(1) + std::erf(x * Scalar(0.7071067811865475)));
  return Phi + x * phi;
}

// Column-wise softmax in place.
template <typename Scalar>
void softmax_columns(Mat<Scalar>& s) {
  RowVec<Scalar> mx = s.colwise().maxCoeff();
  s.array().rowwise() -= mx.array();
  s = s.array().exp();
  RowVec<Scalar> sums = s.colwise().sum();
  s.array().rowwise() /= sums.array();
}

// Backward of column-wise softmax: given probabilities p and upstream dp,
// returns dL/dlogits.
template <typename Scalar>
Mat<Scalar> softmax_columns_backward(const Mat<Scalar>& p,
                                     const Mat<Scalar>& dp) {
  RowVec<Scalar> dots = p.cwiseProduct(dp).colwise().sum();
  Mat<Scalar> shifted = dp;
  shifted.array().rowwise() -= dots.array();
  return p.cwiseProduct(shifted);
}

// Per-column layer norm. Caches the normalized values and the inverse
// standard deviations for the backward pass.
template <typename Scalar>
struct LayerNormCache {
  Mat<Scalar> normalized;   // (x - mean) / std, before gamma/beta
  RowVec<Scalar> inv_std;
};

template <typename Scalar>
Mat<Scalar> layer_norm(const Mat<Scalar>& x, const Vec<Scalar>& gamma,
                       const Vec<Scalar>& beta, LayerNormCache<Scalar>& cache,
                       Scalar eps = Scalar(1e-5)) {
  const auto d = static_cast<Scalar>(x.rows());
  RowVec<Scalar> mean = x.colwise().sum() / d;
  Mat<Scalar> centered = x;
  centered.array().rowwise() -= mean.array();
  RowVec<Scalar> var = centered.array().square().colwise().sum() / d;
  cache.inv_std = (var.array() + eps).rsqrt();
  cache.normalized = centered;
  cache.normalized.array().rowwise() *= cache.inv_std.array();
  Mat<Scalar> out = cache.normalized;
  out.array().colwise() *= gamma.array();
  out.array().colwise() += beta.array();
  return out;
}

// Given upstream dL/dout, accumulates dgamma/dbeta and returns dL/dx.
template <typename Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dout,
                                const Vec<Scalar>& gamma,
                                const LayerNormCache<Scalar>& cache,
                                Vec<Scalar>& dgamma, Vec<Scalar>& dbeta) {
  const auto d = static_cast<Scalar>(dout.rows());
  dgamma.noalias() += dout.cwiseProduct(cache.normalized).rowwise().sum();
  dbeta.noalias() += dout.rowwise().sum();
  Mat<Scalar> dxn = dout;
  dxn.array().colwise() *= gamma.array();
  RowVec<Scalar> m1 = dxn.colwise().sum() / d;
  RowVec<Scalar> m2 = dxn.cwiseProduct(cache.normalized).colwise().sum() / d;
  Mat<Scalar> dx = dxn;
  dx.array().rowwise() -= m1.array();
  Mat<Scalar> proj = cache.normalized;
  proj.array().rowwise() *= m2.array();
  dx -= proj;
  dx.array().rowwise() *= cache.inv_std.array();
  return dx;
}

}  // namespace followup::math
