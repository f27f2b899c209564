// Copyright 2026 The labelenc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "labelenc/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <utility>

namespace labelenc::ops {
namespace {

void check4d(const Var& x, const char* op) {
  if (!x || x->value.ndim() != 4) throw std::invalid_argument(std::string(op) + ": expected 4-d NCHW input");
}

void push(const Var& p, const Tensor& g) {
  if (p && p->requires_grad) p->accumulate(g);
}

// cols: (Cin*kh*kw) x (Ho*Wo), one image.
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo,
            double* cols) {
  const int64_t plane = int64_t(H) * W;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        double* row = cols + (int64_t(c) * kh * kw + ki * kw + kj) * Ho * Wo;
        const double* src = x + c * plane;
        for (int oh = 0; oh < Ho; ++oh) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) {
            for (int ow = 0; ow < Wo; ++ow) row[oh * Wo + ow] = 0.0;
            continue;
          }
          for (int ow = 0; ow < Wo; ++ow) {
            int iw = ow * stride - pad + kj;
            row[oh * Wo + ow] = (iw >= 0 && iw < W) ? src[int64_t(ih) * W + iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_acc(const double* cols, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
                int Wo, double* x) {
  const int64_t plane = int64_t(H) * W;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const double* row = cols + (int64_t(c) * kh * kw + ki * kw + kj) * Ho * Wo;
        double* dst = x + c * plane;
        for (int oh = 0; oh < Ho; ++oh) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          for (int ow = 0; ow < Wo; ++ow) {
            int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < W) dst[int64_t(ih) * W + iw] += row[oh * Wo + ow];
          }
        }
      }
    }
  }
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A, int lda,
          const double* B, int ldb, double beta, double* C, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, A, lda, B, ldb, beta, C, ldc);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check4d(x, "conv2d");
  if (!w || w->value.ndim() != 4) throw std::invalid_argument("conv2d: weight must be OIHW");
  const int N = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int Cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != Cin)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(Cin) +
                                " do not match weight " + std::to_string(w->value.dim(1)));
  if (b && b->value.numel() != Cout) throw std::invalid_argument("conv2d: bias size mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");

  const int K = Cin * kh * kw;
  const int64_t out_plane = int64_t(Ho) * Wo;
  Tensor y({N, Cout, Ho, Wo});
  Tensor cols({K, Ho * Wo});
  for (int n = 0; n < N; ++n) {
    const double* xn = x->value.data() + int64_t(n) * Cin * H * W;
    im2col(xn, Cin, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());
    double* yn = y.data() + int64_t(n) * Cout * out_plane;
    gemm(false, false, Cout, Ho * Wo, K, 1.0, w->value.data(), K, cols.data(), Ho * Wo, 0.0, yn,
         Ho * Wo);
    if (b) {
      for (int c = 0; c < Cout; ++c) {
        double bias = b->value[c];
        double* p = yn + c * out_plane;
        for (int64_t i = 0; i < out_plane; ++i) p[i] += bias;
      }
    }
  }

  std::vector<Var> parents = {x, w, b};
  return make_op(std::move(y), parents, [x, w, b, N, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo,
                                         K](const Tensor& gout) {
    const int64_t out_plane = int64_t(Ho) * Wo;
    Tensor cols({K, Ho * Wo});
    Tensor dw, dcols;
    const bool need_dx = x->requires_grad;
    const bool need_dw = w->requires_grad;
    if (need_dw) dw = Tensor(w->value.shape());
    if (need_dx) dcols = Tensor({K, Ho * Wo});
    Tensor dx;
    if (need_dx) dx = Tensor(x->value.shape());
    for (int n = 0; n < N; ++n) {
      const double* gn = gout.data() + int64_t(n) * Cout * out_plane;
      if (need_dw) {
        const double* xn = x->value.data() + int64_t(n) * Cin * H * W;
        im2col(xn, Cin, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());
        gemm(false, true, Cout, K, Ho * Wo, 1.0, gn, Ho * Wo, cols.data(), Ho * Wo, 1.0, dw.data(), K);
      }
      if (need_dx) {
        gemm(true, false, K, Ho * Wo, Cout, 1.0, w->value.data(), K, gn, Ho * Wo, 0.0, dcols.data(),
             Ho * Wo);
        col2im_acc(dcols.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                   dx.data() + int64_t(n) * Cin * H * W);
      }
    }
    if (need_dw) push(w, dw);
    if (need_dx) push(x, dx);
    if (b && b->requires_grad) {
      Tensor db(b->value.shape());
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cout; ++c) {
          const double* p = gout.data() + (int64_t(n) * Cout + c) * out_plane;
          double s = 0.0;
          for (int64_t i = 0; i < out_plane; ++i) s += p[i];
          db[c] += s;
        }
      push(b, db);
    }
  });
}

Var relu(const Var& x) {
  Tensor y(x->value.shape());
  const double* src = x->value.data();
  double* dst = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return make_op(std::move(y), {x}, [x](const Tensor& g) {
    Tensor dx(x->value.shape());
    const double* src = x->value.data();
    const double* gp = g.data();
    double* dp = dx.data();
    for (int64_t i = 0, n = dx.numel(); i < n; ++i) dp[i] = src[i] > 0.0 ? gp[i] : 0.0;
    push(x, dx);
  });
}

Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor y = a->value;
  y.add_(b->value);
  return make_op(std::move(y), {a, b}, [a, b](const Tensor& g) {
    push(a, g);
    push(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) throw std::invalid_argument("sub: shape mismatch");
  Tensor y = a->value;
  y.axpy_(-1.0, b->value);
  return make_op(std::move(y), {a, b}, [a, b](const Tensor& g) {
    push(a, g);
    if (b && b->requires_grad) {
      Tensor gb = g;
      gb.scale_(-1.0);
      b->accumulate(gb);
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor y = x->value;
  y.scale_(s);
  return make_op(std::move(y), {x}, [x, s](const Tensor& g) {
    if (x && x->requires_grad) {
      Tensor gx = g;
      gx.scale_(s);
      x->accumulate(gx);
    }
  });
}

Var square(const Var& x) {
  Tensor y(x->value.shape());
  const double* src = x->value.data();
  double* dst = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) dst[i] = src[i] * src[i];
  return make_op(std::move(y), {x}, [x](const Tensor& g) {
    if (!x->requires_grad) return;
    Tensor dx(x->value.shape());
    const double* src = x->value.data();
    const double* gp = g.data();
    double* dp = dx.data();
    for (int64_t i = 0, n = dx.numel(); i < n; ++i) dp[i] = 2.0 * src[i] * gp[i];
    x->accumulate(dx);
  });
}

Var exp(const Var& x) {
  Tensor y(x->value.shape());
  const double* src = x->value.data();
  double* dst = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) dst[i] = std::exp(src[i]);
  Tensor y_copy = y;
  return make_op(std::move(y), {x}, [x, y_copy](const Tensor& g) {
    if (!x->requires_grad) return;
    Tensor dx(x->value.shape());
    const double* yp = y_copy.data();
    const double* gp = g.data();
    double* dp = dx.data();
    for (int64_t i = 0, n = dx.numel(); i < n; ++i) dp[i] = yp[i] * gp[i];
    x->accumulate(dx);
  });
}

Var upsample_nearest2(const Var& x) {
  check4d(x, "upsample_nearest2");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  Tensor y({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < 2 * H; ++h)
        for (int w = 0; w < 2 * W; ++w) y.at4(n, c, h, w) = x->value.at4(n, c, h / 2, w / 2);
  return make_op(std::move(y), {x}, [x, N, C, H, W](const Tensor& g) {
    if (!x->requires_grad) return;
    Tensor dx(x->value.shape());
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < 2 * H; ++h)
          for (int w = 0; w < 2 * W; ++w) dx.at4(n, c, h / 2, w / 2) += g.at4(n, c, h, w);
    x->accumulate(dx);
  });
}

Var layer_norm_channels(const Var& x, double eps) {
  check4d(x, "layer_norm_channels");
  if (eps <= 0.0) throw std::invalid_argument("layer_norm_channels: eps must be positive");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  Tensor y(x->value.shape());
  Tensor inv_std({N, H, W});
  Tensor mean_map({N, H, W});
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        double m = 0.0;
        for (int c = 0; c < C; ++c) m += x->value.at4(n, c, h, w);
        m /= C;
        double v = 0.0;
        for (int c = 0; c < C; ++c) {
          double d = x->value.at4(n, c, h, w) - m;
          v += d * d;
        }
        v /= C;
        double is = 1.0 / std::sqrt(v + eps);
        mean_map[(int64_t(n) * H + h) * W + w] = m;
        inv_std[(int64_t(n) * H + h) * W + w] = is;
        for (int c = 0; c < C; ++c) y.at4(n, c, h, w) = (x->value.at4(n, c, h, w) - m) * is;
      }
  return make_op(std::move(y), {x},
                 [x, N, C, H, W, inv_std = std::move(inv_std), mean_map = std::move(mean_map)](const Tensor& g) {
                   if (!x->requires_grad) return;
                   Tensor dx(x->value.shape());
                   for (int n = 0; n < N; ++n)
                     for (int h = 0; h < H; ++h)
                       for (int w = 0; w < W; ++w) {
                         double m = mean_map[(int64_t(n) * H + h) * W + w];
                         double is = inv_std[(int64_t(n) * H + h) * W + w];
                         double gm = 0.0, gym = 0.0;
                         for (int c = 0; c < C; ++c) {
                           double yc = (x->value.at4(n, c, h, w) - m) * is;
                           double gc = g.at4(n, c, h, w);
                           gm += gc;
                           gym += gc * yc;
                         }
                         gm /= C;
                         gym /= C;
                         for (int c = 0; c < C; ++c) {
                           double yc = (x->value.at4(n, c, h, w) - m) * is;
                           dx.at4(n, c, h, w) = (g.at4(n, c, h, w) - gm - yc * gym) * is;
                         }
                       }
                   x->accumulate(dx);
                 });
}

Var sum(const Var& x) {
  Tensor y = Tensor::scalar(x->value.sum());
  return make_op(std::move(y), {x}, [x](const Tensor& g) {
    if (!x->requires_grad) return;
    Tensor dx(x->value.shape(), g[0]);
    x->accumulate(dx);
  });
}

Var mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x->value.numel());
  Tensor y = Tensor::scalar(x->value.sum() * inv);
  return make_op(std::move(y), {x}, [x, inv](const Tensor& g) {
    if (!x->requires_grad) return;
    Tensor dx(x->value.shape(), g[0] * inv);
    x->accumulate(dx);
  });
}

Var detach(const Var& x) { return make_constant(x->value); }

Var focal_loss_sum(const Var& logits, const Tensor& cls_onehot, double alpha, double gamma) {
  if (!logits->value.same_shape(cls_onehot))
    throw std::invalid_argument("focal_loss_sum: target shape mismatch");
  const int64_t n = logits->value.numel();
  const double* xp = logits->value.data();
  const double* tp = cls_onehot.data();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double xv = xp[i];
    double log_p = -std::log1p(std::exp(-xv));   // log sigmoid(x)
    double log_q = -xv + log_p;                  // log (1 - sigmoid(x))
    double p = sigmoid(xv);
    if (tp[i] > 0.5)
      total += -alpha * std::pow(1.0 - p, gamma) * log_p;
    else
      total += -(1.0 - alpha) * std::pow(p, gamma) * log_q;
  }
  return make_op(Tensor::scalar(total), {logits}, [logits, alpha, gamma,
                                                   target = cls_onehot](const Tensor& g) {
    if (!logits->requires_grad) return;
    const int64_t n = logits->value.numel();
    Tensor dx(logits->value.shape());
    const double* xp = logits->value.data();
    const double* tp = target.data();
    double* dp = dx.data();
    const double gs = g[0];
    for (int64_t i = 0; i < n; ++i) {
      double p = sigmoid(xp[i]);
      double d;
      if (tp[i] > 0.5) {
        double log_p = -std::log1p(std::exp(-xp[i]));
        d = alpha * std::pow(1.0 - p, gamma) * (gamma * p * log_p - (1.0 - p));
      } else {
        double log_q = -xp[i] - std::log1p(std::exp(-xp[i]));
        d = (1.0 - alpha) * std::pow(p, gamma) * (p - gamma * (1.0 - p) * log_q);
      }
      dp[i] = gs * d;
    }
    logits->accumulate(dx);
  });
}

namespace {

// GIoU of two boxes that share the anchor location: pred corners are
// (-l, -t, r, b) and likewise for the target. Returns 1 - GIoU and the
// gradient w.r.t. the pred (l, t, r, b).
double giou_loss_point(const double pred[4], const double tgt[4], double grad[4]) {
  const double a1 = -pred[0], b1 = -pred[1], a2 = pred[2], b2 = pred[3];
  const double c1 = -tgt[0], d1 = -tgt[1], c2 = tgt[2], d2 = tgt[3];

  const double iw = std::min(a2, c2) - std::max(a1, c1);
  const double ih = std::min(b2, d2) - std::max(b1, d1);
  const bool inter = iw > 0.0 && ih > 0.0;
  const double I = inter ? iw * ih : 0.0;
  const double wp = a2 - a1, hp = b2 - b1;
  const double Ap = wp * hp;
  const double At = (c2 - c1) * (d2 - d1);
  const double U = Ap + At - I;
  const double cw = std::max(a2, c2) - std::min(a1, c1);
  const double ch = std::max(b2, d2) - std::min(b1, d1);
  const double C = cw * ch;

  // loss = 2 - I/U - U/C
  double dI[4] = {0, 0, 0, 0};  // d/d(a1,b1,a2,b2)
  if (inter) {
    if (a1 > c1) dI[0] = -ih;
    if (b1 > d1) dI[1] = -iw;
    if (a2 < c2) dI[2] = ih;
    if (b2 < d2) dI[3] = iw;
  }
  const double dAp[4] = {-hp, -wp, hp, wp};
  double dC[4] = {0, 0, 0, 0};
  if (a1 < c1) dC[0] = -ch;
  if (b1 < d1) dC[1] = -cw;
  if (a2 > c2) dC[2] = ch;
  if (b2 > d2) dC[3] = cw;

  double dcorner[4];
  for (int i = 0; i < 4; ++i) {
    const double dU = dAp[i] - dI[i];
    dcorner[i] = -(dI[i] * U - I * dU) / (U * U) - (dU * C - U * dC[i]) / (C * C);
  }
  // Chain to (l, t, r, b): a1 = -l, b1 = -t.
  grad[0] = -dcorner[0];
  grad[1] = -dcorner[1];
  grad[2] = dcorner[2];
  grad[3] = dcorner[3];
  return 2.0 - I / U - U / C;
}

}  // namespace

Var giou_loss_sum(const Var& reg, const Tensor& reg_target, const Tensor& pos_mask) {
  check4d(reg, "giou_loss_sum");
  if (!reg->value.same_shape(reg_target)) throw std::invalid_argument("giou_loss_sum: target shape mismatch");
  const int N = reg->value.dim(0), h = reg->value.dim(2), w = reg->value.dim(3);
  if (reg->value.dim(1) != 4) throw std::invalid_argument("giou_loss_sum: expected 4 regression channels");
  if (pos_mask.ndim() != 4 || pos_mask.dim(0) != N || pos_mask.dim(2) != h || pos_mask.dim(3) != w)
    throw std::invalid_argument("giou_loss_sum: mask shape mismatch");

  double total = 0.0;
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        if (pos_mask.at4(n, 0, i, j) <= 0.5) continue;
        double pred[4], tgt[4], grad[4];
        for (int k = 0; k < 4; ++k) {
          pred[k] = reg->value.at4(n, k, i, j);
          tgt[k] = reg_target.at4(n, k, i, j);
        }
        total += giou_loss_point(pred, tgt, grad);
      }
  return make_op(Tensor::scalar(total), {reg},
                 [reg, target = reg_target, mask = pos_mask, N, h, w](const Tensor& g) {
                   if (!reg->requires_grad) return;
                   Tensor dx(reg->value.shape());
                   const double gs = g[0];
                   for (int n = 0; n < N; ++n)
                     for (int i = 0; i < h; ++i)
                       for (int j = 0; j < w; ++j) {
                         if (mask.at4(n, 0, i, j) <= 0.5) continue;
                         double pred[4], tgt[4], grad[4];
                         for (int k = 0; k < 4; ++k) {
                           pred[k] = reg->value.at4(n, k, i, j);
                           tgt[k] = target.at4(n, k, i, j);
                         }
                         giou_loss_point(pred, tgt, grad);
                         for (int k = 0; k < 4; ++k) dx.at4(n, k, i, j) = gs * grad[k];
                       }
                   reg->accumulate(dx);
                 });
}

}  // namespace labelenc::ops
