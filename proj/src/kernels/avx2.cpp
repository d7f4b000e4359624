// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma; only reachable through
// the dispatch table after a runtime CPU check.

#include "apirec/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cmath>

namespace apirec::kern {
namespace {

inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

float dot_avx2(const float* a, const float* b, int n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  int i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float acc = hsum8(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(float* y, float alpha, const float* x, int n) {
  __m256 av = _mm256_set1_ps(alpha);
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 yv = _mm256_loadu_ps(y + i);
    yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
    _mm256_storeu_ps(y + i, yv);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add_inplace_avx2(float* a, const float* b, int n) {
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(a + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) a[i] += b[i];
}

void matmul_nt_avx2(float* out, const float* a, const float* b, const float* bias, int m, int n,
                    int k) {
  for (int i = 0; i < m; ++i) {
    const float* ai = a + static_cast<size_t>(i) * k;
    float* oi = out + static_cast<size_t>(i) * n;
    int j = 0;
    // Four output columns at a time share the streamed row of a.
    for (; j + 4 <= n; j += 4) {
      const float* b0 = b + static_cast<size_t>(j) * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      __m256 c0 = _mm256_setzero_ps(), c1 = _mm256_setzero_ps();
      __m256 c2 = _mm256_setzero_ps(), c3 = _mm256_setzero_ps();
      int l = 0;
      for (; l + 8 <= k; l += 8) {
        __m256 av = _mm256_loadu_ps(ai + l);
        c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + l), c0);
        c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + l), c1);
        c2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + l), c2);
        c3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + l), c3);
      }
      float s0 = hsum8(c0), s1 = hsum8(c1), s2 = hsum8(c2), s3 = hsum8(c3);
      for (; l < k; ++l) {
        float av = ai[l];
        s0 += av * b0[l];
        s1 += av * b1[l];
        s2 += av * b2[l];
        s3 += av * b3[l];
      }
      if (bias) {
        s0 += bias[j];
        s1 += bias[j + 1];
        s2 += bias[j + 2];
        s3 += bias[j + 3];
      }
      oi[j] = s0;
      oi[j + 1] = s1;
      oi[j + 2] = s2;
      oi[j + 3] = s3;
    }
    for (; j < n; ++j) {
      float s = dot_avx2(ai, b + static_cast<size_t>(j) * k, k);
      oi[j] = bias ? s + bias[j] : s;
    }
  }
}

void matmul_nn_avx2(float* out, const float* a, const float* b, int m, int n, int k,
                    bool accumulate) {
  for (int i = 0; i < m; ++i) {
    float* oi = out + static_cast<size_t>(i) * n;
    if (!accumulate) {
      int j = 0;
      __m256 z = _mm256_setzero_ps();
      for (; j + 8 <= n; j += 8) _mm256_storeu_ps(oi + j, z);
      for (; j < n; ++j) oi[j] = 0.f;
    }
    const float* ai = a + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      float av = ai[l];
      if (av == 0.f) continue;
      axpy_avx2(oi, av, b + static_cast<size_t>(l) * n, n);
    }
  }
}

void matmul_tn_acc_avx2(float* out, const float* a, const float* b, int rows, int m, int n) {
  for (int l = 0; l < rows; ++l) {
    const float* al = a + static_cast<size_t>(l) * m;
    const float* bl = b + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      float av = al[i];
      if (av == 0.f) continue;
      axpy_avx2(out + static_cast<size_t>(i) * n, av, bl, n);
    }
  }
}

void bias_grad_acc_avx2(float* db, const float* dout, int m, int n) {
  for (int i = 0; i < m; ++i) add_inplace_avx2(db, dout + static_cast<size_t>(i) * n, n);
}

void layernorm_fwd_avx2(float* out, float* mean, float* rstd, const float* x, const float* w,
                        const float* b, int t, int c) {
  const float eps = 1e-5f;
  for (int i = 0; i < t; ++i) {
    const float* xi = x + static_cast<size_t>(i) * c;
    float* oi = out + static_cast<size_t>(i) * c;
    __m256 sum = _mm256_setzero_ps();
    int j = 0;
    for (; j + 8 <= c; j += 8) sum = _mm256_add_ps(sum, _mm256_loadu_ps(xi + j));
    float mu = hsum8(sum);
    for (; j < c; ++j) mu += xi[j];
    mu /= static_cast<float>(c);

    __m256 muv = _mm256_set1_ps(mu);
    __m256 varv = _mm256_setzero_ps();
    j = 0;
    for (; j + 8 <= c; j += 8) {
      __m256 d = _mm256_sub_ps(_mm256_loadu_ps(xi + j), muv);
      varv = _mm256_fmadd_ps(d, d, varv);
    }
    float var = hsum8(varv);
    for (; j < c; ++j) {
      float d = xi[j] - mu;
      var += d * d;
    }
    var /= static_cast<float>(c);
    float rs = 1.0f / std::sqrt(var + eps);

    __m256 rsv = _mm256_set1_ps(rs);
    j = 0;
    for (; j + 8 <= c; j += 8) {
      __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xi + j), muv), rsv);
      __m256 o = _mm256_fmadd_ps(xhat, _mm256_loadu_ps(w + j), _mm256_loadu_ps(b + j));
      _mm256_storeu_ps(oi + j, o);
    }
    for (; j < c; ++j) oi[j] = (xi[j] - mu) * rs * w[j] + b[j];
    mean[i] = mu;
    rstd[i] = rs;
  }
}

void layernorm_bwd_avx2(float* dx, float* dw, float* db, const float* dout, const float* x,
                        const float* mean, const float* rstd, const float* w, int t, int c) {
  for (int i = 0; i < t; ++i) {
    const float* doi = dout + static_cast<size_t>(i) * c;
    const float* xi = x + static_cast<size_t>(i) * c;
    float* dxi = dx + static_cast<size_t>(i) * c;
    float mu = mean[i], rs = rstd[i];
    __m256 muv = _mm256_set1_ps(mu), rsv = _mm256_set1_ps(rs);
    __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
    int j = 0;
    for (; j + 8 <= c; j += 8) {
      __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xi + j), muv), rsv);
      __m256 dnorm = _mm256_mul_ps(_mm256_loadu_ps(doi + j), _mm256_loadu_ps(w + j));
      acc0 = _mm256_add_ps(acc0, dnorm);
      acc1 = _mm256_fmadd_ps(dnorm, xhat, acc1);
    }
    float dnorm_mean = hsum8(acc0), dnorm_xhat_mean = hsum8(acc1);
    for (; j < c; ++j) {
      float xhat = (xi[j] - mu) * rs;
      float dnorm = doi[j] * w[j];
      dnorm_mean += dnorm;
      dnorm_xhat_mean += dnorm * xhat;
    }
    dnorm_mean /= static_cast<float>(c);
    dnorm_xhat_mean /= static_cast<float>(c);

    __m256 dmv = _mm256_set1_ps(dnorm_mean), dxmv = _mm256_set1_ps(dnorm_xhat_mean);
    j = 0;
    for (; j + 8 <= c; j += 8) {
      __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xi + j), muv), rsv);
      __m256 dov = _mm256_loadu_ps(doi + j);
      __m256 dnorm = _mm256_mul_ps(dov, _mm256_loadu_ps(w + j));
      __m256 dxv = _mm256_sub_ps(_mm256_sub_ps(dnorm, dmv), _mm256_mul_ps(xhat, dxmv));
      _mm256_storeu_ps(dxi + j, _mm256_mul_ps(dxv, rsv));
      _mm256_storeu_ps(dw + j, _mm256_fmadd_ps(dov, xhat, _mm256_loadu_ps(dw + j)));
      _mm256_storeu_ps(db + j, _mm256_add_ps(_mm256_loadu_ps(db + j), dov));
    }
    for (; j < c; ++j) {
      float xhat = (xi[j] - mu) * rs;
      float dnorm = doi[j] * w[j];
      dxi[j] = (dnorm - dnorm_mean - xhat * dnorm_xhat_mean) * rs;
      dw[j] += doi[j] * xhat;
      db[j] += doi[j];
    }
  }
}

void adamw_step_avx2(float* p, const float* g, float* m, float* v, int n, float lr, float beta1,
                     float beta2, float eps, float weight_decay, float bias_c1, float bias_c2) {
  __m256 b1 = _mm256_set1_ps(beta1), ob1 = _mm256_set1_ps(1.f - beta1);
  __m256 b2 = _mm256_set1_ps(beta2), ob2 = _mm256_set1_ps(1.f - beta2);
  __m256 ic1 = _mm256_set1_ps(1.f / bias_c1), ic2 = _mm256_set1_ps(1.f / bias_c2);
  __m256 lrv = _mm256_set1_ps(lr), epsv = _mm256_set1_ps(eps), wdv = _mm256_set1_ps(weight_decay);
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_fmadd_ps(ob1, gv, _mm256_mul_ps(b1, _mm256_loadu_ps(m + i)));
    __m256 vv = _mm256_fmadd_ps(ob2, _mm256_mul_ps(gv, gv), _mm256_mul_ps(b2, _mm256_loadu_ps(v + i)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    __m256 mhat = _mm256_mul_ps(mv, ic1);
    __m256 vhat = _mm256_mul_ps(vv, ic2);
    __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
    __m256 pv = _mm256_loadu_ps(p + i);
    __m256 upd = _mm256_fmadd_ps(wdv, pv, _mm256_div_ps(mhat, denom));
    _mm256_storeu_ps(p + i, _mm256_fnmadd_ps(lrv, upd, pv));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.f - beta2) * g[i] * g[i];
    float mhat = m[i] / bias_c1;
    float vhat = v[i] / bias_c2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

// exp/tanh heavy ops keep the scalar form; they are a rounding error of the
// total FLOPs next to the matmuls.
void gelu_fwd_wrap(float* out, const float* x, int n) { ref::gelu_fwd(out, x, n); }
void gelu_bwd_wrap(float* dx, const float* x, const float* dout, int n) {
  ref::gelu_bwd(dx, x, dout, n);
}
void softmax_fwd_wrap(float* out, const float* x, int n) { ref::softmax_fwd(out, x, n); }

void softmax_bwd_avx2(float* dx, const float* p, const float* dp, int n) {
  float d = dot_avx2(p, dp, n);
  __m256 dv = _mm256_set1_ps(d);
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 pv = _mm256_loadu_ps(p + i);
    __m256 dpv = _mm256_loadu_ps(dp + i);
    _mm256_storeu_ps(dx + i, _mm256_mul_ps(pv, _mm256_sub_ps(dpv, dv)));
  }
  for (; i < n; ++i) dx[i] = p[i] * (dp[i] - d);
}

float logsumexp_wrap(const float* x, int n) { return ref::logsumexp(x, n); }

const Backend kAvx2Backend = {
    "avx2",
    matmul_nt_avx2,
    matmul_nn_avx2,
    matmul_tn_acc_avx2,
    bias_grad_acc_avx2,
    layernorm_fwd_avx2,
    layernorm_bwd_avx2,
    gelu_fwd_wrap,
    gelu_bwd_wrap,
    softmax_fwd_wrap,
    softmax_bwd_avx2,
    add_inplace_avx2,
    axpy_avx2,
    dot_avx2,
    logsumexp_wrap,
    adamw_step_avx2,
};

}  // namespace

const Backend* avx2_backend_impl() { return &kAvx2Backend; }

}  // namespace apirec::kern

#else

namespace apirec::kern {
const Backend* avx2_backend_impl() { return nullptr; }
}  // namespace apirec::kern

#endif
