#pragma once

#include <cmath>
#include <cstddef>
#include <type_traits>

// Data-parallel inner loops of the training stack. Every operation has a
// templated scalar reference implementation (kern::ref); the float entry
// points dispatch at runtime to an AVX2+FMA variant when the CPU supports it.
// The double instantiation always runs the scalar reference and serves as the
// high-precision path for gradient checking.

namespace apirec::kern {

struct Backend {
  const char* name;
  // out[m,n] = a[m,k] * b[n,k]^T (+ bias[n]); bias may be null.
  void (*matmul_nt)(float* out, const float* a, const float* b, const float* bias, int m, int n,
                    int k);
  // out[m,n] (+)= a[m,k] * b[k,n]
  void (*matmul_nn)(float* out, const float* a, const float* b, int m, int n, int k,
                    bool accumulate);
  // out[m,n] += a[rows,m]^T * b[rows,n]
  void (*matmul_tn_acc)(float* out, const float* a, const float* b, int rows, int m, int n);
  // db[n] += column sums of dout[m,n]
  void (*bias_grad_acc)(float* db, const float* dout, int m, int n);
  void (*layernorm_fwd)(float* out, float* mean, float* rstd, const float* x, const float* w,
                        const float* b, int t, int c);
  // dx is written, dw/db accumulated.
  void (*layernorm_bwd)(float* dx, float* dw, float* db, const float* dout, const float* x,
                        const float* mean, const float* rstd, const float* w, int t, int c);
  void (*gelu_fwd)(float* out, const float* x, int n);
  void (*gelu_bwd)(float* dx, const float* x, const float* dout, int n);  // dx +=
  void (*softmax_fwd)(float* out, const float* x, int n);
  // dx[i] = p[i] * (dp[i] - sum_j p[j] dp[j])
  void (*softmax_bwd)(float* dx, const float* p, const float* dp, int n);
  void (*add_inplace)(float* a, const float* b, int n);
  void (*axpy)(float* y, float alpha, const float* x, int n);
  float (*dot)(const float* a, const float* b, int n);
  float (*logsumexp)(const float* x, int n);
  void (*adamw_step)(float* p, const float* g, float* m, float* v, int n, float lr, float beta1,
                     float beta2, float eps, float weight_decay, float bias_c1, float bias_c2);
};

const Backend& scalar_backend();
const Backend* avx2_backend();  // null when unavailable on this CPU
// Selected once per process: AVX2 when supported, overridable with
// APIREC_KERNELS=scalar|avx2.
const Backend& active();

namespace ref {

template <typename T>
void matmul_nt(T* out, const T* a, const T* b, const T* bias, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* oi = out + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<size_t>(j) * k;
      T acc = bias ? bias[j] : T(0);
      for (int l = 0; l < k; ++l) acc += ai[l] * bj[l];
      oi[j] = acc;
    }
  }
}

template <typename T>
void matmul_nn(T* out, const T* a, const T* b, int m, int n, int k, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    T* oi = out + static_cast<size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) oi[j] = T(0);
    const T* ai = a + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      T av = ai[l];
      if (av == T(0)) continue;
      const T* bl = b + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) oi[j] += av * bl[j];
    }
  }
}

template <typename T>
void matmul_tn_acc(T* out, const T* a, const T* b, int rows, int m, int n) {
  for (int l = 0; l < rows; ++l) {
    const T* al = a + static_cast<size_t>(l) * m;
    const T* bl = b + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      T av = al[i];
      if (av == T(0)) continue;
      T* oi = out + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) oi[j] += av * bl[j];
    }
  }
}

template <typename T>
void bias_grad_acc(T* db, const T* dout, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const T* row = dout + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) db[j] += row[j];
  }
}

template <typename T>
void layernorm_fwd(T* out, T* mean, T* rstd, const T* x, const T* w, const T* b, int t, int c) {
  const T eps = T(1e-5);
  for (int i = 0; i < t; ++i) {
    const T* xi = x + static_cast<size_t>(i) * c;
    T* oi = out + static_cast<size_t>(i) * c;
    T mu = T(0);
    for (int j = 0; j < c; ++j) mu += xi[j];
    mu /= T(c);
    T var = T(0);
    for (int j = 0; j < c; ++j) {
      T d = xi[j] - mu;
      var += d * d;
    }
    var /= T(c);
    T rs = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) oi[j] = (xi[j] - mu) * rs * w[j] + b[j];
    mean[i] = mu;
    rstd[i] = rs;
  }
}

template <typename T>
void layernorm_bwd(T* dx, T* dw, T* db, const T* dout, const T* x, const T* mean, const T* rstd,
                   const T* w, int t, int c) {
  for (int i = 0; i < t; ++i) {
    const T* doi = dout + static_cast<size_t>(i) * c;
    const T* xi = x + static_cast<size_t>(i) * c;
    T* dxi = dx + static_cast<size_t>(i) * c;
    T mu = mean[i], rs = rstd[i];
    T dnorm_mean = T(0), dnorm_xhat_mean = T(0);
    for (int j = 0; j < c; ++j) {
      T xhat = (xi[j] - mu) * rs;
      T dnorm = doi[j] * w[j];
      dnorm_mean += dnorm;
      dnorm_xhat_mean += dnorm * xhat;
    }
    dnorm_mean /= T(c);
    dnorm_xhat_mean /= T(c);
    for (int j = 0; j < c; ++j) {
      T xhat = (xi[j] - mu) * rs;
      T dnorm = doi[j] * w[j];
      dxi[j] = (dnorm - dnorm_mean - xhat * dnorm_xhat_mean) * rs;
      dw[j] += doi[j] * xhat;
      db[j] += doi[j];
    }
  }
}

// tanh-approximation GELU, matching GPT-2.
template <typename T>
void gelu_fwd(T* out, const T* x, int n) {
  const T s = std::sqrt(T(2) / T(M_PI));
  for (int i = 0; i < n; ++i) {
    T xi = x[i];
    T cube = T(0.044715) * xi * xi * xi;
    out[i] = T(0.5) * xi * (T(1) + std::tanh(s * (xi + cube)));
  }
}

template <typename T>
void gelu_bwd(T* dx, const T* x, const T* dout, int n) {
  const T s = std::sqrt(T(2) / T(M_PI));
  for (int i = 0; i < n; ++i) {
    T xi = x[i];
    T cube = T(0.044715) * xi * xi * xi;
    T u = s * (xi + cube);
    T th = std::tanh(u);
    T sech2 = T(1) - th * th;
    T du = s * (T(1) + T(3) * T(0.044715) * xi * xi);
    T grad = T(0.5) * (T(1) + th) + T(0.5) * xi * sech2 * du;
    dx[i] += grad * dout[i];
  }
}

template <typename T>
void softmax_fwd(T* out, const T* x, int n) {
  T mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  T sum = T(0);
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  T inv = T(1) / sum;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}

template <typename T>
void softmax_bwd(T* dx, const T* p, const T* dp, int n) {
  T dot = T(0);
  for (int i = 0; i < n; ++i) dot += p[i] * dp[i];
  for (int i = 0; i < n; ++i) dx[i] = p[i] * (dp[i] - dot);
}

template <typename T>
void add_inplace(T* a, const T* b, int n) {
  for (int i = 0; i < n; ++i) a[i] += b[i];
}

template <typename T>
void axpy(T* y, T alpha, const T* x, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot(const T* a, const T* b, int n) {
  T acc = T(0);
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T logsumexp(const T* x, int n) {
  T mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  T sum = T(0);
  for (int i = 0; i < n; ++i) sum += std::exp(x[i] - mx);
  return mx + std::log(sum);
}

template <typename T>
void adamw_step(T* p, const T* g, T* m, T* v, int n, T lr, T beta1, T beta2, T eps,
                T weight_decay, T bias_c1, T bias_c2) {
  for (int i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    T mhat = m[i] / bias_c1;
    T vhat = v[i] / bias_c2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

}  // namespace ref

// Generic shims used by the templated model code: float goes through the
// dispatched backend, every other scalar type through the reference kernels.

template <typename T>
inline void matmul_nt(T* out, const T* a, const T* b, const T* bias, int m, int n, int k) {
  if constexpr (std::is_same_v<T, float>)
    active().matmul_nt(out, a, b, bias, m, n, k);
  else
    ref::matmul_nt(out, a, b, bias, m, n, k);
}

template <typename T>
inline void matmul_nn(T* out, const T* a, const T* b, int m, int n, int k, bool accumulate) {
  if constexpr (std::is_same_v<T, float>)
    active().matmul_nn(out, a, b, m, n, k, accumulate);
  else
    ref::matmul_nn(out, a, b, m, n, k, accumulate);
}

template <typename T>
inline void matmul_tn_acc(T* out, const T* a, const T* b, int rows, int m, int n) {
  if constexpr (std::is_same_v<T, float>)
    active().matmul_tn_acc(out, a, b, rows, m, n);
  else
    ref::matmul_tn_acc(out, a, b, rows, m, n);
}

template <typename T>
inline void bias_grad_acc(T* db, const T* dout, int m, int n) {
  if constexpr (std::is_same_v<T, float>)
    active().bias_grad_acc(db, dout, m, n);
  else
    ref::bias_grad_acc(db, dout, m, n);
}

template <typename T>
inline void layernorm_fwd(T* out, T* mean, T* rstd, const T* x, const T* w, const T* b, int t,
                          int c) {
  if constexpr (std::is_same_v<T, float>)
    active().layernorm_fwd(out, mean, rstd, x, w, b, t, c);
  else
    ref::layernorm_fwd(out, mean, rstd, x, w, b, t, c);
}

template <typename T>
inline void layernorm_bwd(T* dx, T* dw, T* db, const T* dout, const T* x, const T* mean,
                          const T* rstd, const T* w, int t, int c) {
  if constexpr (std::is_same_v<T, float>)
    active().layernorm_bwd(dx, dw, db, dout, x, mean, rstd, w, t, c);
  else
    ref::layernorm_bwd(dx, dw, db, dout, x, mean, rstd, w, t, c);
}

template <typename T>
inline void gelu_fwd(T* out, const T* x, int n) {
  if constexpr (std::is_same_v<T, float>)
    active().gelu_fwd(out, x, n);
  else
    ref::gelu_fwd(out, x, n);
}

template <typename T>
inline void gelu_bwd(T* dx, const T* x, const T* dout, int n) {
  if constexpr (std::is_same_v<T, float>)
    active().gelu_bwd(dx, x, dout, n);
  else
    ref::gelu_bwd(dx, x, dout, n);
}

template <typename T>
inline void softmax_fwd(T* out, const T* x, int n) {
  if constexpr (std::is_same_v<T, float>)
    active().softmax_fwd(out, x, n);
  else
    ref::softmax_fwd(out, x, n);
}

template <typename T>
inline void softmax_bwd(T* dx, const T* p, const T* dp, int n) {
  if constexpr (std::is_same_v<T, float>)
    active().softmax_bwd(dx, p, dp, n);
  else
    ref::softmax_bwd(dx, p, dp, n);
}

template <typename T>
inline void add_inplace(T* a, const T* b, int n) {
  if constexpr (std::is_same_v<T, float>)
    active().add_inplace(a, b, n);
  else
    ref::add_inplace(a, b, n);
}

template <typename T>
inline void axpy(T* y, T alpha, const T* x, int n) {
  if constexpr (std::is_same_v<T, float>)
    active().axpy(y, alpha, x, n);
  else
    ref::axpy(y, alpha, x, n);
}

template <typename T>
inline T dot(const T* a, const T* b, int n) {
  if constexpr (std::is_same_v<T, float>)
    return active().dot(a, b, n);
  else
    return ref::dot(a, b, n);
}

template <typename T>
inline T logsumexp(const T* x, int n) {
  if constexpr (std::is_same_v<T, float>)
    return active().logsumexp(x, n);
  else
    return ref::logsumexp(x, n);
}

template <typename T>
inline void adamw_step(T* p, const T* g, T* m, T* v, int n, T lr, T beta1, T beta2, T eps,
                       T weight_decay, T bias_c1, T bias_c2) {
  if constexpr (std::is_same_v<T, float>)
    active().adamw_step(p, g, m, v, n, lr, beta1, beta2, eps, weight_decay, bias_c1, bias_c2);
  else
    ref::adamw_step(p, g, m, v, n, lr, beta1, beta2, eps, weight_decay, bias_c1, bias_c2);
}

}  // namespace apirec::kern
