#include <cstdlib>
#include <cstring>

#include "apirec/kernels.hpp"

namespace apirec::kern {

const Backend* avx2_backend_impl();  // defined in avx2.cpp

namespace {

void matmul_nt_s(float* out, const float* a, const float* b, const float* bias, int m, int n,
                 int k) {
  ref::matmul_nt(out, a, b, bias, m, n, k);
}
void matmul_nn_s(float* out, const float* a, const float* b, int m, int n, int k, bool acc) {
  ref::matmul_nn(out, a, b, m, n, k, acc);
}
void matmul_tn_acc_s(float* out, const float* a, const float* b, int rows, int m, int n) {
  ref::matmul_tn_acc(out, a, b, rows, m, n);
}
void bias_grad_acc_s(float* db, const float* dout, int m, int n) {
  ref::bias_grad_acc(db, dout, m, n);
}
void layernorm_fwd_s(float* out, float* mean, float* rstd, const float* x, const float* w,
                     const float* b, int t, int c) {
  ref::layernorm_fwd(out, mean, rstd, x, w, b, t, c);
}
void layernorm_bwd_s(float* dx, float* dw, float* db, const float* dout, const float* x,
                     const float* mean, const float* rstd, const float* w, int t, int c) {
  ref::layernorm_bwd(dx, dw, db, dout, x, mean, rstd, w, t, c);
}
void gelu_fwd_s(float* out, const float* x, int n) { ref::gelu_fwd(out, x, n); }
void gelu_bwd_s(float* dx, const float* x, const float* dout, int n) {
  ref::gelu_bwd(dx, x, dout, n);
}
void softmax_fwd_s(float* out, const float* x, int n) { ref::softmax_fwd(out, x, n); }
void softmax_bwd_s(float* dx, const float* p, const float* dp, int n) {
  ref::softmax_bwd(dx, p, dp, n);
}
void add_inplace_s(float* a, const float* b, int n) { ref::add_inplace(a, b, n); }
void axpy_s(float* y, float alpha, const float* x, int n) { ref::axpy(y, alpha, x, n); }
float dot_s(const float* a, const float* b, int n) { return ref::dot(a, b, n); }
float logsumexp_s(const float* x, int n) { return ref::logsumexp(x, n); }
void adamw_step_s(float* p, const float* g, float* m, float* v, int n, float lr, float b1,
                  float b2, float eps, float wd, float c1, float c2) {
  ref::adamw_step(p, g, m, v, n, lr, b1, b2, eps, wd, c1, c2);
}

const Backend kScalarBackend = {
    "scalar",       matmul_nt_s, matmul_nn_s,   matmul_tn_acc_s, bias_grad_acc_s,
    layernorm_fwd_s, layernorm_bwd_s, gelu_fwd_s, gelu_bwd_s,    softmax_fwd_s,
    softmax_bwd_s,  add_inplace_s, axpy_s,      dot_s,           logsumexp_s,
    adamw_step_s,
};

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Backend* select_backend() {
  const Backend* avx2 = avx2_backend();
  const char* force = std::getenv("APIREC_KERNELS");
  if (force) {
    if (std::strcmp(force, "scalar") == 0) return &kScalarBackend;
    if (std::strcmp(force, "avx2") == 0 && avx2) return avx2;
  }
  return avx2 ? avx2 : &kScalarBackend;
}

}  // namespace

const Backend& scalar_backend() { return kScalarBackend; }

const Backend* avx2_backend() { return cpu_has_avx2_fma() ? avx2_backend_impl() : nullptr; }

const Backend& active() {
  static const Backend* chosen = select_backend();
  return *chosen;
}

}  // namespace apirec::kern
