#include "contourrl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace crl {

namespace {

// ---------------------------------------------------------------- gemm ----

// register-tiled microkernel: 4 rows of A against a JB-wide strip of B,
// accumulators live in registers for the whole k block
template <int JB>
void gemm_tile(int ib, int kb, const float* A, int lda, const float* B, int ldb, float* C,
               int ldc) {
  float acc[4][JB] = {};
  for (int k = 0; k < kb; ++k) {
    const float* bk = B + static_cast<size_t>(k) * ldb;
    for (int r = 0; r < ib; ++r) {
      float ar = A[static_cast<size_t>(r) * lda + k];
#pragma omp simd
      for (int j = 0; j < JB; ++j) acc[r][j] += ar * bk[j];
    }
  }
  for (int r = 0; r < ib; ++r) {
    float* cr = C + static_cast<size_t>(r) * ldc;
#pragma omp simd
    for (int j = 0; j < JB; ++j) cr[j] += acc[r][j];
  }
}

void gemm_fast(int M, int N, int K, const float* A, const float* B, float* C, bool accumulate) {
  constexpr int IR = 4, KB = 256;
  if (!accumulate) std::memset(C, 0, sizeof(float) * static_cast<size_t>(M) * N);
  int nib = (M + IR - 1) / IR;
  for (int k0 = 0; k0 < K; k0 += KB) {
    int kb = std::min(KB, K - k0);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < nib; ++t) {
      int i0 = t * IR;
      int ib = std::min(IR, M - i0);
      const float* a = A + static_cast<size_t>(i0) * K + k0;
      const float* b = B + static_cast<size_t>(k0) * N;
      float* c = C + static_cast<size_t>(i0) * N;
      int j = 0;
      while (j < N) {
        int rem = N - j;
        if (rem >= 32) {
          gemm_tile<32>(ib, kb, a, K, b + j, N, c + j, N);
          j += 32;
        } else if (rem >= 16) {
          gemm_tile<16>(ib, kb, a, K, b + j, N, c + j, N);
          j += 16;
        } else if (rem >= 8) {
          gemm_tile<8>(ib, kb, a, K, b + j, N, c + j, N);
          j += 8;
        } else if (rem >= 4) {
          gemm_tile<4>(ib, kb, a, K, b + j, N, c + j, N);
          j += 4;
        } else {
          gemm_tile<1>(ib, kb, a, K, b + j, N, c + j, N);
          j += 1;
        }
      }
    }
  }
}

void gemm_serial(int M, int N, int K, const float* A, const float* B, float* C,
                 bool accumulate) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      float s = accumulate ? C[static_cast<size_t>(i) * N + j] : 0.0f;
      for (int k = 0; k < K; ++k)
        s += A[static_cast<size_t>(i) * K + k] * B[static_cast<size_t>(k) * N + j];
      C[static_cast<size_t>(i) * N + j] = s;
    }
  }
}

// grow-only scratch buffers for the fast conv path
float* scratch(std::vector<float>& buf, size_t n) {
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

// batch chunking keeps the im2col buffer bounded; the chunk size is a pure
// function of the shapes so results never depend on available memory
int conv_chunk_samples(const ConvDims& d) {
  size_t per_sample = static_cast<size_t>(d.out_h()) * d.out_w() * d.patch();
  size_t budget = 16u * 1024 * 1024;  // floats
  int chunk = static_cast<int>(std::max<size_t>(1, budget / std::max<size_t>(1, per_sample)));
  return std::min(chunk, d.batch);
}

// cols: [cb * Ho*Wo, K] for samples [b0, b0+cb)
void im2col(const ConvDims& d, const float* x, int b0, int cb, float* cols) {
  int ho = d.out_h(), wo = d.out_w();
  size_t run = static_cast<size_t>(d.kw) * d.cin;
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < cb; ++bi) {
    int b = b0 + bi;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        float* dst =
            cols + (static_cast<size_t>(bi) * ho * wo + static_cast<size_t>(oy) * wo + ox) *
                       d.patch();
        for (int kr = 0; kr < d.kh; ++kr) {
          const float* src =
              x + ((static_cast<size_t>(b) * d.h + oy + kr) * d.w + ox) * d.cin;
          std::memcpy(dst + static_cast<size_t>(kr) * run, src, run * sizeof(float));
        }
      }
    }
  }
}

// scatter-add of dcols back into dx for samples [b0, b0+cb); dx must be zeroed
void col2im(const ConvDims& d, const float* dcols, int b0, int cb, float* dx) {
  int ho = d.out_h(), wo = d.out_w();
  size_t run = static_cast<size_t>(d.kw) * d.cin;
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < cb; ++bi) {
    int b = b0 + bi;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const float* src =
            dcols + (static_cast<size_t>(bi) * ho * wo + static_cast<size_t>(oy) * wo + ox) *
                        d.patch();
        for (int kr = 0; kr < d.kh; ++kr) {
          float* dst = dx + ((static_cast<size_t>(b) * d.h + oy + kr) * d.w + ox) * d.cin;
          const float* s = src + static_cast<size_t>(kr) * run;
          for (size_t t = 0; t < run; ++t) dst[t] += s[t];
        }
      }
    }
  }
}

}  // namespace

void gemm(Engine eng, int M, int N, int K, const float* A, const float* B, float* C,
          bool accumulate) {
  if (eng == Engine::serial)
    gemm_serial(M, N, K, A, B, C, accumulate);
  else
    gemm_fast(M, N, K, A, B, C, accumulate);
}

void transpose(int M, int N, const float* A, float* At) {
  constexpr int BS = 32;
  for (int i0 = 0; i0 < M; i0 += BS)
    for (int j0 = 0; j0 < N; j0 += BS) {
      int i1 = std::min(i0 + BS, M), j1 = std::min(j0 + BS, N);
      for (int i = i0; i < i1; ++i)
        for (int j = j0; j < j1; ++j)
          At[static_cast<size_t>(j) * M + i] = A[static_cast<size_t>(i) * N + j];
    }
}

void conv2d_forward(Engine eng, const ConvDims& d, const float* x, const float* w,
                    const float* bias, float* y) {
  int ho = d.out_h(), wo = d.out_w(), K = d.patch();
  if (eng == Engine::serial) {
    for (int b = 0; b < d.batch; ++b)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
          for (int co = 0; co < d.cout; ++co) {
            float s = bias ? bias[co] : 0.0f;
            for (int kr = 0; kr < d.kh; ++kr)
              for (int kc = 0; kc < d.kw; ++kc)
                for (int ci = 0; ci < d.cin; ++ci)
                  s += x[((static_cast<size_t>(b) * d.h + oy + kr) * d.w + ox + kc) * d.cin +
                         ci] *
                       w[(static_cast<size_t>(kr) * d.kw + kc) * d.cin * d.cout +
                         static_cast<size_t>(ci) * d.cout + co];
            y[((static_cast<size_t>(b) * ho + oy) * wo + ox) * d.cout + co] = s;
          }
    return;
  }

  static thread_local std::vector<float> cols_buf;
  int chunk = conv_chunk_samples(d);
  float* cols = scratch(cols_buf, static_cast<size_t>(chunk) * ho * wo * K);
  for (int b0 = 0; b0 < d.batch; b0 += chunk) {
    int cb = std::min(chunk, d.batch - b0);
    im2col(d, x, b0, cb, cols);
    size_t rows = static_cast<size_t>(cb) * ho * wo;
    float* yc = y + static_cast<size_t>(b0) * ho * wo * d.cout;
    gemm_fast(static_cast<int>(rows), d.cout, K, cols, w, yc, false);
    if (bias) {
#pragma omp parallel for schedule(static)
      for (long r = 0; r < static_cast<long>(rows); ++r) {
        float* yr = yc + static_cast<size_t>(r) * d.cout;
#pragma omp simd
        for (int co = 0; co < d.cout; ++co) yr[co] += bias[co];
      }
    }
  }
}

void conv2d_backward(Engine eng, const ConvDims& d, const float* x, const float* w,
                     const float* dy, float* dx, float* dw, float* db) {
  int ho = d.out_h(), wo = d.out_w(), K = d.patch();
  if (eng == Engine::serial) {
    if (dx)
      std::memset(dx, 0,
                  sizeof(float) * static_cast<size_t>(d.batch) * d.h * d.w * d.cin);
    for (int b = 0; b < d.batch; ++b)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
          for (int co = 0; co < d.cout; ++co) {
            float g = dy[((static_cast<size_t>(b) * ho + oy) * wo + ox) * d.cout + co];
            db[co] += g;
            for (int kr = 0; kr < d.kh; ++kr)
              for (int kc = 0; kc < d.kw; ++kc)
                for (int ci = 0; ci < d.cin; ++ci) {
                  size_t xi =
                      ((static_cast<size_t>(b) * d.h + oy + kr) * d.w + ox + kc) * d.cin + ci;
                  size_t wi = (static_cast<size_t>(kr) * d.kw + kc) * d.cin * d.cout +
                              static_cast<size_t>(ci) * d.cout + co;
                  dw[wi] += x[xi] * g;
                  if (dx) dx[xi] += w[wi] * g;
                }
          }
    return;
  }

  static thread_local std::vector<float> cols_buf, colst_buf, dcols_buf, wt_buf;
  int chunk = conv_chunk_samples(d);
  size_t max_rows = static_cast<size_t>(chunk) * ho * wo;
  float* cols = scratch(cols_buf, max_rows * K);
  float* colst = scratch(colst_buf, max_rows * K);
  float* dcols = dx ? scratch(dcols_buf, max_rows * K) : nullptr;
  float* wt = nullptr;
  if (dx) {
    wt = scratch(wt_buf, static_cast<size_t>(K) * d.cout);
    transpose(K, d.cout, w, wt);
  }
  if (dx)
    std::memset(dx, 0, sizeof(float) * static_cast<size_t>(d.batch) * d.h * d.w * d.cin);

  for (int b0 = 0; b0 < d.batch; b0 += chunk) {
    int cb = std::min(chunk, d.batch - b0);
    size_t rows = static_cast<size_t>(cb) * ho * wo;
    const float* dyc = dy + static_cast<size_t>(b0) * ho * wo * d.cout;
    im2col(d, x, b0, cb, cols);
    // dw += cols^T * dy
    transpose(static_cast<int>(rows), K, cols, colst);
    gemm_fast(K, d.cout, static_cast<int>(rows), colst, dyc, dw, true);
    // db += column sums of dy
    for (size_t r = 0; r < rows; ++r) {
      const float* row = dyc + r * d.cout;
      for (int co = 0; co < d.cout; ++co) db[co] += row[co];
    }
    if (dx) {
      // dcols = dy * w^T, scattered back into dx
      gemm_fast(static_cast<int>(rows), K, d.cout, dyc, wt, dcols, false);
      col2im(d, dcols, b0, cb, dx);
    }
  }
}

void maxpool2_forward(Engine eng, int B, int h, int w, int c, const float* x, float* y,
                      uint8_t* argmax) {
  int ho = h / 2, wo = w / 2;
  auto run_row = [&](int b) {
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const float* p00 = x + ((static_cast<size_t>(b) * h + 2 * oy) * w + 2 * ox) * c;
        const float* p01 = p00 + c;
        const float* p10 = p00 + static_cast<size_t>(w) * c;
        const float* p11 = p10 + c;
        float* yo = y + ((static_cast<size_t>(b) * ho + oy) * wo + ox) * c;
        uint8_t* am = argmax + ((static_cast<size_t>(b) * ho + oy) * wo + ox) * c;
        for (int ch = 0; ch < c; ++ch) {
          // first maximum in in-window row-major order wins
          float best = p00[ch];
          uint8_t bi = 0;
          if (p01[ch] > best) { best = p01[ch]; bi = 1; }
          if (p10[ch] > best) { best = p10[ch]; bi = 2; }
          if (p11[ch] > best) { best = p11[ch]; bi = 3; }
          yo[ch] = best;
          am[ch] = bi;
        }
      }
  };
  if (eng == Engine::serial) {
    for (int b = 0; b < B; ++b) run_row(b);
  } else {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) run_row(b);
  }
}

void maxpool2_backward(Engine eng, int B, int h, int w, int c, const uint8_t* argmax,
                       const float* dy, float* dx) {
  int ho = h / 2, wo = w / 2;
  std::memset(dx, 0, sizeof(float) * static_cast<size_t>(B) * h * w * c);
  auto run_row = [&](int b) {
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const float* g = dy + ((static_cast<size_t>(b) * ho + oy) * wo + ox) * c;
        const uint8_t* am = argmax + ((static_cast<size_t>(b) * ho + oy) * wo + ox) * c;
        float* x00 = dx + ((static_cast<size_t>(b) * h + 2 * oy) * w + 2 * ox) * c;
        for (int ch = 0; ch < c; ++ch) {
          int dr = am[ch] >> 1, dc = am[ch] & 1;
          x00[(static_cast<size_t>(dr) * w + dc) * c + ch] += g[ch];
        }
      }
  };
  if (eng == Engine::serial) {
    for (int b = 0; b < B; ++b) run_row(b);
  } else {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) run_row(b);
  }
}

void fc_forward(Engine eng, int B, int in, int out, const float* x, const float* w,
                const float* bias, float* y) {
  if (eng == Engine::serial) {
    for (int b = 0; b < B; ++b)
      for (int o = 0; o < out; ++o) {
        float s = bias ? bias[o] : 0.0f;
        for (int i = 0; i < in; ++i)
          s += x[static_cast<size_t>(b) * in + i] * w[static_cast<size_t>(i) * out + o];
        y[static_cast<size_t>(b) * out + o] = s;
      }
    return;
  }
  gemm_fast(B, out, in, x, w, y, false);
  if (bias) {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
      float* yr = y + static_cast<size_t>(b) * out;
#pragma omp simd
      for (int o = 0; o < out; ++o) yr[o] += bias[o];
    }
  }
}

void fc_backward(Engine eng, int B, int in, int out, const float* x, const float* w,
                 const float* dy, float* dx, float* dw, float* db) {
  if (eng == Engine::serial) {
    if (dx) std::memset(dx, 0, sizeof(float) * static_cast<size_t>(B) * in);
    for (int b = 0; b < B; ++b)
      for (int o = 0; o < out; ++o) {
        float g = dy[static_cast<size_t>(b) * out + o];
        db[o] += g;
        for (int i = 0; i < in; ++i) {
          dw[static_cast<size_t>(i) * out + o] += x[static_cast<size_t>(b) * in + i] * g;
          if (dx) dx[static_cast<size_t>(b) * in + i] += w[static_cast<size_t>(i) * out + o] * g;
        }
      }
    return;
  }
  static thread_local std::vector<float> xt_buf, wt_buf;
  float* xt = scratch(xt_buf, static_cast<size_t>(B) * in);
  transpose(B, in, x, xt);
  gemm_fast(in, out, B, xt, dy, dw, true);
  for (int b = 0; b < B; ++b) {
    const float* row = dy + static_cast<size_t>(b) * out;
    for (int o = 0; o < out; ++o) db[o] += row[o];
  }
  if (dx) {
    float* wt = scratch(wt_buf, static_cast<size_t>(in) * out);
    transpose(in, out, w, wt);
    gemm_fast(B, in, out, dy, wt, dx, false);
  }
}

void relu_forward(const float* x, float* y, size_t n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(n); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* x, const float* dy, float* dx, size_t n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(n); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void softmax_forward(int B, int n, const float* x, float* y) {
  for (int b = 0; b < B; ++b) {
    const float* xr = x + static_cast<size_t>(b) * n;
    float* yr = y + static_cast<size_t>(b) * n;
    float m = xr[0];
    for (int i = 1; i < n; ++i) m = std::max(m, xr[i]);
    float sum = 0.0f;
    for (int i = 0; i < n; ++i) {
      yr[i] = std::exp(xr[i] - m);
      sum += yr[i];
    }
    float inv = 1.0f / sum;
    for (int i = 0; i < n; ++i) yr[i] *= inv;
  }
}

void softmax_backward(int B, int n, const float* p, const float* dy, float* dx) {
  for (int b = 0; b < B; ++b) {
    const float* pr = p + static_cast<size_t>(b) * n;
    const float* gr = dy + static_cast<size_t>(b) * n;
    float* dr = dx + static_cast<size_t>(b) * n;
    float dot = 0.0f;
    for (int i = 0; i < n; ++i) dot += gr[i] * pr[i];
    for (int i = 0; i < n; ++i) dr[i] = pr[i] * (gr[i] - dot);
  }
}

}  // namespace crl
