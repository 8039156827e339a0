#pragma once

#include <cstdint>
#include <vector>

namespace crl {

// Two implementations of every compute kernel: `serial` is the plain-loop
// reference used by tests, `fast` is the register-tiled, OpenMP-parallel
// path used everywhere else.  Both are deterministic: every output element
// is accumulated in a fixed sequential k order, so results do not depend on
// thread count or on how callers chunk their batches.
enum class Engine { serial, fast };

// C[M,N] = (accumulate ? C : 0) + A[M,K] * B[K,N], all row-major
void gemm(Engine eng, int M, int N, int K, const float* A, const float* B, float* C,
          bool accumulate);

// At[N,M] = transpose of A[M,N]
void transpose(int M, int N, const float* A, float* At);

struct ConvDims {
  int batch = 1;
  int h = 0, w = 0, cin = 0;  // input NHWC
  int kh = 0, kw = 0, cout = 0;
  int out_h() const { return h - kh + 1; }  // valid padding, stride 1
  int out_w() const { return w - kw + 1; }
  int patch() const { return kh * kw * cin; }  // im2col K
};

// x: [B,H,W,Cin], w: [kh*kw*Cin, Cout], bias: [Cout], y: [B,Ho,Wo,Cout]
void conv2d_forward(Engine eng, const ConvDims& d, const float* x, const float* w,
                    const float* bias, float* y);

// gradients accumulate into dw/db; dx is overwritten (pass nullptr to skip)
void conv2d_backward(Engine eng, const ConvDims& d, const float* x, const float* w,
                     const float* dy, float* dx, float* dw, float* db);

// 2x2 max pooling, stride 2, trailing row/col dropped when odd; argmax is
// the in-window row-major index of the first maximum, used by backward
void maxpool2_forward(Engine eng, int B, int h, int w, int c, const float* x, float* y,
                      uint8_t* argmax);
void maxpool2_backward(Engine eng, int B, int h, int w, int c, const uint8_t* argmax,
                       const float* dy, float* dx);

// x: [B,In], w: [In,Out], bias: [Out], y: [B,Out]
void fc_forward(Engine eng, int B, int in, int out, const float* x, const float* w,
                const float* bias, float* y);
void fc_backward(Engine eng, int B, int in, int out, const float* x, const float* w,
                 const float* dy, float* dx, float* dw, float* db);

// elementwise max(0, x); backward keeps gradients where the stored input was
// strictly positive
void relu_forward(const float* x, float* y, size_t n);
void relu_backward(const float* x, const float* dy, float* dx, size_t n);

// row-wise softmax with the max subtracted before exponentiation
void softmax_forward(int B, int n, const float* x, float* y);
// dx_i = p_i * (dy_i - sum_j dy_j p_j), needs the forward output p
void softmax_backward(int B, int n, const float* p, const float* dy, float* dx);

}  // namespace crl
