#pragma once

#include <cstdint>

namespace geos::kernels {

// All kernels are deterministic at any OpenMP thread count: each output
// element is produced by exactly one thread with a fixed inner summation
// order, and the serial reference twins in kernels::ref share the same
// per-element routines, so omp and ref results are bitwise identical.

struct ConvShape {
    int n = 0;       // batch
    int ic = 0;      // input channels
    int ih = 0, iw = 0;
    int oc = 0;      // output channels
    int kh = 0, kw = 0;
    int stride = 1;
    int pad = 0;

    int oh() const { return (ih + 2 * pad - kh) / stride + 1; }
    int ow() const { return (iw + 2 * pad - kw) / stride + 1; }
};

// y[n,oc,oh,ow]; w[oc,ic,kh,kw]; b[oc] may be null.
void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvShape& s);
// dx[n,ic,ih,iw] overwritten.
void conv2d_backward_data(const double* dy, const double* w, double* dx, const ConvShape& s);
// dw/db accumulated; db may be null.
void conv2d_backward_weights(const double* x, const double* dy, double* dw, double* db,
                             const ConvShape& s);

// y[n,out] = x[n,in] * w[out,in]^T + b[out]; b may be null.
void linear_forward(const double* x, const double* w, const double* b, double* y,
                    int n, int in, int out);
void linear_backward_data(const double* dy, const double* w, double* dx, int n, int in, int out);
// dw/db accumulated; db may be null.
void linear_backward_params(const double* x, const double* dy, double* dw, double* db,
                            int n, int in, int out);

void relu_forward(const double* x, double* y, int64_t n);
// dx overwritten with dy where x > 0, else 0.
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);

void add(const double* a, const double* b, double* y, int64_t n);

// Global average pool: x[n,c,h*w] -> y[n,c].
void gap_forward(const double* x, double* y, int n, int c, int hw);
void gap_backward(const double* dy, double* dx, int n, int c, int hw);

struct PoolShape {
    int n = 0, c = 0, ih = 0, iw = 0;
    int k = 2, stride = 2, pad = 0;
    int oh() const { return (ih + 2 * pad - k) / stride + 1; }
    int ow() const { return (iw + 2 * pad - k) / stride + 1; }
};

// argmax holds the flat (ih*iw) index of the selected input per output element.
void maxpool2d_forward(const double* x, double* y, int32_t* argmax, const PoolShape& s);
void maxpool2d_backward(const double* dy, const int32_t* argmax, double* dx, const PoolShape& s);

// BatchNorm over (n, hw) per channel, layout x[n,c,hw].
// Train: batch statistics; running stats updated in place (torch convention:
// biased variance normalizes, unbiased updates running_var).
void batchnorm_forward_train(const double* x, const double* gamma, const double* beta,
                             double* running_mean, double* running_var, double momentum,
                             double eps, double* y, double* save_mean, double* save_invstd,
                             int n, int c, int hw);
void batchnorm_forward_eval(const double* x, const double* gamma, const double* beta,
                            const double* running_mean, const double* running_var, double eps,
                            double* y, int n, int c, int hw);
// Backward for a train-mode forward (uses saved batch stats). dgamma/dbeta accumulated.
void batchnorm_backward_train(const double* x, const double* dy, const double* gamma,
                              const double* save_mean, const double* save_invstd,
                              double* dx, double* dgamma, double* dbeta, int n, int c, int hw);
// Backward for an eval-mode forward (running stats are constants).
void batchnorm_backward_eval(const double* x, const double* dy, const double* gamma,
                             const double* running_mean, const double* running_var, double eps,
                             double* dx, double* dgamma, double* dbeta, int n, int c, int hw);

namespace ref {
void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvShape& s);
void conv2d_backward_data(const double* dy, const double* w, double* dx, const ConvShape& s);
void conv2d_backward_weights(const double* x, const double* dy, double* dw, double* db,
                             const ConvShape& s);
void linear_forward(const double* x, const double* w, const double* b, double* y,
                    int n, int in, int out);
void linear_backward_data(const double* dy, const double* w, double* dx, int n, int in, int out);
void linear_backward_params(const double* x, const double* dy, double* dw, double* db,
                            int n, int in, int out);
void relu_forward(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);
void add(const double* a, const double* b, double* y, int64_t n);
void gap_forward(const double* x, double* y, int n, int c, int hw);
void gap_backward(const double* dy, double* dx, int n, int c, int hw);
void maxpool2d_forward(const double* x, double* y, int32_t* argmax, const PoolShape& s);
void maxpool2d_backward(const double* dy, const int32_t* argmax, double* dx, const PoolShape& s);
void batchnorm_forward_train(const double* x, const double* gamma, const double* beta,
                             double* running_mean, double* running_var, double momentum,
                             double eps, double* y, double* save_mean, double* save_invstd,
                             int n, int c, int hw);
void batchnorm_forward_eval(const double* x, const double* gamma, const double* beta,
                            const double* running_mean, const double* running_var, double eps,
                            double* y, int n, int c, int hw);
void batchnorm_backward_train(const double* x, const double* dy, const double* gamma,
                              const double* save_mean, const double* save_invstd,
                              double* dx, double* dgamma, double* dbeta, int n, int c, int hw);
void batchnorm_backward_eval(const double* x, const double* dy, const double* gamma,
                             const double* running_mean, const double* running_var, double eps,
                             double* dx, double* dgamma, double* dbeta, int n, int c, int hw);
}  // namespace ref

}  // namespace geos::kernels
