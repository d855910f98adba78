#include "geos/kernels.hpp"

#include <cmath>
#include <limits>

namespace geos::kernels {

namespace detail {

inline double conv_fwd_elem(const double* x, const double* w, const double* b,
                            const ConvShape& s, int n, int oc, int oh, int ow) {
    double acc = b ? b[oc] : 0.0;
    const int ihw = s.ih * s.iw;
    const double* xn = x + static_cast<int64_t>(n) * s.ic * ihw;
    const double* woc = w + static_cast<int64_t>(oc) * s.ic * s.kh * s.kw;
    for (int ic = 0; ic < s.ic; ++ic) {
        const double* xc = xn + static_cast<int64_t>(ic) * ihw;
        const double* wc = woc + static_cast<int64_t>(ic) * s.kh * s.kw;
        for (int kh = 0; kh < s.kh; ++kh) {
            const int ihh = oh * s.stride - s.pad + kh;
            if (ihh < 0 || ihh >= s.ih) continue;
            for (int kw = 0; kw < s.kw; ++kw) {
                const int iww = ow * s.stride - s.pad + kw;
                if (iww < 0 || iww >= s.iw) continue;
                acc += xc[ihh * s.iw + iww] * wc[kh * s.kw + kw];
            }
        }
    }
    return acc;
}

inline double conv_bwd_data_elem(const double* dy, const double* w, const ConvShape& s,
                                 int n, int ic, int ih, int iw) {
    double acc = 0.0;
    const int oh_n = s.oh(), ow_n = s.ow();
    const double* dyn = dy + static_cast<int64_t>(n) * s.oc * oh_n * ow_n;
    for (int oc = 0; oc < s.oc; ++oc) {
        const double* dyc = dyn + static_cast<int64_t>(oc) * oh_n * ow_n;
        const double* woc = w + (static_cast<int64_t>(oc) * s.ic + ic) * s.kh * s.kw;
        for (int kh = 0; kh < s.kh; ++kh) {
            const int num_h = ih + s.pad - kh;
            if (num_h < 0 || num_h % s.stride) continue;
            const int oh = num_h / s.stride;
            if (oh >= oh_n) continue;
            for (int kw = 0; kw < s.kw; ++kw) {
                const int num_w = iw + s.pad - kw;
                if (num_w < 0 || num_w % s.stride) continue;
                const int ow = num_w / s.stride;
                if (ow >= ow_n) continue;
                acc += woc[kh * s.kw + kw] * dyc[oh * ow_n + ow];
            }
        }
    }
    return acc;
}

inline double conv_bwd_weight_elem(const double* x, const double* dy, const ConvShape& s,
                                   int oc, int ic, int kh, int kw) {
    double acc = 0.0;
    const int oh_n = s.oh(), ow_n = s.ow();
    const int ihw = s.ih * s.iw;
    for (int n = 0; n < s.n; ++n) {
        const double* xc = x + (static_cast<int64_t>(n) * s.ic + ic) * ihw;
        const double* dyc = dy + (static_cast<int64_t>(n) * s.oc + oc) * oh_n * ow_n;
        for (int oh = 0; oh < oh_n; ++oh) {
            const int ih = oh * s.stride - s.pad + kh;
            if (ih < 0 || ih >= s.ih) continue;
            for (int ow = 0; ow < ow_n; ++ow) {
                const int iw = ow * s.stride - s.pad + kw;
                if (iw < 0 || iw >= s.iw) continue;
                acc += xc[ih * s.iw + iw] * dyc[oh * ow_n + ow];
            }
        }
    }
    return acc;
}

inline double conv_bwd_bias_elem(const double* dy, const ConvShape& s, int oc) {
    double acc = 0.0;
    const int ohw = s.oh() * s.ow();
    for (int n = 0; n < s.n; ++n) {
        const double* dyc = dy + (static_cast<int64_t>(n) * s.oc + oc) * ohw;
        for (int i = 0; i < ohw; ++i) acc += dyc[i];
    }
    return acc;
}

inline double linear_fwd_elem(const double* x, const double* w, const double* b,
                              int in, int n, int o) {
    double acc = b ? b[o] : 0.0;
    const double* xr = x + static_cast<int64_t>(n) * in;
    const double* wr = w + static_cast<int64_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
    return acc;
}

inline double linear_bwd_data_elem(const double* dy, const double* w, int in, int out,
                                   int n, int i) {
    double acc = 0.0;
    const double* dyr = dy + static_cast<int64_t>(n) * out;
    for (int o = 0; o < out; ++o) acc += w[static_cast<int64_t>(o) * in + i] * dyr[o];
    return acc;
}

inline void linear_bwd_param_row(const double* x, const double* dy, double* dw, double* db,
                                 int n, int in, int out, int o) {
    double bacc = 0.0;
    double* dwr = dw + static_cast<int64_t>(o) * in;
    for (int b = 0; b < n; ++b) {
        const double g = dy[static_cast<int64_t>(b) * out + o];
        const double* xr = x + static_cast<int64_t>(b) * in;
        for (int i = 0; i < in; ++i) dwr[i] += g * xr[i];
        bacc += g;
    }
    if (db) db[o] += bacc;
}

inline void maxpool_fwd_elem(const double* x, double* y, int32_t* argmax, const PoolShape& s,
                             int plane, int oh, int ow) {
    const double* xp = x + static_cast<int64_t>(plane) * s.ih * s.iw;
    const int ow_n = s.ow();
    double best = -std::numeric_limits<double>::infinity();
    int32_t best_idx = -1;
    for (int kh = 0; kh < s.k; ++kh) {
        const int ih = oh * s.stride - s.pad + kh;
        if (ih < 0 || ih >= s.ih) continue;
        for (int kw = 0; kw < s.k; ++kw) {
            const int iw = ow * s.stride - s.pad + kw;
            if (iw < 0 || iw >= s.iw) continue;
            const double v = xp[ih * s.iw + iw];
            if (v > best) {
                best = v;
                best_idx = static_cast<int32_t>(ih * s.iw + iw);
            }
        }
    }
    const int64_t oidx = static_cast<int64_t>(plane) * s.oh() * ow_n + oh * ow_n + ow;
    y[oidx] = best;
    argmax[oidx] = best_idx;
}

inline void maxpool_bwd_plane(const double* dy, const int32_t* argmax, double* dx,
                              const PoolShape& s, int plane) {
    const int ohw = s.oh() * s.ow();
    double* dxp = dx + static_cast<int64_t>(plane) * s.ih * s.iw;
    for (int i = 0; i < s.ih * s.iw; ++i) dxp[i] = 0.0;
    const double* dyp = dy + static_cast<int64_t>(plane) * ohw;
    const int32_t* ap = argmax + static_cast<int64_t>(plane) * ohw;
    for (int i = 0; i < ohw; ++i) dxp[ap[i]] += dyp[i];
}

inline void bn_channel_train(const double* x, const double* gamma, const double* beta,
                             double* running_mean, double* running_var, double momentum,
                             double eps, double* y, double* save_mean, double* save_invstd,
                             int n, int c, int hw, int ch) {
    const int64_t stride_n = static_cast<int64_t>(c) * hw;
    const int64_t cnt = static_cast<int64_t>(n) * hw;
    double mean = 0.0;
    for (int b = 0; b < n; ++b) {
        const double* xc = x + b * stride_n + static_cast<int64_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) mean += xc[i];
    }
    mean /= static_cast<double>(cnt);
    double var = 0.0;
    for (int b = 0; b < n; ++b) {
        const double* xc = x + b * stride_n + static_cast<int64_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) {
            const double d = xc[i] - mean;
            var += d * d;
        }
    }
    var /= static_cast<double>(cnt);
    const double invstd = 1.0 / std::sqrt(var + eps);
    for (int b = 0; b < n; ++b) {
        const double* xc = x + b * stride_n + static_cast<int64_t>(ch) * hw;
        double* yc = y + b * stride_n + static_cast<int64_t>(ch) * hw;
        for (int i = 0; i < hw; ++i)
            yc[i] = gamma[ch] * (xc[i] - mean) * invstd + beta[ch];
    }
    save_mean[ch] = mean;
    save_invstd[ch] = invstd;
    running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean;
    const double unbiased = cnt > 1 ? var * static_cast<double>(cnt) / static_cast<double>(cnt - 1) : var;
    running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * unbiased;
}

inline void bn_channel_eval(const double* x, const double* gamma, const double* beta,
                            const double* running_mean, const double* running_var, double eps,
                            double* y, int n, int c, int hw, int ch) {
    const int64_t stride_n = static_cast<int64_t>(c) * hw;
    const double invstd = 1.0 / std::sqrt(running_var[ch] + eps);
    for (int b = 0; b < n; ++b) {
        const double* xc = x + b * stride_n + static_cast<int64_t>(ch) * hw;
        double* yc = y + b * stride_n + static_cast<int64_t>(ch) * hw;
        for (int i = 0; i < hw; ++i)
            yc[i] = gamma[ch] * (xc[i] - running_mean[ch]) * invstd + beta[ch];
    }
}

inline void bn_channel_bwd_train(const double* x, const double* dy, const double* gamma,
                                 const double* save_mean, const double* save_invstd,
                                 double* dx, double* dgamma, double* dbeta,
                                 int n, int c, int hw, int ch) {
    const int64_t stride_n = static_cast<int64_t>(c) * hw;
    const double cnt = static_cast<double>(static_cast<int64_t>(n) * hw);
    const double mean = save_mean[ch], invstd = save_invstd[ch];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < n; ++b) {
        const double* xc = x + b * stride_n + static_cast<int64_t>(ch) * hw;
        const double* dyc = dy + b * stride_n + static_cast<int64_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) {
            sum_dy += dyc[i];
            sum_dy_xhat += dyc[i] * (xc[i] - mean) * invstd;
        }
    }
    for (int b = 0; b < n; ++b) {
        const double* xc = x + b * stride_n + static_cast<int64_t>(ch) * hw;
        const double* dyc = dy + b * stride_n + static_cast<int64_t>(ch) * hw;
        double* dxc = dx + b * stride_n + static_cast<int64_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) {
            const double xhat = (xc[i] - mean) * invstd;
            dxc[i] = gamma[ch] * invstd * (dyc[i] - sum_dy / cnt - xhat * sum_dy_xhat / cnt);
        }
    }
    dgamma[ch] += sum_dy_xhat;
    dbeta[ch] += sum_dy;
}

inline void bn_channel_bwd_eval(const double* x, const double* dy, const double* gamma,
                                const double* running_mean, const double* running_var,
                                double eps, double* dx, double* dgamma, double* dbeta,
                                int n, int c, int hw, int ch) {
    const int64_t stride_n = static_cast<int64_t>(c) * hw;
    const double invstd = 1.0 / std::sqrt(running_var[ch] + eps);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < n; ++b) {
        const double* xc = x + b * stride_n + static_cast<int64_t>(ch) * hw;
        const double* dyc = dy + b * stride_n + static_cast<int64_t>(ch) * hw;
        double* dxc = dx + b * stride_n + static_cast<int64_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) {
            sum_dy += dyc[i];
            sum_dy_xhat += dyc[i] * (xc[i] - running_mean[ch]) * invstd;
            dxc[i] = dyc[i] * gamma[ch] * invstd;
        }
    }
    dgamma[ch] += sum_dy_xhat;
    dbeta[ch] += sum_dy;
}

}  // namespace detail

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvShape& s) {
    const int oh_n = s.oh(), ow_n = s.ow();
    const int64_t total = static_cast<int64_t>(s.n) * s.oc;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < total; ++p) {
        const int n = static_cast<int>(p / s.oc);
        const int oc = static_cast<int>(p % s.oc);
        double* yp = y + p * oh_n * ow_n;
        for (int oh = 0; oh < oh_n; ++oh)
            for (int ow = 0; ow < ow_n; ++ow)
                yp[oh * ow_n + ow] = detail::conv_fwd_elem(x, w, b, s, n, oc, oh, ow);
    }
}

void conv2d_backward_data(const double* dy, const double* w, double* dx, const ConvShape& s) {
    const int64_t total = static_cast<int64_t>(s.n) * s.ic;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < total; ++p) {
        const int n = static_cast<int>(p / s.ic);
        const int ic = static_cast<int>(p % s.ic);
        double* dxp = dx + p * s.ih * s.iw;
        for (int ih = 0; ih < s.ih; ++ih)
            for (int iw = 0; iw < s.iw; ++iw)
                dxp[ih * s.iw + iw] = detail::conv_bwd_data_elem(dy, w, s, n, ic, ih, iw);
    }
}

void conv2d_backward_weights(const double* x, const double* dy, double* dw, double* db,
                             const ConvShape& s) {
    const int64_t total = static_cast<int64_t>(s.oc) * s.ic;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < total; ++p) {
        const int oc = static_cast<int>(p / s.ic);
        const int ic = static_cast<int>(p % s.ic);
        double* dwp = dw + p * s.kh * s.kw;
        for (int kh = 0; kh < s.kh; ++kh)
            for (int kw = 0; kw < s.kw; ++kw)
                dwp[kh * s.kw + kw] += detail::conv_bwd_weight_elem(x, dy, s, oc, ic, kh, kw);
    }
    if (db) {
#pragma omp parallel for schedule(static)
        for (int oc = 0; oc < s.oc; ++oc) db[oc] += detail::conv_bwd_bias_elem(dy, s, oc);
    }
}

void linear_forward(const double* x, const double* w, const double* b, double* y,
                    int n, int in, int out) {
    const int64_t total = static_cast<int64_t>(n) * out;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < total; ++p)
        y[p] = detail::linear_fwd_elem(x, w, b, in, static_cast<int>(p / out),
                                       static_cast<int>(p % out));
}

void linear_backward_data(const double* dy, const double* w, double* dx, int n, int in, int out) {
    const int64_t total = static_cast<int64_t>(n) * in;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < total; ++p)
        dx[p] = detail::linear_bwd_data_elem(dy, w, in, out, static_cast<int>(p / in),
                                             static_cast<int>(p % in));
}

void linear_backward_params(const double* x, const double* dy, double* dw, double* db,
                            int n, int in, int out) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o)
        detail::linear_bwd_param_row(x, dy, dw, db, n, in, out, o);
}

void relu_forward(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void add(const double* a, const double* b, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void gap_forward(const double* x, double* y, int n, int c, int hw) {
    const int64_t total = static_cast<int64_t>(n) * c;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < total; ++p) {
        const double* xp = x + p * hw;
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += xp[i];
        y[p] = acc / hw;
    }
}

void gap_backward(const double* dy, double* dx, int n, int c, int hw) {
    const int64_t total = static_cast<int64_t>(n) * c;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < total; ++p) {
        const double g = dy[p] / hw;
        double* dxp = dx + p * hw;
        for (int i = 0; i < hw; ++i) dxp[i] = g;
    }
}

void maxpool2d_forward(const double* x, double* y, int32_t* argmax, const PoolShape& s) {
    const int64_t planes = static_cast<int64_t>(s.n) * s.c;
    const int oh_n = s.oh(), ow_n = s.ow();
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < planes; ++p)
        for (int oh = 0; oh < oh_n; ++oh)
            for (int ow = 0; ow < ow_n; ++ow)
                detail::maxpool_fwd_elem(x, y, argmax, s, static_cast<int>(p), oh, ow);
}

void maxpool2d_backward(const double* dy, const int32_t* argmax, double* dx, const PoolShape& s) {
    const int64_t planes = static_cast<int64_t>(s.n) * s.c;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < planes; ++p)
        detail::maxpool_bwd_plane(dy, argmax, dx, s, static_cast<int>(p));
}

void batchnorm_forward_train(const double* x, const double* gamma, const double* beta,
                             double* running_mean, double* running_var, double momentum,
                             double eps, double* y, double* save_mean, double* save_invstd,
                             int n, int c, int hw) {
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch)
        detail::bn_channel_train(x, gamma, beta, running_mean, running_var, momentum, eps, y,
                                 save_mean, save_invstd, n, c, hw, ch);
}

void batchnorm_forward_eval(const double* x, const double* gamma, const double* beta,
                            const double* running_mean, const double* running_var, double eps,
                            double* y, int n, int c, int hw) {
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch)
        detail::bn_channel_eval(x, gamma, beta, running_mean, running_var, eps, y, n, c, hw, ch);
}

void batchnorm_backward_train(const double* x, const double* dy, const double* gamma,
                              const double* save_mean, const double* save_invstd,
                              double* dx, double* dgamma, double* dbeta, int n, int c, int hw) {
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch)
        detail::bn_channel_bwd_train(x, dy, gamma, save_mean, save_invstd, dx, dgamma, dbeta,
                                     n, c, hw, ch);
}

void batchnorm_backward_eval(const double* x, const double* dy, const double* gamma,
                             const double* running_mean, const double* running_var, double eps,
                             double* dx, double* dgamma, double* dbeta, int n, int c, int hw) {
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch)
        detail::bn_channel_bwd_eval(x, dy, gamma, running_mean, running_var, eps, dx, dgamma,
                                    dbeta, n, c, hw, ch);
}

namespace ref {

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvShape& s) {
    const int oh_n = s.oh(), ow_n = s.ow();
    for (int64_t p = 0; p < static_cast<int64_t>(s.n) * s.oc; ++p) {
        const int n = static_cast<int>(p / s.oc);
        const int oc = static_cast<int>(p % s.oc);
        double* yp = y + p * oh_n * ow_n;
        for (int oh = 0; oh < oh_n; ++oh)
            for (int ow = 0; ow < ow_n; ++ow)
                yp[oh * ow_n + ow] = detail::conv_fwd_elem(x, w, b, s, n, oc, oh, ow);
    }
}

void conv2d_backward_data(const double* dy, const double* w, double* dx, const ConvShape& s) {
    for (int64_t p = 0; p < static_cast<int64_t>(s.n) * s.ic; ++p) {
        const int n = static_cast<int>(p / s.ic);
        const int ic = static_cast<int>(p % s.ic);
        double* dxp = dx + p * s.ih * s.iw;
        for (int ih = 0; ih < s.ih; ++ih)
            for (int iw = 0; iw < s.iw; ++iw)
                dxp[ih * s.iw + iw] = detail::conv_bwd_data_elem(dy, w, s, n, ic, ih, iw);
    }
}

void conv2d_backward_weights(const double* x, const double* dy, double* dw, double* db,
                             const ConvShape& s) {
    for (int64_t p = 0; p < static_cast<int64_t>(s.oc) * s.ic; ++p) {
        const int oc = static_cast<int>(p / s.ic);
        const int ic = static_cast<int>(p % s.ic);
        double* dwp = dw + p * s.kh * s.kw;
        for (int kh = 0; kh < s.kh; ++kh)
            for (int kw = 0; kw < s.kw; ++kw)
                dwp[kh * s.kw + kw] += detail::conv_bwd_weight_elem(x, dy, s, oc, ic, kh, kw);
    }
    if (db)
        for (int oc = 0; oc < s.oc; ++oc) db[oc] += detail::conv_bwd_bias_elem(dy, s, oc);
}

void linear_forward(const double* x, const double* w, const double* b, double* y,
                    int n, int in, int out) {
    for (int64_t p = 0; p < static_cast<int64_t>(n) * out; ++p)
        y[p] = detail::linear_fwd_elem(x, w, b, in, static_cast<int>(p / out),
                                       static_cast<int>(p % out));
}

void linear_backward_data(const double* dy, const double* w, double* dx, int n, int in, int out) {
    for (int64_t p = 0; p < static_cast<int64_t>(n) * in; ++p)
        dx[p] = detail::linear_bwd_data_elem(dy, w, in, out, static_cast<int>(p / in),
                                             static_cast<int>(p % in));
}

void linear_backward_params(const double* x, const double* dy, double* dw, double* db,
                            int n, int in, int out) {
    for (int o = 0; o < out; ++o) detail::linear_bwd_param_row(x, dy, dw, db, n, in, out, o);
}

void relu_forward(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void add(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void gap_forward(const double* x, double* y, int n, int c, int hw) {
    for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
        const double* xp = x + p * hw;
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += xp[i];
        y[p] = acc / hw;
    }
}

void gap_backward(const double* dy, double* dx, int n, int c, int hw) {
    for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
        const double g = dy[p] / hw;
        double* dxp = dx + p * hw;
        for (int i = 0; i < hw; ++i) dxp[i] = g;
    }
}

void maxpool2d_forward(const double* x, double* y, int32_t* argmax, const PoolShape& s) {
    const int oh_n = s.oh(), ow_n = s.ow();
    for (int64_t p = 0; p < static_cast<int64_t>(s.n) * s.c; ++p)
        for (int oh = 0; oh < oh_n; ++oh)
            for (int ow = 0; ow < ow_n; ++ow)
                detail::maxpool_fwd_elem(x, y, argmax, s, static_cast<int>(p), oh, ow);
}

void maxpool2d_backward(const double* dy, const int32_t* argmax, double* dx, const PoolShape& s) {
    for (int64_t p = 0; p < static_cast<int64_t>(s.n) * s.c; ++p)
        detail::maxpool_bwd_plane(dy, argmax, dx, s, static_cast<int>(p));
}

void batchnorm_forward_train(const double* x, const double* gamma, const double* beta,
                             double* running_mean, double* running_var, double momentum,
                             double eps, double* y, double* save_mean, double* save_invstd,
                             int n, int c, int hw) {
    for (int ch = 0; ch < c; ++ch)
        detail::bn_channel_train(x, gamma, beta, running_mean, running_var, momentum, eps, y,
                                 save_mean, save_invstd, n, c, hw, ch);
}

void batchnorm_forward_eval(const double* x, const double* gamma, const double* beta,
                            const double* running_mean, const double* running_var, double eps,
                            double* y, int n, int c, int hw) {
    for (int ch = 0; ch < c; ++ch)
        detail::bn_channel_eval(x, gamma, beta, running_mean, running_var, eps, y, n, c, hw, ch);
}

void batchnorm_backward_train(const double* x, const double* dy, const double* gamma,
                              const double* save_mean, const double* save_invstd,
                              double* dx, double* dgamma, double* dbeta, int n, int c, int hw) {
    for (int ch = 0; ch < c; ++ch)
        detail::bn_channel_bwd_train(x, dy, gamma, save_mean, save_invstd, dx, dgamma, dbeta,
                                     n, c, hw, ch);
}

void batchnorm_backward_eval(const double* x, const double* dy, const double* gamma,
                             const double* running_mean, const double* running_var, double eps,
                             double* dx, double* dgamma, double* dbeta, int n, int c, int hw) {
    for (int ch = 0; ch < c; ++ch)
        detail::bn_channel_bwd_eval(x, dy, gamma, running_mean, running_var, eps, dx, dgamma,
                                    dbeta, n, c, hw, ch);
}

}  // namespace ref

}  // namespace geos::kernels
