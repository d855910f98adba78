#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include <omp.h>

#include "geos/kernels.hpp"
#include "geos/rng.hpp"

using namespace geos;
using namespace geos::kernels;

namespace {

std::vector<double> randu(size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_close(double analytic, double fd, double tol = 1e-6) {
    const double scale = std::max({1.0, std::fabs(analytic), std::fabs(fd)});
    CHECK(std::fabs(analytic - fd) <= tol * scale);
}

bool bitwise(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

constexpr double kH = 1e-5;

}  // namespace

TEST_CASE("conv2d forward/backward match finite differences") {
    Rng rng(101);
    for (const ConvShape& s : {ConvShape{2, 3, 5, 6, 4, 3, 3, 2, 1},
                               ConvShape{1, 2, 4, 4, 3, 1, 1, 1, 0},
                               ConvShape{2, 2, 6, 5, 2, 3, 2, 1, 2}}) {
        auto x = randu(static_cast<size_t>(s.n) * s.ic * s.ih * s.iw, rng);
        auto w = randu(static_cast<size_t>(s.oc) * s.ic * s.kh * s.kw, rng);
        auto b = randu(static_cast<size_t>(s.oc), rng);
        const size_t ysz = static_cast<size_t>(s.n) * s.oc * s.oh() * s.ow();
        std::vector<double> y(ysz);
        auto r = randu(ysz, rng);

        auto loss = [&](const std::vector<double>& xx, const std::vector<double>& ww,
                        const std::vector<double>& bb) {
            conv2d_forward(xx.data(), ww.data(), bb.data(), y.data(), s);
            return dot(y, r);
        };

        std::vector<double> dx(x.size()), dw(w.size(), 0.0), db(b.size(), 0.0);
        conv2d_backward_data(r.data(), w.data(), dx.data(), s);
        conv2d_backward_weights(x.data(), r.data(), dw.data(), db.data(), s);

        for (size_t i = 0; i < x.size(); i += 7) {
            auto xp = x, xm = x;
            xp[i] += kH;
            xm[i] -= kH;
            check_close(dx[i], (loss(xp, w, b) - loss(xm, w, b)) / (2 * kH));
        }
        for (size_t i = 0; i < w.size(); i += 5) {
            auto wp = w, wm = w;
            wp[i] += kH;
            wm[i] -= kH;
            check_close(dw[i], (loss(x, wp, b) - loss(x, wm, b)) / (2 * kH));
        }
        for (size_t i = 0; i < b.size(); ++i) {
            auto bp = b, bm = b;
            bp[i] += kH;
            bm[i] -= kH;
            check_close(db[i], (loss(x, w, bp) - loss(x, w, bm)) / (2 * kH));
        }
    }
}

TEST_CASE("conv2d weight gradients accumulate") {
    Rng rng(102);
    ConvShape s{1, 2, 4, 4, 2, 3, 3, 1, 1};
    auto x = randu(static_cast<size_t>(s.n) * s.ic * s.ih * s.iw, rng);
    auto dy = randu(static_cast<size_t>(s.n) * s.oc * s.oh() * s.ow(), rng);
    std::vector<double> dw1(static_cast<size_t>(s.oc) * s.ic * s.kh * s.kw, 0.0);
    std::vector<double> db1(static_cast<size_t>(s.oc), 0.0);
    conv2d_backward_weights(x.data(), dy.data(), dw1.data(), db1.data(), s);
    auto dw2 = dw1;
    auto db2 = db1;
    conv2d_backward_weights(x.data(), dy.data(), dw2.data(), db2.data(), s);
    for (size_t i = 0; i < dw1.size(); ++i) CHECK(dw2[i] == doctest::Approx(2 * dw1[i]));
    for (size_t i = 0; i < db1.size(); ++i) CHECK(db2[i] == doctest::Approx(2 * db1[i]));
}

TEST_CASE("linear forward/backward match finite differences") {
    Rng rng(103);
    const int n = 3, in = 5, out = 4;
    auto x = randu(static_cast<size_t>(n) * in, rng);
    auto w = randu(static_cast<size_t>(out) * in, rng);
    auto b = randu(out, rng);
    std::vector<double> y(static_cast<size_t>(n) * out);
    auto r = randu(y.size(), rng);

    auto loss = [&](const std::vector<double>& xx, const std::vector<double>& ww,
                    const std::vector<double>& bb) {
        linear_forward(xx.data(), ww.data(), bb.data(), y.data(), n, in, out);
        return dot(y, r);
    };

    std::vector<double> dx(x.size()), dw(w.size(), 0.0), db(b.size(), 0.0);
    linear_backward_data(r.data(), w.data(), dx.data(), n, in, out);
    linear_backward_params(x.data(), r.data(), dw.data(), db.data(), n, in, out);

    for (size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += kH;
        xm[i] -= kH;
        check_close(dx[i], (loss(xp, w, b) - loss(xm, w, b)) / (2 * kH));
    }
    for (size_t i = 0; i < w.size(); ++i) {
        auto wp = w, wm = w;
        wp[i] += kH;
        wm[i] -= kH;
        check_close(dw[i], (loss(x, wp, b) - loss(x, wm, b)) / (2 * kH));
    }
    for (size_t i = 0; i < b.size(); ++i) {
        auto bp = b, bm = b;
        bp[i] += kH;
        bm[i] -= kH;
        check_close(db[i], (loss(x, w, bp) - loss(x, w, bm)) / (2 * kH));
    }
}

TEST_CASE("relu backward masks by input sign") {
    Rng rng(104);
    auto x = randu(64, rng);
    auto dy = randu(64, rng);
    std::vector<double> y(64), dx(64);
    relu_forward(x.data(), y.data(), 64);
    relu_backward(x.data(), dy.data(), dx.data(), 64);
    for (int i = 0; i < 64; ++i) {
        CHECK(y[i] == (x[i] > 0 ? x[i] : 0.0));
        CHECK(dx[i] == (x[i] > 0 ? dy[i] : 0.0));
    }
}

TEST_CASE("gap forward/backward match finite differences") {
    Rng rng(105);
    const int n = 2, c = 3, hw = 12;
    auto x = randu(static_cast<size_t>(n) * c * hw, rng);
    std::vector<double> y(static_cast<size_t>(n) * c);
    auto r = randu(y.size(), rng);
    auto loss = [&](const std::vector<double>& xx) {
        gap_forward(xx.data(), y.data(), n, c, hw);
        return dot(y, r);
    };
    std::vector<double> dx(x.size());
    gap_backward(r.data(), dx.data(), n, c, hw);
    for (size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += kH;
        xm[i] -= kH;
        check_close(dx[i], (loss(xp) - loss(xm)) / (2 * kH));
    }
}

TEST_CASE("maxpool forward/backward match finite differences") {
    Rng rng(106);
    for (const PoolShape& s : {PoolShape{2, 2, 6, 6, 2, 2, 0}, PoolShape{1, 3, 5, 5, 3, 2, 1}}) {
        auto x = randu(static_cast<size_t>(s.n) * s.c * s.ih * s.iw, rng);
        const size_t ysz = static_cast<size_t>(s.n) * s.c * s.oh() * s.ow();
        std::vector<double> y(ysz);
        std::vector<int32_t> arg(ysz);
        auto r = randu(ysz, rng);
        auto loss = [&](const std::vector<double>& xx) {
            maxpool2d_forward(xx.data(), y.data(), arg.data(), s);
            return dot(y, r);
        };
        maxpool2d_forward(x.data(), y.data(), arg.data(), s);
        for (int32_t a : arg) {
            CHECK(a >= 0);
            CHECK(a < s.ih * s.iw);
        }
        std::vector<double> dx(x.size());
        maxpool2d_backward(r.data(), arg.data(), dx.data(), s);
        for (size_t i = 0; i < x.size(); i += 3) {
            auto xp = x, xm = x;
            xp[i] += kH;
            xm[i] -= kH;
            check_close(dx[i], (loss(xp) - loss(xm)) / (2 * kH));
        }
    }
}

TEST_CASE("batchnorm train forward/backward match finite differences") {
    Rng rng(107);
    const int n = 3, c = 2, hw = 8;
    const double eps = 1e-5, momentum = 0.1;
    auto x = randu(static_cast<size_t>(n) * c * hw, rng);
    auto gamma = randu(c, rng, 0.5, 1.5);
    auto beta = randu(c, rng);
    std::vector<double> y(x.size()), sm(c), si(c);
    auto r = randu(x.size(), rng);

    auto loss = [&](const std::vector<double>& xx, const std::vector<double>& gg,
                    const std::vector<double>& bb) {
        std::vector<double> rm(c, 0.0), rv(c, 1.0);
        batchnorm_forward_train(xx.data(), gg.data(), bb.data(), rm.data(), rv.data(), momentum,
                                eps, y.data(), sm.data(), si.data(), n, c, hw);
        return dot(y, r);
    };

    loss(x, gamma, beta);
    std::vector<double> dx(x.size()), dgamma(c, 0.0), dbeta(c, 0.0);
    batchnorm_backward_train(x.data(), r.data(), gamma.data(), sm.data(), si.data(), dx.data(),
                             dgamma.data(), dbeta.data(), n, c, hw);

    for (size_t i = 0; i < x.size(); i += 3) {
        auto xp = x, xm = x;
        xp[i] += kH;
        xm[i] -= kH;
        check_close(dx[i], (loss(xp, gamma, beta) - loss(xm, gamma, beta)) / (2 * kH), 1e-5);
    }
    for (int i = 0; i < c; ++i) {
        auto gp = gamma, gm = gamma;
        gp[static_cast<size_t>(i)] += kH;
        gm[static_cast<size_t>(i)] -= kH;
        check_close(dgamma[static_cast<size_t>(i)],
                    (loss(x, gp, beta) - loss(x, gm, beta)) / (2 * kH), 1e-5);
        auto bp = beta, bm = beta;
        bp[static_cast<size_t>(i)] += kH;
        bm[static_cast<size_t>(i)] -= kH;
        check_close(dbeta[static_cast<size_t>(i)],
                    (loss(x, gamma, bp) - loss(x, gamma, bm)) / (2 * kH), 1e-5);
    }
}

TEST_CASE("batchnorm eval forward/backward match finite differences") {
    Rng rng(108);
    const int n = 2, c = 3, hw = 6;
    const double eps = 1e-5;
    auto x = randu(static_cast<size_t>(n) * c * hw, rng);
    auto gamma = randu(c, rng, 0.5, 1.5);
    auto beta = randu(c, rng);
    auto rm = randu(c, rng, -0.2, 0.2);
    auto rv = randu(c, rng, 0.5, 1.5);
    std::vector<double> y(x.size());
    auto r = randu(x.size(), rng);

    auto loss = [&](const std::vector<double>& xx, const std::vector<double>& gg,
                    const std::vector<double>& bb) {
        batchnorm_forward_eval(xx.data(), gg.data(), bb.data(), rm.data(), rv.data(), eps,
                               y.data(), n, c, hw);
        return dot(y, r);
    };

    std::vector<double> dx(x.size()), dgamma(c, 0.0), dbeta(c, 0.0);
    batchnorm_backward_eval(x.data(), r.data(), gamma.data(), rm.data(), rv.data(), eps, dx.data(),
                            dgamma.data(), dbeta.data(), n, c, hw);

    for (size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += kH;
        xm[i] -= kH;
        check_close(dx[i], (loss(xp, gamma, beta) - loss(xm, gamma, beta)) / (2 * kH));
    }
    for (int i = 0; i < c; ++i) {
        auto gp = gamma, gm = gamma;
        gp[static_cast<size_t>(i)] += kH;
        gm[static_cast<size_t>(i)] -= kH;
        check_close(dgamma[static_cast<size_t>(i)],
                    (loss(x, gp, beta) - loss(x, gm, beta)) / (2 * kH));
        auto bp = beta, bm = beta;
        bp[static_cast<size_t>(i)] += kH;
        bm[static_cast<size_t>(i)] -= kH;
        check_close(dbeta[static_cast<size_t>(i)],
                    (loss(x, gamma, bp) - loss(x, gamma, bm)) / (2 * kH));
    }
}

TEST_CASE("batchnorm running statistics follow the update rule") {
    Rng rng(109);
    const int n = 4, c = 2, hw = 5;
    const double eps = 1e-5, momentum = 0.1;
    auto x = randu(static_cast<size_t>(n) * c * hw, rng);
    std::vector<double> gamma(c, 1.0), beta(c, 0.0);
    std::vector<double> rm(c, 0.25), rv(c, 2.0), y(x.size()), sm(c), si(c);
    auto rm0 = rm;
    auto rv0 = rv;
    batchnorm_forward_train(x.data(), gamma.data(), beta.data(), rm.data(), rv.data(), momentum,
                            eps, y.data(), sm.data(), si.data(), n, c, hw);
    const double cnt = static_cast<double>(n) * hw;
    for (int ch = 0; ch < c; ++ch) {
        double mean = 0;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) mean += x[(static_cast<size_t>(b) * c + ch) * hw + i];
        mean /= cnt;
        double var = 0;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) {
                const double d = x[(static_cast<size_t>(b) * c + ch) * hw + i] - mean;
                var += d * d;
            }
        const double biased = var / cnt;
        const double unbiased = var / (cnt - 1);
        CHECK(sm[static_cast<size_t>(ch)] == doctest::Approx(mean).epsilon(1e-12));
        CHECK(si[static_cast<size_t>(ch)] ==
              doctest::Approx(1.0 / std::sqrt(biased + eps)).epsilon(1e-12));
        CHECK(rm[static_cast<size_t>(ch)] ==
              doctest::Approx((1 - momentum) * rm0[static_cast<size_t>(ch)] + momentum * mean)
                  .epsilon(1e-12));
        CHECK(rv[static_cast<size_t>(ch)] ==
              doctest::Approx((1 - momentum) * rv0[static_cast<size_t>(ch)] + momentum * unbiased)
                  .epsilon(1e-12));
    }
}

TEST_CASE("omp kernels are bitwise identical to serial references") {
    omp_set_num_threads(3);
    Rng rng(110);

    ConvShape s{3, 4, 9, 7, 5, 3, 3, 2, 1};
    auto x = randu(static_cast<size_t>(s.n) * s.ic * s.ih * s.iw, rng);
    auto w = randu(static_cast<size_t>(s.oc) * s.ic * s.kh * s.kw, rng);
    auto b = randu(s.oc, rng);
    const size_t ysz = static_cast<size_t>(s.n) * s.oc * s.oh() * s.ow();
    std::vector<double> y1(ysz), y2(ysz);
    ref::conv2d_forward(x.data(), w.data(), b.data(), y1.data(), s);
    conv2d_forward(x.data(), w.data(), b.data(), y2.data(), s);
    CHECK(bitwise(y1, y2));

    auto dy = randu(ysz, rng);
    std::vector<double> dx1(x.size()), dx2(x.size());
    ref::conv2d_backward_data(dy.data(), w.data(), dx1.data(), s);
    conv2d_backward_data(dy.data(), w.data(), dx2.data(), s);
    CHECK(bitwise(dx1, dx2));

    std::vector<double> dw1(w.size(), 0.0), dw2(w.size(), 0.0), db1(b.size(), 0.0),
        db2(b.size(), 0.0);
    ref::conv2d_backward_weights(x.data(), dy.data(), dw1.data(), db1.data(), s);
    conv2d_backward_weights(x.data(), dy.data(), dw2.data(), db2.data(), s);
    CHECK(bitwise(dw1, dw2));
    CHECK(bitwise(db1, db2));

    const int n = 5, in = 17, out = 11;
    auto lx = randu(static_cast<size_t>(n) * in, rng);
    auto lw = randu(static_cast<size_t>(out) * in, rng);
    auto lb = randu(out, rng);
    std::vector<double> ly1(static_cast<size_t>(n) * out), ly2(ly1.size());
    ref::linear_forward(lx.data(), lw.data(), lb.data(), ly1.data(), n, in, out);
    linear_forward(lx.data(), lw.data(), lb.data(), ly2.data(), n, in, out);
    CHECK(bitwise(ly1, ly2));

    auto ldy = randu(ly1.size(), rng);
    std::vector<double> ldx1(lx.size()), ldx2(lx.size());
    ref::linear_backward_data(ldy.data(), lw.data(), ldx1.data(), n, in, out);
    linear_backward_data(ldy.data(), lw.data(), ldx2.data(), n, in, out);
    CHECK(bitwise(ldx1, ldx2));

    std::vector<double> ldw1(lw.size(), 0.0), ldw2(lw.size(), 0.0), ldb1(lb.size(), 0.0),
        ldb2(lb.size(), 0.0);
    ref::linear_backward_params(lx.data(), ldy.data(), ldw1.data(), ldb1.data(), n, in, out);
    linear_backward_params(lx.data(), ldy.data(), ldw2.data(), ldb2.data(), n, in, out);
    CHECK(bitwise(ldw1, ldw2));
    CHECK(bitwise(ldb1, ldb2));

    PoolShape ps{2, 3, 7, 7, 3, 2, 1};
    auto px = randu(static_cast<size_t>(ps.n) * ps.c * ps.ih * ps.iw, rng);
    const size_t pysz = static_cast<size_t>(ps.n) * ps.c * ps.oh() * ps.ow();
    std::vector<double> py1(pysz), py2(pysz);
    std::vector<int32_t> pa1(pysz), pa2(pysz);
    ref::maxpool2d_forward(px.data(), py1.data(), pa1.data(), ps);
    maxpool2d_forward(px.data(), py2.data(), pa2.data(), ps);
    CHECK(bitwise(py1, py2));
    CHECK(std::memcmp(pa1.data(), pa2.data(), pa1.size() * sizeof(int32_t)) == 0);

    const int bn = 3, bc = 4, bhw = 10;
    auto bx = randu(static_cast<size_t>(bn) * bc * bhw, rng);
    auto bg = randu(bc, rng, 0.5, 1.5);
    auto bb = randu(bc, rng);
    std::vector<double> brm1(bc, 0.0), brv1(bc, 1.0), brm2(bc, 0.0), brv2(bc, 1.0);
    std::vector<double> by1(bx.size()), by2(bx.size()), bsm1(bc), bsi1(bc), bsm2(bc), bsi2(bc);
    ref::batchnorm_forward_train(bx.data(), bg.data(), bb.data(), brm1.data(), brv1.data(), 0.1,
                                 1e-5, by1.data(), bsm1.data(), bsi1.data(), bn, bc, bhw);
    batchnorm_forward_train(bx.data(), bg.data(), bb.data(), brm2.data(), brv2.data(), 0.1, 1e-5,
                            by2.data(), bsm2.data(), bsi2.data(), bn, bc, bhw);
    CHECK(bitwise(by1, by2));
    CHECK(bitwise(brm1, brm2));
    CHECK(bitwise(brv1, brv2));

    auto bdy = randu(bx.size(), rng);
    std::vector<double> bdx1(bx.size()), bdx2(bx.size()), bdg1(bc, 0.0), bdg2(bc, 0.0),
        bdb1(bc, 0.0), bdb2(bc, 0.0);
    ref::batchnorm_backward_train(bx.data(), bdy.data(), bg.data(), bsm1.data(), bsi1.data(),
                                  bdx1.data(), bdg1.data(), bdb1.data(), bn, bc, bhw);
    batchnorm_backward_train(bx.data(), bdy.data(), bg.data(), bsm2.data(), bsi2.data(),
                             bdx2.data(), bdg2.data(), bdb2.data(), bn, bc, bhw);
    CHECK(bitwise(bdx1, bdx2));
    CHECK(bitwise(bdg1, bdg2));
    CHECK(bitwise(bdb1, bdb2));
}
