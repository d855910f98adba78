// Times the OpenMP kernels against their serial reference twins and verifies
// the outputs stay bitwise identical while doing so.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <omp.h>

#include "geos/kernels.hpp"
#include "geos/rng.hpp"

using namespace geos;
using namespace geos::kernels;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::vector<double> randu(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

struct Case {
    std::string name;
    double serial_s = 0;
    double omp_s = 0;
    bool bitwise = false;
};

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        f();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::atoi(argv[1]);
    Rng rng(12345);
    std::vector<Case> cases;

    {
        ConvShape s{8, 32, 32, 32, 64, 3, 3, 1, 1};
        auto x = randu(static_cast<size_t>(s.n) * s.ic * s.ih * s.iw, rng);
        auto w = randu(static_cast<size_t>(s.oc) * s.ic * s.kh * s.kw, rng);
        auto b = randu(static_cast<size_t>(s.oc), rng);
        std::vector<double> y1(static_cast<size_t>(s.n) * s.oc * s.oh() * s.ow());
        std::vector<double> y2(y1.size());
        Case c{"conv2d_forward 8x32x32x32 -> 64c k3"};
        c.serial_s = time_best_of(reps, [&] { ref::conv2d_forward(x.data(), w.data(), b.data(), y1.data(), s); });
        c.omp_s = time_best_of(reps, [&] { conv2d_forward(x.data(), w.data(), b.data(), y2.data(), s); });
        c.bitwise = std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0;
        cases.push_back(c);

        auto dy = randu(y1.size(), rng);
        std::vector<double> dx1(x.size()), dx2(x.size());
        Case cd{"conv2d_backward_data  (same shape)"};
        cd.serial_s = time_best_of(reps, [&] { ref::conv2d_backward_data(dy.data(), w.data(), dx1.data(), s); });
        cd.omp_s = time_best_of(reps, [&] { conv2d_backward_data(dy.data(), w.data(), dx2.data(), s); });
        cd.bitwise = std::memcmp(dx1.data(), dx2.data(), dx1.size() * sizeof(double)) == 0;
        cases.push_back(cd);

        std::vector<double> dw1(w.size()), dw2(w.size()), db1(b.size()), db2(b.size());
        Case cw{"conv2d_backward_weights (same shape)"};
        cw.serial_s = time_best_of(reps, [&] {
            std::fill(dw1.begin(), dw1.end(), 0.0);
            std::fill(db1.begin(), db1.end(), 0.0);
            ref::conv2d_backward_weights(x.data(), dy.data(), dw1.data(), db1.data(), s);
        });
        cw.omp_s = time_best_of(reps, [&] {
            std::fill(dw2.begin(), dw2.end(), 0.0);
            std::fill(db2.begin(), db2.end(), 0.0);
            conv2d_backward_weights(x.data(), dy.data(), dw2.data(), db2.data(), s);
        });
        cw.bitwise = std::memcmp(dw1.data(), dw2.data(), dw1.size() * sizeof(double)) == 0 &&
                     std::memcmp(db1.data(), db2.data(), db1.size() * sizeof(double)) == 0;
        cases.push_back(cw);
    }

    {
        const int n = 256, in = 1024, out = 512;
        auto x = randu(static_cast<size_t>(n) * in, rng);
        auto w = randu(static_cast<size_t>(out) * in, rng);
        auto b = randu(static_cast<size_t>(out), rng);
        std::vector<double> y1(static_cast<size_t>(n) * out), y2(y1.size());
        Case c{"linear_forward 256x1024 -> 512"};
        c.serial_s = time_best_of(reps, [&] { ref::linear_forward(x.data(), w.data(), b.data(), y1.data(), n, in, out); });
        c.omp_s = time_best_of(reps, [&] { linear_forward(x.data(), w.data(), b.data(), y2.data(), n, in, out); });
        c.bitwise = std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0;
        cases.push_back(c);
    }

    {
        const int n = 16, c = 64, hw = 64 * 64;
        auto x = randu(static_cast<size_t>(n) * c * hw, rng);
        auto gamma = randu(static_cast<size_t>(c), rng);
        auto beta = randu(static_cast<size_t>(c), rng);
        std::vector<double> rm1(c, 0.0), rv1(c, 1.0), rm2(c, 0.0), rv2(c, 1.0);
        std::vector<double> y1(x.size()), y2(x.size()), sm1(c), si1(c), sm2(c), si2(c);
        Case bc{"batchnorm_forward_train 16x64x64x64"};
        bc.serial_s = time_best_of(reps, [&] {
            std::fill(rm1.begin(), rm1.end(), 0.0);
            std::fill(rv1.begin(), rv1.end(), 1.0);
            ref::batchnorm_forward_train(x.data(), gamma.data(), beta.data(), rm1.data(), rv1.data(),
                                         0.1, 1e-5, y1.data(), sm1.data(), si1.data(), n, c, hw);
        });
        bc.omp_s = time_best_of(reps, [&] {
            std::fill(rm2.begin(), rm2.end(), 0.0);
            std::fill(rv2.begin(), rv2.end(), 1.0);
            batchnorm_forward_train(x.data(), gamma.data(), beta.data(), rm2.data(), rv2.data(),
                                    0.1, 1e-5, y2.data(), sm2.data(), si2.data(), n, c, hw);
        });
        bc.bitwise = std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0 &&
                     std::memcmp(rv1.data(), rv2.data(), rv1.size() * sizeof(double)) == 0;
        cases.push_back(bc);
    }

    std::printf("threads=%d reps=%d (best-of timing)\n", omp_get_max_threads(), reps);
    std::printf("%-42s %10s %10s %8s %s\n", "kernel", "serial[s]", "omp[s]", "speedup", "bitwise");
    bool all_ok = true;
    for (const Case& c : cases) {
        std::printf("%-42s %10.4f %10.4f %8.2fx %s\n", c.name.c_str(), c.serial_s, c.omp_s,
                    c.serial_s / c.omp_s, c.bitwise ? "yes" : "NO");
        all_ok = all_ok && c.bitwise;
    }
    return all_ok ? 0 : 1;
}
