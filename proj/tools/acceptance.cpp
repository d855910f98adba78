// Acceptance gate for the library: nine pinned criteria, one [PASS]/[FAIL]
// line each, exit code = number of failures. Tolerances, seeds, and time
// budgets live here in code so a regression is a diff, not a judgement call.
//
//   acceptance                 run everything
//   acceptance --only N        run a single criterion
//   acceptance --print-oracle  emit the desk-regression table as source to
//                              re-pin after an intentional behavior change

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "geos/datasets.hpp"
#include "geos/errors.hpp"
#include "geos/evalproto.hpp"
#include "geos/image.hpp"
#include "geos/netcore.hpp"
#include "geos/osadapt.hpp"
#include "geos/permset.hpp"
#include "geos/rng.hpp"
#include "geos/sstasks.hpp"
#include "geos/tensor.hpp"
#include "geos/trainer.hpp"

namespace {

using namespace geos;
using Clock = std::chrono::steady_clock;

bool g_print_oracle = false;

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void expect(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back(what);
        }
    }
    void note(const std::string& what) { notes.push_back(what); }
};

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- fixtures

net::BuildConfig small_desk(int classes, int pretext, uint64_t seed) {
    net::BuildConfig cfg;
    cfg.profile = "desk_cnn";
    cfg.input_size = 12;
    cfg.input_channels = 3;
    cfg.num_classes = classes;
    cfg.num_pretext = pretext;
    cfg.seed = seed;
    cfg.desk_channels = {2, 3, 4, 4};
    cfg.zero_init_refine = false;
    return cfg;
}

net::BuildConfig small_resnet(int classes, int pretext, uint64_t seed) {
    net::BuildConfig cfg;
    cfg.profile = "resnet18";
    cfg.input_size = 32;
    cfg.input_channels = 3;
    cfg.num_classes = classes;
    cfg.num_pretext = pretext;
    cfg.seed = seed;
    cfg.zero_init_refine = false;
    return cfg;
}

Tensor random_input(int n, const net::BuildConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    Tensor x({n, cfg.input_channels, cfg.input_size, cfg.input_size});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
    return x;
}

bool grads_exactly_zero(const std::vector<net::Param*>& group, std::string* offender) {
    for (const net::Param* p : group)
        for (int64_t i = 0; i < p->grad.numel(); ++i)
            if (p->grad[i] != 0.0) {
                if (offender != nullptr) *offender = p->name;
                return false;
            }
    return true;
}

bool grads_any_nonzero(const std::vector<net::Param*>& group) {
    std::string ignore;
    return !grads_exactly_zero(group, &ignore);
}

int64_t param_count(const std::vector<net::Param*>& group) {
    int64_t n = 0;
    for (const net::Param* p : group) n += p->value.numel();
    return n;
}

bool snapshots_equal(const net::LambdaSnapshot& a, const net::LambdaSnapshot& b) {
    if (a.state.size() != b.state.size()) return false;
    for (size_t i = 0; i < a.state.size(); ++i) {
        if (a.state[i].first != b.state[i].first) return false;
        if (!a.state[i].second.bitwise_equal(b.state[i].second)) return false;
    }
    return true;
}

// ------------------------------------------------- 1. isolation exactness

Outcome criterion_isolation() {
    Outcome o;
    const std::vector<net::BuildConfig> profiles = {small_desk(3, 4, 7), small_resnet(5, 6, 3)};
    for (const net::BuildConfig& base : profiles) {
        net::GeosModel m = net::GeosModel::build(base);
        const Tensor x = random_input(2, base, 13);
        std::string offender;

        m.zero_grad();
        auto po = m.forward_primary(x, true);
        m.backward_primary(net::cross_entropy(po.primary_logits, {0, 1}).dlogits);
        o.expect(grads_exactly_zero(m.lambda_params(), &offender),
                 base.profile + ": primary loss leaked into " + offender);
        o.expect(grads_any_nonzero(m.theta_params()),
                 base.profile + ": primary loss produced no backbone gradient");

        m.zero_grad();
        auto ao = m.forward_auxiliary(x, true);
        m.backward_auxiliary(net::cross_entropy(ao.pretext_logits, {1, 2}).dlogits);
        o.expect(grads_exactly_zero(m.theta_params(), &offender),
                 base.profile + ": auxiliary loss leaked into " + offender);
        o.expect(grads_any_nonzero(m.lambda_params()),
                 base.profile + ": auxiliary loss produced no block gradient");

        net::BuildConfig open = base;
        open.isolation = false;
        net::GeosModel c = net::GeosModel::build(open);
        c.zero_grad();
        auto cpo = c.forward_primary(x, true);
        c.backward_primary(net::cross_entropy(cpo.primary_logits, {0, 1}).dlogits);
        o.expect(grads_any_nonzero(c.lambda_params()),
                 base.profile + ": coupled primary loss shows no cross gradient");
        c.zero_grad();
        auto cao = c.forward_auxiliary(x, true);
        c.backward_auxiliary(net::cross_entropy(cao.pretext_logits, {1, 2}).dlogits);
        o.expect(grads_any_nonzero(c.theta_params()),
                 base.profile + ": coupled auxiliary loss shows no cross gradient");
    }
    return o;
}

// ------------------------------------------------ 2. gradient correctness

enum class WhichLoss { primary, auxiliary };

double loss_at(const net::GeosModel& src, WhichLoss which, const Tensor& x,
               const std::vector<int>& y) {
    net::GeosModel m = src.clone();
    auto out = which == WhichLoss::primary ? m.forward_primary(x, true)
                                           : m.forward_auxiliary(x, true);
    const Tensor& logits =
        which == WhichLoss::primary ? out.primary_logits : out.pretext_logits;
    return net::cross_entropy(logits, y).loss;
}

double worst_fd_error(net::GeosModel& m, WhichLoss which, const std::vector<net::Param*>& group,
                      const Tensor& x, const std::vector<int>& y) {
    m.zero_grad();
    auto out =
        which == WhichLoss::primary ? m.forward_primary(x, true) : m.forward_auxiliary(x, true);
    auto lg = net::cross_entropy(
        which == WhichLoss::primary ? out.primary_logits : out.pretext_logits, y);
    if (which == WhichLoss::primary)
        m.backward_primary(lg.dlogits);
    else
        m.backward_auxiliary(lg.dlogits);

    std::vector<Tensor> grads;
    for (const net::Param* p : group) grads.push_back(p->grad);

    const double h = 1e-5;
    double worst = 0.0;
    for (size_t pi = 0; pi < group.size(); ++pi) {
        net::Param* p = group[pi];
        for (int64_t e = 0; e < p->value.numel(); ++e) {
            const double orig = p->value[e];
            p->value[e] = orig + h;
            const double lp = loss_at(m, which, x, y);
            p->value[e] = orig - h;
            const double lm = loss_at(m, which, x, y);
            p->value[e] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double g = grads[pi][e];
            const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
            worst = std::max(worst, std::abs(fd - g) / denom);
        }
    }
    return worst;
}

Outcome criterion_gradients() {
    Outcome o;
    const double kTol = 1e-4;
    net::BuildConfig cfg = small_desk(3, 4, 7);
    net::GeosModel m = net::GeosModel::build(cfg);
    const int64_t params = param_count(m.theta_params()) + param_count(m.lambda_params());
    o.note("toy network holds " + std::to_string(params) + " parameters");
    o.expect(params <= 1000, "toy network exceeds 1000 parameters");

    const Tensor x = random_input(2, cfg, 21);

    // Isolation only severs backbone paths, so the block gradient of the
    // auxiliary loss is a complete derivative and FD applies directly.
    const double ea = worst_fd_error(m, WhichLoss::auxiliary, m.lambda_params(), x, {1, 3});
    o.expect(ea < kTol, "auxiliary/block mismatch " + format_double(ea));

    // Under isolation the primary backward deliberately skips the
    // backbone-through-block path; zeroing the refinement conv makes that
    // path carry zero true gradient, so FD is again an exact oracle.
    net::BuildConfig zr = cfg;
    zr.zero_init_refine = true;
    net::GeosModel z = net::GeosModel::build(zr);
    const double ep = worst_fd_error(z, WhichLoss::primary, z.theta_params(), x, {0, 2});
    o.expect(ep < kTol, "primary/backbone mismatch " + format_double(ep));

    // With coupling enabled nothing is severed: all four group/loss
    // combinations must match the full derivative.
    net::BuildConfig open = cfg;
    open.isolation = false;
    net::GeosModel c = net::GeosModel::build(open);
    const double cpt = worst_fd_error(c, WhichLoss::primary, c.theta_params(), x, {0, 2});
    o.expect(cpt < kTol, "coupled primary/backbone mismatch " + format_double(cpt));
    const double cpl = worst_fd_error(c, WhichLoss::primary, c.lambda_params(), x, {0, 2});
    o.expect(cpl < kTol, "coupled primary/block mismatch " + format_double(cpl));
    const double cat = worst_fd_error(c, WhichLoss::auxiliary, c.theta_params(), x, {1, 3});
    o.expect(cat < kTol, "coupled auxiliary/backbone mismatch " + format_double(cat));
    const double cal = worst_fd_error(c, WhichLoss::auxiliary, c.lambda_params(), x, {1, 3});
    o.expect(cal < kTol, "coupled auxiliary/block mismatch " + format_double(cal));
    o.note("worst relative error " +
           format_double(std::max({ea, ep, cpt, cpl, cat, cal})) + " (tolerance " +
           format_double(kTol) + ")");
    return o;
}

// ------------------------------------------------- 3. hand-oracle sgd step

net::Param* find_param(net::GeosModel& m, const std::string& name) {
    for (net::Param* p : m.theta_params())
        if (p->name == name) return p;
    for (net::Param* p : m.lambda_params())
        if (p->name == name) return p;
    return nullptr;
}

void set_scalar(net::GeosModel& m, const std::string& name, const std::vector<double>& values,
                bool trainable) {
    net::Param* p = find_param(m, name);
    for (size_t i = 0; i < values.size(); ++i) p->value[static_cast<int64_t>(i)] = values[i];
    p->trainable = trainable;
}

// One scalar weight per group; both heads are frozen selectors [1, 0] so the
// two losses reduce to logistic closed forms.
net::GeosModel scalar_model(double theta, double lambda) {
    net::BuildConfig cfg;
    cfg.profile = "toy_scalar";
    cfg.input_size = 1;
    cfg.input_channels = 1;
    cfg.num_classes = 2;
    cfg.num_pretext = 2;
    auto feats = std::make_unique<net::Sequential>("theta/features");
    feats->add(std::make_unique<net::Conv2d>("theta/features.conv", 1, 1, 1, 1, 0, false));
    auto head = std::make_unique<net::Linear>("theta/head", 1, 2, true);
    auto trunk = std::make_unique<net::Sequential>("lambda/trunk");
    trunk->add(std::make_unique<net::Conv2d>("lambda/trunk.conv", 1, 1, 1, 1, 0, false));
    auto refine = std::make_unique<net::Conv2d>("lambda/refine", 1, 1, 1, 1, 0, true);
    auto lhead = std::make_unique<net::Linear>("lambda/head", 1, 2, true);
    net::GeosModel m(cfg, std::move(feats), std::move(head), std::move(trunk), std::move(refine),
                     std::move(lhead));
    set_scalar(m, "theta/features.conv.weight", {theta}, true);
    set_scalar(m, "theta/head.weight", {1.0, 0.0}, false);
    set_scalar(m, "theta/head.bias", {0.0, 0.0}, false);
    set_scalar(m, "lambda/trunk.conv.weight", {lambda}, true);
    set_scalar(m, "lambda/refine.weight", {1.0}, false);
    set_scalar(m, "lambda/refine.bias", {0.0}, false);
    set_scalar(m, "lambda/head.weight", {1.0, 0.0}, false);
    set_scalar(m, "lambda/head.bias", {0.0, 0.0}, false);
    return m;
}

Outcome criterion_sgd_oracle() {
    Outcome o;
    const double x = 0.7, xa = -0.4;
    const double lr = 0.1, mu = 0.9, wd = 0.01, alpha = 2.0;
    double theta = 0.8, lambda = -0.3;

    train::TrainState state(scalar_model(theta, lambda));
    train::TrainConfig cfg;
    cfg.mode = train::Mode::dg;
    cfg.alpha = alpha;
    cfg.lr_main = lr;
    cfg.lr_head = lr;
    cfg.momentum = mu;
    cfg.weight_decay = wd;
    state.optimizer = train::Optimizer(cfg.optimizer, lr, lr, mu, wd);

    train::Batch pb;
    pb.x = Tensor({1, 1, 1, 1});
    pb.x[0] = x;
    pb.labels = {0};
    pb.id = "oracle-primary";
    train::Batch ab;
    ab.x = Tensor({1, 1, 1, 1});
    ab.x[0] = xa;
    ab.labels = {1};
    ab.id = "oracle-auxiliary";

    // Closed forms: the primary logit is s = theta*x + lambda*theta*x with
    // isolation hiding the lambda path from the gradient; the pretext logit
    // is t = lambda*theta*x_a with the backbone frozen in the backward pass.
    double vt = 0.0, vl = 0.0;
    for (int step = 0; step < 2; ++step) {
        const double s = theta * x + lambda * theta * x;
        const double p0 = 1.0 / (1.0 + std::exp(-s));
        const double t = lambda * theta * xa;
        const double pa0 = 1.0 / (1.0 + std::exp(-t));
        train::train_step(state, cfg, pb, &ab);
        // Both gradients read the pre-step weights; the optimizer then
        // applies momentum and decay to each group.
        vt = mu * vt + (p0 - 1.0) * x + wd * theta;
        vl = mu * vl + alpha * pa0 * theta * xa + wd * lambda;
        theta -= lr * vt;
        lambda -= lr * vl;
    }
    const double got_theta = find_param(state.model, "theta/features.conv.weight")->value[0];
    const double got_lambda = find_param(state.model, "lambda/trunk.conv.weight")->value[0];
    o.expect(std::abs(got_theta - theta) < 1e-6,
             "backbone weight " + format_double(got_theta) + " vs closed form " +
                 format_double(theta));
    o.expect(std::abs(got_lambda - lambda) < 1e-6,
             "block weight " + format_double(got_lambda) + " vs closed form " +
                 format_double(lambda));
    return o;
}

// ---------------------------------------------------- 4. permutation sets

int local_min_hamming(const std::vector<perms::Permutation>& ps) {
    int best = static_cast<int>(ps.front().mapping.size());
    for (size_t i = 0; i < ps.size(); ++i)
        for (size_t j = i + 1; j < ps.size(); ++j) {
            int d = 0;
            for (size_t k = 0; k < ps[i].mapping.size(); ++k)
                d += ps[i].mapping[k] != ps[j].mapping[k];
            best = std::min(best, d);
        }
    return best;
}

void best_subset(const std::vector<perms::Permutation>& all, size_t start,
                 std::vector<const perms::Permutation*>& chosen, size_t want, int* best) {
    if (chosen.size() == want) {
        int d = static_cast<int>(all.front().mapping.size());
        for (size_t i = 0; i < chosen.size(); ++i)
            for (size_t j = i + 1; j < chosen.size(); ++j) {
                int h = 0;
                for (size_t k = 0; k < chosen[i]->mapping.size(); ++k)
                    h += chosen[i]->mapping[k] != chosen[j]->mapping[k];
                d = std::min(d, h);
            }
        *best = std::max(*best, d);
        return;
    }
    if (all.size() - start < want - chosen.size()) return;
    for (size_t i = start; i < all.size(); ++i) {
        chosen.push_back(&all[i]);
        best_subset(all, i + 1, chosen, want, best);
        chosen.pop_back();
    }
}

int exhaustive_optimum(int n, int v) {
    std::vector<int> base(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) base[static_cast<size_t>(i)] = i;
    std::vector<perms::Permutation> all;
    do {
        all.push_back({base});
    } while (std::next_permutation(base.begin(), base.end()));
    std::vector<const perms::Permutation*> chosen;
    int best = 0;
    best_subset(all, 0, chosen, static_cast<size_t>(v), &best);
    return best;
}

Outcome criterion_permset() {
    Outcome o;
    const perms::PermutationSet a = perms::generate(9, 30, 7);
    const perms::PermutationSet b = perms::generate(9, 30, 7);
    o.expect(a == b, "two identically seeded generations differ");

    std::set<std::vector<int>> distinct;
    for (const auto& p : a.permutations) distinct.insert(p.mapping);
    o.expect(distinct.size() == 30, "generated set holds duplicates");
    o.expect(a.min_pairwise_hamming == local_min_hamming(a.permutations),
             "cached pairwise distance disagrees with a local rescan");
    o.note("n=9 V=30: min pairwise hamming " + std::to_string(a.min_pairwise_hamming));

    for (int v = 2; v <= 6; ++v) {
        const int opt = exhaustive_optimum(3, v);
        for (uint64_t seed : {0ULL, 1ULL}) {
            const auto s = perms::generate(3, v, seed);
            o.expect(s.min_pairwise_hamming == opt,
                     "n=3 V=" + std::to_string(v) + " greedy " +
                         std::to_string(s.min_pairwise_hamming) + " vs optimum " +
                         std::to_string(opt));
        }
    }
    for (int v : {2, 3, 4, 6, 8}) {
        const int opt = exhaustive_optimum(4, v);
        for (uint64_t seed : {0ULL, 1ULL}) {
            const auto s = perms::generate(4, v, seed);
            o.expect(s.min_pairwise_hamming == opt,
                     "n=4 V=" + std::to_string(v) + " greedy " +
                         std::to_string(s.min_pairwise_hamming) + " vs optimum " +
                         std::to_string(opt));
        }
    }
    return o;
}

// --------------------------------------------------- 5. transform oracles

// Hand-rolled inversion: variant tile i was taken from plain tile mapping[i],
// so copying variant tile i back to slot mapping[i] restores the plain image.
Image hand_unscramble(const Image& v, const perms::Permutation& p, int rows, int cols) {
    Image out(v.h, v.w, v.c);
    const int th = v.h / rows, tw = v.w / cols;
    for (int i = 0; i < rows * cols; ++i) {
        const int sy = (i / cols) * th, sx = (i % cols) * tw;
        const int dy = (p.mapping[static_cast<size_t>(i)] / cols) * th;
        const int dx = (p.mapping[static_cast<size_t>(i)] % cols) * tw;
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x)
                for (int ch = 0; ch < v.c; ++ch)
                    out.at(dy + y, dx + x, ch) = v.at(sy + y, sx + x, ch);
    }
    return out;
}

Outcome criterion_transforms() {
    Outcome o;
    data::SynthSpec ss;
    ss.num_domains = 2;
    ss.num_classes = 5;
    ss.samples_per_domain_class = 1;
    ss.resolution = 24;
    ss.seed = 19;
    const data::DomainDataset ds = data::synthesize(ss);
    const perms::PermutationSet set = perms::generate(9, 30, 0);

    perms::PermutationSet idset;
    idset.n = 9;
    idset.seed = 0;
    idset.permutations = {perms::Permutation::identity(9)};
    idset.min_pairwise_hamming = perms::brute_force_min_hamming(idset.permutations);

    const Image plain = tasks::prepare_plain(to_float(ds.samples[0].image), 24);
    o.expect(tasks::scramble(plain, perms::Permutation::identity(9), 3, 3, idset).image == plain,
             "identity permutation moved pixels");
    o.expect(tasks::rotate(plain, 0).image == plain, "zero rotation moved pixels");

    const perms::Permutation& p5 = set.permutations[5];
    o.expect(hand_unscramble(tasks::scramble(plain, p5, 3, 3, set).image, p5, 3, 3) == plain,
             "permutation followed by its inverse is not the identity");
    Image turned = plain;
    for (int i = 0; i < 4; ++i) turned = tasks::rotate(turned, 1).image;
    o.expect(turned == plain, "four quarter turns drifted");

    std::vector<Image> floats;
    std::vector<tasks::SourceSample> sources;
    for (size_t i = 0; i < ds.samples.size(); ++i) floats.push_back(to_float(ds.samples[i].image));
    for (size_t i = 0; i < ds.samples.size(); ++i)
        sources.push_back({&floats[i], ds.samples[i].id});
    tasks::AugmentConfig aug;
    aug.enabled = false;
    aug.crop_size = 24;

    int mismatches = 0;
    const auto jig = tasks::make_ss_batch(sources, tasks::Task::jigsaw, &set, 500, 77, aug, 3, 3);
    for (const auto& v : jig) {
        const Image* src = nullptr;
        for (size_t i = 0; i < sources.size(); ++i)
            if (sources[i].id == v.source_id) src = sources[i].image;
        const Image expected = tasks::prepare_plain(*src, 24);
        const perms::Permutation& p = set.permutations[static_cast<size_t>(v.label)];
        if (!(hand_unscramble(v.image, p, 3, 3) == expected)) ++mismatches;
    }
    const auto rot =
        tasks::make_ss_batch(sources, tasks::Task::rotation, nullptr, 500, 78, aug, 3, 3);
    for (const auto& v : rot) {
        const Image* src = nullptr;
        for (size_t i = 0; i < sources.size(); ++i)
            if (sources[i].id == v.source_id) src = sources[i].image;
        const Image expected = tasks::prepare_plain(*src, 24);
        if (!(rotate90(v.image, (4 - v.label) % 4) == expected)) ++mismatches;
    }
    o.expect(mismatches == 0,
             std::to_string(mismatches) + " of 1000 variants failed label inversion");
    o.note("1000 seeded variants inverted, " + std::to_string(mismatches) + " mismatches");
    return o;
}

// -------------------------------------- 6. one-sample adaptation contracts

Outcome criterion_adaptation_contracts() {
    Outcome o;
    data::SynthSpec ss;
    ss.num_domains = 4;
    ss.num_classes = 5;
    ss.samples_per_domain_class = 5;
    ss.resolution = 12;
    ss.seed = 31;
    const data::DomainDataset ds = data::synthesize(ss);  // exactly 100 samples
    o.expect(ds.samples.size() == 100, "sweep fixture is not 100 samples");

    const perms::PermutationSet set = perms::generate(4, 4, 1);
    net::GeosModel model = net::GeosModel::build(small_desk(5, 4, 11));

    osa::OSConfig os;
    os.iterations = 2;
    os.batch_size = 8;
    os.lr = 0.01;
    os.seed = 23;

    // Budget zero leaves inference bitwise untouched.
    {
        osa::OSConfig zero = os;
        zero.iterations = 0;
        net::GeosModel m = model.clone();
        const Image im = to_float(ds.samples[3].image);
        const auto [pred, trace] = osa::adapt_and_predict(m, im, "c6-zero", zero, &set);
        net::GeosModel fresh = model.clone();
        const Image plain = tasks::prepare_plain(im, 12);
        const auto direct = fresh.forward_primary(net::batch_to_tensor({&plain}), false);
        o.expect(trace.post_logits.bitwise_equal(direct.primary_logits),
                 "zero-budget logits differ from plain inference");
        o.expect(trace.aux_losses.empty() && pred == net::argmax_rows(direct.primary_logits)[0],
                 "zero-budget trace carries adaptation state");
    }

    // Backbone checksum and block state survive a 100-sample sweep.
    {
        net::GeosModel m = model.clone();
        const auto theta_before = m.theta_checksum();
        const auto lambda_before = m.snapshot_lambda();
        std::vector<size_t> all(ds.samples.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        const auto sweep = osa::adapt_batch(m, ds, all, os, &set);
        o.expect(sweep.rows.size() == 100, "sweep dropped samples");
        o.expect(m.theta_checksum() == theta_before, "backbone changed during the sweep");
        o.expect(snapshots_equal(m.snapshot_lambda(), lambda_before),
                 "block state not restored after the sweep");

        // Order independence: a reversed subset reproduces the same rows.
        const std::vector<size_t> subset = {5, 17, 40, 77};
        std::vector<size_t> reversed(subset.rbegin(), subset.rend());
        const auto fwd = osa::adapt_batch(m, ds, subset, os, &set);
        const auto rev = osa::adapt_batch(m, ds, reversed, os, &set);
        for (const auto& row : fwd.rows) {
            const auto it = std::find_if(rev.rows.begin(), rev.rows.end(),
                                         [&](const osa::SweepRow& r) {
                                             return r.sample_index == row.sample_index;
                                         });
            o.expect(it != rev.rows.end() && it->predicted == row.predicted &&
                         it->aux_losses == row.aux_losses,
                     "processing order changed a per-sample result");
        }
    }

    // Injected failure: the block is restored even when adaptation diverges.
    {
        net::GeosModel m = model.clone();
        const auto theta_before = m.theta_checksum();
        const auto lambda_before = m.snapshot_lambda();
        osa::OSConfig hot = os;
        hot.lr = 1e308;
        hot.iterations = 5;
        bool threw = false;
        try {
            osa::adapt_and_predict(m, to_float(ds.samples[9].image), "c6-diverge", hot, &set);
        } catch (const AdaptationDivergenceError&) {
            threw = true;
        }
        o.expect(threw, "runaway adaptation did not raise a divergence error");
        o.expect(m.theta_checksum() == theta_before, "backbone changed on the failure path");
        o.expect(snapshots_equal(m.snapshot_lambda(), lambda_before),
                 "block state not restored on the failure path");
    }
    return o;
}

// ------------------------------------------------- 7. desk-scale regression

struct OracleRow {
    const char* target;
    const char* method;
    int os_iterations;
    int run;
    double accuracy;
};

// Pinned first-run results of the desk regression below. Regenerate with
// --print-oracle after an intentional numerical change.
const std::vector<OracleRow> kDeskOracle = {};

data::DomainDataset desk_dataset() {
    data::SynthSpec ss;
    ss.num_domains = 4;
    ss.num_classes = 7;
    ss.samples_per_domain_class = 6;
    ss.resolution = 24;
    ss.seed = 42;
    return data::synthesize(ss);
}

train::TrainConfig desk_config() {
    train::TrainConfig tc;
    tc.alpha = 2.0;
    tc.lr_main = 0.01;
    tc.lr_head = 0.01;
    tc.momentum = 0.9;
    tc.weight_decay = 5e-4;
    tc.epochs = 8;
    tc.batch_size_primary = 16;
    tc.batch_size_auxiliary = 16;
    tc.val_fraction = 0.1;
    return tc;
}

Outcome criterion_desk_regression() {
    Outcome o;
    const auto started = Clock::now();
    const data::DomainDataset ds = desk_dataset();
    const perms::PermutationSet set = perms::generate(9, 30, 0);

    proto::ProtocolSpec spec;
    spec.protocol = proto::Protocol::dg_loo;
    spec.repetitions = 3;
    spec.methods = {proto::Method::ges, proto::Method::geos};
    spec.os_iterations = 3;
    spec.os_batch_size = 32;
    spec.config = desk_config();
    spec.perm_set = &set;
    spec.seed = 42;
    spec.arch.profile = "desk_cnn";
    spec.arch.input_size = 24;
    spec.arch.input_channels = 3;
    spec.arch.num_classes = 7;
    spec.arch.num_pretext = 30;
    spec.arch.zero_init_refine = false;

    const proto::ProtocolResult result = proto::run_dg_loo(ds, spec);

    if (g_print_oracle) {
        std::printf("const std::vector<OracleRow> kDeskOracle = {\n");
        for (const auto& row : result.rows)
            std::printf("    {\"%s\", \"%s\", %d, %d, %s},\n", row.target.c_str(),
                        proto::to_string(row.method).c_str(), row.os_iterations, row.run,
                        format_double(row.accuracy).c_str());
        std::printf("};\n");
    }

    o.expect(!proto::any_failed(result), "a regression cell failed to train or adapt");
    if (kDeskOracle.empty()) {
        o.expect(false, "no oracle pinned; run with --print-oracle and paste the table");
    } else {
        o.expect(result.rows.size() == kDeskOracle.size(),
                 "row count " + std::to_string(result.rows.size()) + " vs pinned " +
                     std::to_string(kDeskOracle.size()));
        for (size_t i = 0; i < std::min(result.rows.size(), kDeskOracle.size()); ++i) {
            const auto& got = result.rows[i];
            const auto& want = kDeskOracle[i];
            const bool same = got.target == want.target &&
                              proto::to_string(got.method) == want.method &&
                              got.os_iterations == want.os_iterations && got.run == want.run &&
                              got.accuracy == want.accuracy;
            o.expect(same, "row " + std::to_string(i) + " (" + got.target + "/" +
                               proto::to_string(got.method) + "/it" +
                               std::to_string(got.os_iterations) + "/run" +
                               std::to_string(got.run) + ") accuracy " +
                               format_double(got.accuracy) + " vs pinned " +
                               format_double(want.accuracy));
        }
    }

    // Adaptation must actually lower the pretext loss: compare each sample's
    // final recorded loss against a zero-rate control that replays the exact
    // same variant batches with frozen weights. Same batches, same batch-stat
    // normalization; only the learned update differs.
    train::TrainConfig tc = desk_config();
    tc.seed = 9;
    train::FitOptions opts;
    opts.perm_set = &set;
    const std::vector<std::string> sources = {"dom_b", "dom_c", "dom_d"};
    auto fitted = train::fit(tc, spec.arch, proto::protocol_training_set(ds, sources, {}),
                             sources, {}, opts);
    const auto idx = ds.domain_indices("dom_a");
    osa::OSConfig os;
    os.iterations = 3;
    os.batch_size = 32;
    os.lr = 0.01;
    os.seed = 11;
    const auto adapted = osa::adapt_batch(fitted.state.model, ds, idx, os, &set);
    osa::OSConfig frozen = os;
    frozen.lr = 0.0;
    const auto control = osa::adapt_batch(fitted.state.model, ds, idx, frozen, &set);
    int improved = 0;
    for (size_t i = 0; i < adapted.rows.size(); ++i)
        improved += adapted.rows[i].aux_losses.back() < control.rows[i].aux_losses.back();
    const int needed = static_cast<int>(std::ceil(0.9 * static_cast<double>(idx.size())));
    o.note("pretext loss fell for " + std::to_string(improved) + "/" +
           std::to_string(idx.size()) + " adapted samples (need " + std::to_string(needed) +
           ")");
    o.expect(improved >= needed, "adaptation failed the 90% pretext-descent threshold");

    const double elapsed = std::chrono::duration<double>(Clock::now() - started).count();
    o.expect(elapsed < 900.0,
             "regression took " + format_double(elapsed) + " s against the 900 s budget");
    return o;
}

// ------------------------------------------------------ 8. protocol audits

Outcome criterion_protocol_audits() {
    Outcome o;
    data::SynthSpec ss;
    ss.num_domains = 3;
    ss.num_classes = 3;
    ss.samples_per_domain_class = 4;
    ss.resolution = 12;
    ss.seed = 5;
    const data::DomainDataset ds = data::synthesize(ss);
    const perms::PermutationSet set = perms::generate(4, 4, 1);

    proto::ProtocolSpec spec;
    spec.protocol = proto::Protocol::dg_loo;
    spec.repetitions = 2;
    spec.methods = {proto::Method::ges};
    spec.os_iterations = 1;
    spec.os_batch_size = 8;
    spec.config = desk_config();
    spec.config.epochs = 2;
    spec.config.val_fraction = 0.25;
    spec.config.alpha = 1.0;
    spec.perm_set = &set;
    spec.seed = 17;
    spec.arch = small_desk(3, 4, 7);

    // Held-out domains never intersect the training stream.
    const proto::ProtocolResult dg = proto::run_dg_loo(ds, spec);
    o.expect(dg.rows.size() == 12 && dg.audit.cells == 6 && !proto::any_failed(dg),
             "held-out protocol did not produce its full table");
    o.expect(dg.audit.leaked_ids == 0, "target ids leaked into dg training");
    for (const auto& target : ds.domain_names) {
        std::vector<std::string> rest;
        for (const auto& d : ds.domain_names)
            if (d != target) rest.push_back(d);
        const auto train_set = proto::protocol_training_set(ds, rest, {});
        std::set<std::string> target_ids;
        for (size_t i : ds.domain_indices(target)) target_ids.insert(ds.samples[i].id);
        size_t overlap = 0;
        for (const auto& s : train_set.samples) overlap += target_ids.count(s.id);
        o.expect(overlap == 0, "dg training set still holds " + std::to_string(overlap) +
                                   " ids from " + target);
    }

    // The unlabeled-target protocol strips exactly the target domain, so the
    // only samples eligible for the auxiliary stream are target ids.
    proto::ProtocolSpec da = spec;
    da.protocol = proto::Protocol::da_multi;
    da.repetitions = 1;
    const proto::ProtocolResult dar = proto::run_da(ds, "dom_b", da);
    o.expect(!proto::any_failed(dar) && dar.audit.stripped_cells == 1 &&
                 dar.audit.leaked_ids == 0,
             "unlabeled-target run did not audit clean");
    const auto da_set = proto::protocol_training_set(ds, {"dom_a", "dom_c"}, {"dom_b"});
    bool labels_clean = true;
    for (const auto& s : da_set.samples)
        labels_clean = labels_clean &&
                       (s.domain == "dom_b" ? s.label == proto::kStrippedLabel : s.label >= 0);
    o.expect(labels_clean, "label stripping missed a sample");

    // Stripped labels are unreadable by construction: routing one into the
    // labeled path throws, so a completed run proves they went unread.
    bool sentinel_throws = false;
    try {
        train::FitOptions opts;
        opts.perm_set = &set;
        train::fit(spec.config, spec.arch, proto::protocol_training_set(ds, {}, {"dom_a"}),
                   {"dom_a"}, {}, opts);
    } catch (const Error&) {
        sentinel_throws = true;
    }
    o.expect(sentinel_throws, "a stripped label was read without an error");

    proto::ProtocolSpec pda = spec;
    pda.protocol = proto::Protocol::pda_pairs;
    pda.repetitions = 1;
    pda.full_sweep = true;
    const proto::ProtocolResult pr = proto::run_pda(ds, pda);
    o.expect(!proto::any_failed(pr) && pr.audit.stripped_cells == 6,
             "pair protocol did not strip every auxiliary pool");

    // Emitted aggregates agree with a row-level recomputation.
    const auto groups = proto::aggregate(dg);
    double worst = 0.0;
    for (const auto& g : groups) {
        double overall = 0.0;
        for (const auto& [target, mean] : g.per_target) {
            double sum = 0.0;
            int count = 0;
            for (const auto& row : dg.rows)
                if (row.target == target && row.method == g.method &&
                    row.os_iterations == g.os_iterations && !row.failed) {
                    sum += row.accuracy;
                    ++count;
                }
            worst = std::max(worst, std::abs(mean - sum / count));
            overall += mean;
        }
        worst = std::max(worst, std::abs(g.overall - overall / static_cast<double>(
                                                                   g.per_target.size())));
    }
    o.note("worst aggregate deviation " + format_double(worst));
    o.expect(worst <= 1e-12, "aggregates drift from row recomputation");
    return o;
}

// ------------------------------------------------- 9. rotation ablation

Outcome criterion_rotation_ablation() {
    Outcome o;
    data::SynthSpec ss;
    ss.num_domains = 2;
    ss.num_classes = 3;
    ss.samples_per_domain_class = 4;
    ss.resolution = 12;
    ss.seed = 5;
    const data::DomainDataset ds = data::synthesize(ss);

    proto::ProtocolSpec spec;
    spec.protocol = proto::Protocol::dg_loo;
    spec.repetitions = 1;
    spec.methods = {proto::Method::ges_rotation, proto::Method::geos_rotation};
    spec.os_iterations = 1;
    spec.os_batch_size = 8;
    spec.config = desk_config();
    spec.config.epochs = 2;
    spec.config.val_fraction = 0.25;
    spec.config.alpha = 1.0;
    spec.seed = 29;
    spec.arch = small_desk(3, 4, 7);

    const proto::ProtocolResult result = proto::run_dg_loo(ds, spec);
    o.expect(result.rows.size() == 4, "expected one row per rotation method per target");
    o.expect(!proto::any_failed(result), "a rotation cell failed");
    for (size_t i = 0; i + 1 < result.rows.size(); i += 2) {
        o.expect(result.rows[i].method == proto::Method::ges_rotation &&
                     result.rows[i + 1].method == proto::Method::geos_rotation,
                 "rotation rows out of order at " + std::to_string(i));
        o.expect(result.rows[i].accuracy >= 0.0 && result.rows[i].accuracy <= 1.0 &&
                     result.rows[i + 1].accuracy >= 0.0 && result.rows[i + 1].accuracy <= 1.0,
                 "rotation accuracy out of range");
    }
    return o;
}

struct Criterion {
    int id;
    const char* title;
    double budget_seconds;  // 0 = untimed
    std::function<Outcome()> body;
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--print-oracle") g_print_oracle = true;
        else if (arg == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    }

    const std::vector<Criterion> criteria = {
        {1, "gradient isolation is structurally exact on both profiles", 30.0,
         criterion_isolation},
        {2, "analytic gradients match central finite differences", 60.0, criterion_gradients},
        {3, "one optimizer step matches the scalar closed form", 0.0, criterion_sgd_oracle},
        {4, "permutation sets are deterministic, distinct, and spread-optimal", 120.0,
         criterion_permset},
        {5, "pretext transforms invert exactly and labels recover", 0.0, criterion_transforms},
        {6, "one-sample adaptation honors its state contracts", 0.0,
         criterion_adaptation_contracts},
        {7, "desk-scale regression reproduces its pinned table", 900.0,
         criterion_desk_regression},
        {8, "protocol audits hold and aggregates recompute", 0.0, criterion_protocol_audits},
        {9, "rotation pretext runs the full table end to end", 0.0,
         criterion_rotation_ablation},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o.pass = false;
            o.notes.push_back(std::string("unhandled error: ") + e.what());
        }
        const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        if (c.budget_seconds > 0.0 && elapsed >= c.budget_seconds) {
            o.pass = false;
            o.notes.push_back("exceeded the " + format_double(c.budget_seconds) +
                              " s budget");
        }
        std::printf("[%s] %d. %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.title, elapsed);
        for (const auto& n : o.notes) std::printf("       - %s\n", n.c_str());
        failures += o.pass ? 0 : 1;
    }
    if (only == 0)
        std::printf("acceptance: %d of %zu criteria passed\n",
                    static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures;
}
