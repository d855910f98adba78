#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "geos/errors.hpp"
#include "geos/netcore.hpp"
#include "geos/rng.hpp"

using namespace geos;
using namespace geos::net;

namespace {

BuildConfig tiny_desk() {
    BuildConfig cfg;
    cfg.profile = "desk_cnn";
    cfg.input_size = 12;
    cfg.input_channels = 3;
    cfg.num_classes = 3;
    cfg.num_pretext = 4;
    cfg.seed = 7;
    cfg.desk_channels = {2, 3, 4, 4};
    cfg.zero_init_refine = false;
    return cfg;
}

Tensor random_input(int n, const BuildConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    Tensor x({n, cfg.input_channels, cfg.input_size, cfg.input_size});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
    return x;
}

bool grads_all_zero(const std::vector<Param*>& ps) {
    for (const Param* p : ps)
        for (int64_t i = 0; i < p->grad.numel(); ++i)
            if (p->grad[i] != 0.0) return false;
    return true;
}

bool grads_any_nonzero(const std::vector<Param*>& ps) { return !grads_all_zero(ps); }

int64_t param_count(const std::vector<Param*>& ps) {
    int64_t n = 0;
    for (const Param* p : ps) n += p->value.numel();
    return n;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

enum class Loss { primary, auxiliary };

double eval_loss(const GeosModel& src, Loss which, const Tensor& x, const std::vector<int>& y) {
    GeosModel m = src.clone();
    ForwardOutput out =
        which == Loss::primary ? m.forward_primary(x, true) : m.forward_auxiliary(x, true);
    const Tensor& logits = which == Loss::primary ? out.primary_logits : out.pretext_logits;
    return cross_entropy(logits, y).loss;
}

// Central finite differences over every element of the group, against the
// analytic gradient of one backward pass. Train-mode loss reads batch
// statistics only, so running-buffer side effects cannot skew the probes.
double fd_worst_rel_error(GeosModel& model, Loss which, const std::vector<Param*>& group,
                          const Tensor& x, const std::vector<int>& y) {
    model.zero_grad();
    ForwardOutput out =
        which == Loss::primary ? model.forward_primary(x, true) : model.forward_auxiliary(x, true);
    const Tensor& logits = which == Loss::primary ? out.primary_logits : out.pretext_logits;
    LossGrad lg = cross_entropy(logits, y);
    if (which == Loss::primary)
        model.backward_primary(lg.dlogits);
    else
        model.backward_auxiliary(lg.dlogits);

    std::vector<Tensor> grads;
    grads.reserve(group.size());
    for (const Param* p : group) grads.push_back(p->grad);

    const double h = 1e-5;
    double worst = 0.0;
    for (size_t pi = 0; pi < group.size(); ++pi) {
        Param* p = group[pi];
        for (int64_t e = 0; e < p->value.numel(); ++e) {
            double orig = p->value[e];
            p->value[e] = orig + h;
            double lp = eval_loss(model, which, x, y);
            p->value[e] = orig - h;
            double lm = eval_loss(model, which, x, y);
            p->value[e] = orig;
            double fd = (lp - lm) / (2.0 * h);
            double g = grads[pi][e];
            double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
            worst = std::max(worst, std::abs(fd - g) / denom);
        }
    }
    return worst;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("primary loss leaves every auxiliary gradient at exactly zero") {
    GeosModel m = GeosModel::build(tiny_desk());
    Tensor x = random_input(2, m.config(), 11);
    m.zero_grad();
    ForwardOutput out = m.forward_primary(x, true);
    LossGrad lg = cross_entropy(out.primary_logits, {0, 2});
    m.backward_primary(lg.dlogits);
    CHECK(grads_all_zero(m.lambda_params()));
    CHECK(grads_any_nonzero(m.theta_params()));
}

TEST_CASE("auxiliary loss leaves every backbone gradient at exactly zero") {
    GeosModel m = GeosModel::build(tiny_desk());
    Tensor x = random_input(2, m.config(), 12);
    m.zero_grad();
    ForwardOutput out = m.forward_auxiliary(x, true);
    LossGrad lg = cross_entropy(out.pretext_logits, {1, 3});
    m.backward_auxiliary(lg.dlogits);
    CHECK(grads_all_zero(m.theta_params()));
    CHECK(grads_any_nonzero(m.lambda_params()));
}

TEST_CASE("isolation holds on the deep residual profile") {
    BuildConfig cfg;
    cfg.profile = "resnet18";
    cfg.input_size = 32;
    cfg.num_classes = 5;
    cfg.num_pretext = 6;
    cfg.seed = 3;
    cfg.zero_init_refine = false;
    GeosModel m = GeosModel::build(cfg);
    Tensor x = random_input(1, cfg, 13);

    m.zero_grad();
    ForwardOutput po = m.forward_primary(x, true);
    m.backward_primary(cross_entropy(po.primary_logits, {2}).dlogits);
    CHECK(grads_all_zero(m.lambda_params()));
    CHECK(grads_any_nonzero(m.theta_params()));

    m.zero_grad();
    ForwardOutput ao = m.forward_auxiliary(x, true);
    m.backward_auxiliary(cross_entropy(ao.pretext_logits, {4}).dlogits);
    CHECK(grads_all_zero(m.theta_params()));
    CHECK(grads_any_nonzero(m.lambda_params()));
}

TEST_CASE("disabling isolation couples both groups to both losses") {
    BuildConfig cfg = tiny_desk();
    cfg.isolation = false;
    GeosModel m = GeosModel::build(cfg);
    Tensor x = random_input(2, cfg, 14);

    m.zero_grad();
    ForwardOutput po = m.forward_primary(x, true);
    m.backward_primary(cross_entropy(po.primary_logits, {0, 1}).dlogits);
    CHECK(grads_any_nonzero(m.lambda_params()));
    CHECK(grads_any_nonzero(m.theta_params()));

    m.zero_grad();
    ForwardOutput ao = m.forward_auxiliary(x, true);
    m.backward_auxiliary(cross_entropy(ao.pretext_logits, {1, 2}).dlogits);
    CHECK(grads_any_nonzero(m.theta_params()));
    CHECK(grads_any_nonzero(m.lambda_params()));
}

// Under isolation the refinement is detached at the sum node, so the defined
// theta gradient of the primary loss deliberately omits the chain through the
// auxiliary block and cannot match a total-derivative probe. Finite
// differences therefore run on the coupled model (every path live) and on the
// two isolated paths where the detached chain is provably inert: the lambda
// path of the auxiliary loss, and the theta path of the primary loss with a
// zeroed refinement conv (which maps everything to zero regardless of theta).
TEST_CASE("analytic gradients match finite differences on every live path") {
    BuildConfig cfg = tiny_desk();
    GeosModel m = GeosModel::build(cfg);
    REQUIRE(param_count(m.theta_params()) + param_count(m.lambda_params()) <= 1000);
    Tensor x = random_input(2, cfg, 15);

    CHECK(fd_worst_rel_error(m, Loss::auxiliary, m.lambda_params(), x, {1, 3}) < 1e-4);

    BuildConfig zr = cfg;
    zr.zero_init_refine = true;
    GeosModel z = GeosModel::build(zr);
    CHECK(fd_worst_rel_error(z, Loss::primary, z.theta_params(), x, {0, 2}) < 1e-4);

    BuildConfig coupled = cfg;
    coupled.isolation = false;
    GeosModel c = GeosModel::build(coupled);
    CHECK(fd_worst_rel_error(c, Loss::primary, c.theta_params(), x, {0, 2}) < 1e-4);
    CHECK(fd_worst_rel_error(c, Loss::primary, c.lambda_params(), x, {0, 2}) < 1e-4);
    CHECK(fd_worst_rel_error(c, Loss::auxiliary, c.theta_params(), x, {1, 3}) < 1e-4);
    CHECK(fd_worst_rel_error(c, Loss::auxiliary, c.lambda_params(), x, {1, 3}) < 1e-4);
}

TEST_CASE("builds are deterministic in the seed") {
    GeosModel a = GeosModel::build(tiny_desk());
    GeosModel b = GeosModel::build(tiny_desk());
    auto sa = a.state();
    auto sb = b.state();
    REQUIRE(sa.size() == sb.size());
    for (size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i].name == sb[i].name);
        CHECK(sa[i].tensor->bitwise_equal(*sb[i].tensor));
    }

    BuildConfig other = tiny_desk();
    other.seed = 8;
    GeosModel d = GeosModel::build(other);
    CHECK(d.theta_checksum() != a.theta_checksum());
    CHECK(d.lambda_checksum() != a.lambda_checksum());
}

TEST_CASE("zero-initialized refinement reproduces the bare backbone logits") {
    BuildConfig cfg = tiny_desk();
    cfg.zero_init_refine = true;
    GeosModel m = GeosModel::build(cfg);
    Tensor x = random_input(2, cfg, 16);
    ForwardOutput out = m.forward_primary(x, false);

    for (int64_t i = 0; i < out.features_lambda.numel(); ++i)
        CHECK(out.features_lambda[i] == 0.0);

    const Tensor& z = out.features_theta;
    int n = z.dim(0), c = z.dim(1), hw = z.dim(2) * z.dim(3);
    Tensor pooled({n, c});
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (int j = 0; j < hw; ++j) s += z.data()[(static_cast<int64_t>(i) * c + ch) * hw + j];
            pooled(i, ch) = s / hw;
        }
    std::vector<Param*> head = m.theta_head_params();
    const Tensor& w = head[0]->value;
    const Tensor& b = head[1]->value;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < cfg.num_classes; ++j) {
            double s = 0.0;
            for (int ch = 0; ch < c; ++ch) s += pooled(i, ch) * w(j, ch);
            CHECK(out.primary_logits(i, j) == doctest::Approx(s + b[j]).epsilon(1e-12));
        }
}

TEST_CASE("backbone updates shift the auxiliary view although lambda is untouched") {
    GeosModel m = GeosModel::build(tiny_desk());
    Tensor xa = random_input(2, m.config(), 17);
    Tensor xp = random_input(2, m.config(), 18);

    Tensor before = m.forward_auxiliary(xa, false).pretext_logits;
    uint64_t lambda_before = m.lambda_checksum();

    m.zero_grad();
    ForwardOutput po = m.forward_primary(xp, true);
    m.backward_primary(cross_entropy(po.primary_logits, {0, 1}).dlogits);
    for (Param* p : m.theta_params())
        for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] -= 0.05 * p->grad[i];

    CHECK(m.lambda_checksum() == lambda_before);
    Tensor after = m.forward_auxiliary(xa, false).pretext_logits;
    CHECK(max_abs_diff(before, after) > 0.0);
}

TEST_CASE("lambda snapshot restores bitwise and never touches the backbone") {
    GeosModel m = GeosModel::build(tiny_desk());
    Tensor x = random_input(2, m.config(), 19);
    LambdaSnapshot snap = m.snapshot_lambda();
    uint64_t lambda0 = m.lambda_checksum();
    uint64_t theta0 = m.theta_checksum();

    for (Param* p : m.lambda_params())
        for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] += 0.1;
    m.forward_auxiliary(x, true);  // moves lambda batchnorm buffers
    CHECK(m.lambda_checksum() != lambda0);
    CHECK(m.theta_checksum() == theta0);

    m.restore_lambda(snap);
    CHECK(m.lambda_checksum() == lambda0);
    CHECK(m.theta_checksum() == theta0);
}

TEST_CASE("mismatched snapshots are rejected") {
    GeosModel m = GeosModel::build(tiny_desk());
    BuildConfig wider = tiny_desk();
    wider.desk_channels = {2, 3, 4, 5};
    GeosModel w = GeosModel::build(wider);
    CHECK_THROWS_AS(m.restore_lambda(w.snapshot_lambda()), SnapshotError);

    LambdaSnapshot truncated = m.snapshot_lambda();
    truncated.state.pop_back();
    CHECK_THROWS_AS(m.restore_lambda(truncated), SnapshotError);
}

TEST_CASE("checkpoints round-trip bitwise with their metadata") {
    GeosModel m = GeosModel::build(tiny_desk());
    Tensor x = random_input(2, m.config(), 20);
    m.zero_grad();
    ForwardOutput po = m.forward_primary(x, true);
    m.backward_primary(cross_entropy(po.primary_logits, {0, 1}).dlogits);
    for (Param* p : m.theta_params())
        for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] -= 0.01 * p->grad[i];
    m.forward_auxiliary(x, true);

    CheckpointMeta meta;
    meta.config_hash = "cfg-digest";
    meta.seed = 7;
    meta.permset_hash = "perm-digest";
    meta.isolation = true;
    meta.training_mode = "dg";
    auto path = temp_path("geos_test_ckpt.bin");
    save_checkpoint(m, meta, path);

    CheckpointMeta loaded_meta;
    GeosModel loaded = load_checkpoint(path, &loaded_meta);
    CHECK(loaded_meta.config_hash == meta.config_hash);
    CHECK(loaded_meta.seed == meta.seed);
    CHECK(loaded_meta.permset_hash == meta.permset_hash);
    CHECK(loaded_meta.isolation == meta.isolation);
    CHECK(loaded_meta.training_mode == meta.training_mode);

    auto sa = m.state();
    auto sb = loaded.state();
    REQUIRE(sa.size() == sb.size());
    for (size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i].name == sb[i].name);
        CHECK(sa[i].tensor->bitwise_equal(*sb[i].tensor));
    }
    std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
    auto path = temp_path("geos_test_ckpt_bad.bin");
    {
        std::ofstream os(path, std::ios::binary);
        os << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

    GeosModel m = GeosModel::build(tiny_desk());
    save_checkpoint(m, CheckpointMeta{}, path);
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
}

TEST_CASE("pretrained backbone import copies theta and only theta") {
    GeosModel src = GeosModel::build(tiny_desk());
    auto path = temp_path("geos_test_theta.bin");
    save_checkpoint(src, CheckpointMeta{}, path);

    BuildConfig other = tiny_desk();
    other.seed = 99;
    GeosModel dst = GeosModel::build(other);
    uint64_t dst_lambda = dst.lambda_checksum();
    REQUIRE(dst.theta_checksum() != src.theta_checksum());

    load_theta_weights(dst, path);
    CHECK(dst.theta_checksum() == src.theta_checksum());
    CHECK(dst.lambda_checksum() == dst_lambda);

    BuildConfig narrower = tiny_desk();
    narrower.desk_channels = {2, 3, 4, 6};
    GeosModel bad = GeosModel::build(narrower);
    CHECK_THROWS_AS(load_theta_weights(bad, path), CheckpointError);
    std::filesystem::remove(path);
}

TEST_CASE("cross-entropy matches the closed form") {
    Tensor logits({2, 3});
    double vals[6] = {0.2, -0.1, 0.7, 1.0, 1.0, 1.0};
    for (int i = 0; i < 6; ++i) logits[i] = vals[i];
    LossGrad lg = cross_entropy(logits, {2, 0});

    double lse0 = std::log(std::exp(0.2) + std::exp(-0.1) + std::exp(0.7));
    double lse1 = std::log(3.0) + 1.0;
    double expected = ((lse0 - 0.7) + (lse1 - 1.0)) / 2.0;
    CHECK(lg.loss == doctest::Approx(expected).epsilon(1e-12));

    for (int i = 0; i < 2; ++i) {
        double row = 0.0;
        for (int j = 0; j < 3; ++j) row += lg.dlogits(i, j);
        CHECK(row == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK(lg.dlogits(1, 0) == doctest::Approx((1.0 / 3.0 - 1.0) / 2.0).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(logits, {0}), ShapeError);
    CHECK_THROWS_AS(cross_entropy(logits, {0, 3}), ShapeError);
}

TEST_CASE("argmax picks the first maximum") {
    Tensor logits({2, 3});
    logits(0, 0) = 1.0;
    logits(0, 1) = 3.0;
    logits(0, 2) = 3.0;
    logits(1, 0) = -1.0;
    logits(1, 1) = -2.0;
    logits(1, 2) = -0.5;
    auto got = argmax_rows(logits);
    CHECK(got == std::vector<int>{1, 2});
}

TEST_CASE("image batches land in channel-major order") {
    Image a(2, 2, 3);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int ch = 0; ch < 3; ++ch) a.at(y, x, ch) = 0.1 * (y * 6 + x * 3 + ch);
    Tensor t = batch_to_tensor({&a});
    REQUIRE(t.shape() == std::vector<int>{1, 3, 2, 2});
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int ch = 0; ch < 3; ++ch) CHECK(t(0, ch, y, x) == a.at(y, x, ch));

    Image b(3, 2, 3);
    CHECK_THROWS_AS(batch_to_tensor({&a, &b}), ShapeError);
    CHECK_THROWS_AS(batch_to_tensor({}), EmptyInputError);
}

TEST_CASE("bad inputs and configurations are rejected") {
    GeosModel m = GeosModel::build(tiny_desk());
    Tensor wrong({1, 3, 10, 10});
    CHECK_THROWS_AS(m.forward_primary(wrong, false), ShapeError);
    CHECK_THROWS_AS(m.forward_auxiliary(wrong, false), ShapeError);

    BuildConfig bad = tiny_desk();
    bad.profile = "vgg16";
    CHECK_THROWS_AS(GeosModel::build(bad), ConfigError);
    bad = tiny_desk();
    bad.input_size = 4;
    CHECK_THROWS_AS(GeosModel::build(bad), ConfigError);
}

TEST_CASE("parameter groups are disjoint and cover the parameter state") {
    GeosModel m = GeosModel::build(tiny_desk());
    std::set<std::string> theta_names, lambda_names;
    for (const Param* p : m.theta_params()) theta_names.insert(p->name);
    for (const Param* p : m.lambda_params()) lambda_names.insert(p->name);
    CHECK(theta_names.size() == m.theta_params().size());
    CHECK(lambda_names.size() == m.lambda_params().size());
    for (const auto& n : theta_names) {
        CHECK(lambda_names.count(n) == 0);
        CHECK(n.starts_with("theta/"));
    }
    for (const auto& n : lambda_names) CHECK(n.starts_with("lambda/"));
}

TEST_CASE("clones are independent of their source") {
    GeosModel m = GeosModel::build(tiny_desk());
    GeosModel c = m.clone();
    Tensor x = random_input(2, m.config(), 21);
    Tensor before = c.forward_primary(x, false).primary_logits;

    for (Param* p : m.theta_params())
        for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] += 0.5;
    Tensor after = c.forward_primary(x, false).primary_logits;
    CHECK(before.bitwise_equal(after));
}
