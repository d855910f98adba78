#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "geos/datasets.hpp"
#include "geos/errors.hpp"
#include "geos/netcore.hpp"
#include "geos/osadapt.hpp"
#include "geos/permset.hpp"
#include "geos/rng.hpp"
#include "geos/sstasks.hpp"
#include "geos/trainer.hpp"

using namespace geos;
using namespace geos::osa;

namespace fs = std::filesystem;

namespace {

net::BuildConfig tiny_arch() {
    net::BuildConfig cfg;
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

data::DomainDataset two_domain_shapes() {
    data::SynthSpec spec;
    spec.num_domains = 2;
    spec.num_classes = 3;
    spec.samples_per_domain_class = 4;
    spec.resolution = 12;
    spec.seed = 5;
    return data::synthesize(spec);
}

OSConfig quick_os(int iterations) {
    OSConfig cfg;
    cfg.iterations = iterations;
    cfg.batch_size = 8;
    cfg.lr = 0.02;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-4;
    cfg.seed = 11;
    return cfg;
}

bool snapshots_equal(const net::LambdaSnapshot& a, const net::LambdaSnapshot& b) {
    if (a.state.size() != b.state.size()) return false;
    for (size_t i = 0; i < a.state.size(); ++i) {
        if (a.state[i].first != b.state[i].first) return false;
        if (!a.state[i].second.bitwise_equal(b.state[i].second)) return false;
    }
    return true;
}

std::vector<size_t> all_indices(const data::DomainDataset& ds) {
    std::vector<size_t> v(ds.samples.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
}

const SweepRow& row_for(const SweepResult& res, size_t sample_index) {
    for (const auto& row : res.rows)
        if (row.sample_index == sample_index) return row;
    REQUIRE_MESSAGE(false, "no row for sample index " << sample_index);
    return res.rows.front();
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

TEST_CASE("zero iterations reproduce plain inference bitwise") {
    const auto ds = two_domain_shapes();
    net::GeosModel model = net::GeosModel::build(tiny_arch());
    const perms::PermutationSet ps = perms::generate(4, 4, 1);
    const Image im = to_float(ds.samples[0].image);

    const Image plain = tasks::prepare_plain(im, model.config().input_size);
    const Tensor direct = model.forward_primary(net::batch_to_tensor({&plain}), false)
                              .primary_logits;
    const uint64_t theta_before = model.theta_checksum();
    const uint64_t lambda_before = model.lambda_checksum();

    const auto [cls, trace] = adapt_and_predict(model, im, "d0|s0", quick_os(0), &ps);
    CHECK(trace.pre_logits.bitwise_equal(direct));
    CHECK(trace.post_logits.bitwise_equal(direct));
    CHECK(cls == net::argmax_rows(direct).front());
    CHECK(trace.predicted.size() == 1);
    CHECK(trace.aux_losses.empty());
    CHECK(trace.lambda_restored);
    CHECK(model.theta_checksum() == theta_before);
    CHECK(model.lambda_checksum() == lambda_before);
}

TEST_CASE("adaptation steps only the auxiliary block and restores it bitwise") {
    const auto ds = two_domain_shapes();
    const perms::PermutationSet ps = perms::generate(4, 4, 1);
    const Image im = to_float(ds.samples[5].image);

    net::BuildConfig arch = tiny_arch();
    OSConfig cfg = quick_os(3);
    const perms::PermutationSet* set = &ps;
    SUBCASE("jigsaw") {}
    SUBCASE("rotation") {
        cfg.task = tasks::Task::rotation;
        set = nullptr;
    }
    SUBCASE("isolation off") { arch.isolation = false; }

    net::GeosModel model = net::GeosModel::build(arch);
    const net::LambdaSnapshot before = model.snapshot_lambda();
    const uint64_t theta_before = model.theta_checksum();

    const auto [cls, trace] = adapt_and_predict(model, im, "d1|s5", cfg, set);
    CHECK(trace.aux_losses.size() == 3);
    CHECK(trace.predicted.size() == 4);
    CHECK(trace.predicted.back() == cls);
    CHECK(trace.lambda_restored);
    for (double l : trace.aux_losses) CHECK(std::isfinite(l));
    // The block must actually move during the run, not just end restored.
    CHECK_FALSE(trace.post_logits.bitwise_equal(trace.pre_logits));
    CHECK(model.theta_checksum() == theta_before);
    CHECK(snapshots_equal(model.snapshot_lambda(), before));
}

TEST_CASE("divergent adaptation restores the block and names the sample") {
    const auto ds = two_domain_shapes();
    net::GeosModel model = net::GeosModel::build(tiny_arch());
    const perms::PermutationSet ps = perms::generate(4, 4, 1);
    const Image im = to_float(ds.samples[2].image);

    const net::LambdaSnapshot before = model.snapshot_lambda();
    const uint64_t theta_before = model.theta_checksum();

    OSConfig cfg = quick_os(5);
    cfg.lr = 1e308;

    bool threw = false;
    try {
        adapt_and_predict(model, im, "d0|s2", cfg, &ps);
    } catch (const AdaptationDivergenceError& e) {
        threw = true;
        CHECK(e.batch_id == "d0|s2");
    }
    REQUIRE(threw);
    CHECK(model.theta_checksum() == theta_before);
    CHECK(snapshots_equal(model.snapshot_lambda(), before));
}

TEST_CASE("repeated adaptation on one model instance leaves no residue") {
    const auto ds = two_domain_shapes();
    net::GeosModel model = net::GeosModel::build(tiny_arch());
    const perms::PermutationSet ps = perms::generate(4, 4, 1);
    const uint64_t theta_before = model.theta_checksum();
    const uint64_t lambda_before = model.lambda_checksum();

    for (size_t i = 0; i < 6; ++i) {
        const Image im = to_float(ds.samples[i].image);
        OSConfig cfg = quick_os(2);
        cfg.seed = 100 + i;

        // A fresh copy of the pristine model must see exactly the same
        // adaptation: any drift left behind by earlier samples would show
        // up as a trace mismatch here.
        net::GeosModel pristine = model.clone();
        const auto [cls_used, trace_used] = adapt_and_predict(model, im, "s", cfg, &ps);
        const auto [cls_fresh, trace_fresh] = adapt_and_predict(pristine, im, "s", cfg, &ps);
        CHECK(cls_used == cls_fresh);
        CHECK(trace_used.aux_losses == trace_fresh.aux_losses);
        CHECK(trace_used.post_logits.bitwise_equal(trace_fresh.post_logits));
        CHECK(model.theta_checksum() == theta_before);
        CHECK(model.lambda_checksum() == lambda_before);
    }
}

TEST_CASE("traces are a pure function of model, sample and seed") {
    const auto ds = two_domain_shapes();
    net::GeosModel model = net::GeosModel::build(tiny_arch());
    const perms::PermutationSet ps = perms::generate(4, 4, 1);
    const Image im = to_float(ds.samples[7].image);

    const auto [cls_a, trace_a] = adapt_and_predict(model, im, "s", quick_os(3), &ps);
    const auto [cls_b, trace_b] = adapt_and_predict(model, im, "s", quick_os(3), &ps);
    CHECK(cls_a == cls_b);
    CHECK(trace_a.aux_losses == trace_b.aux_losses);
    CHECK(trace_a.pre_logits.bitwise_equal(trace_b.pre_logits));
    CHECK(trace_a.post_logits.bitwise_equal(trace_b.post_logits));

    OSConfig other = quick_os(3);
    other.seed = 12;
    const auto [cls_c, trace_c] = adapt_and_predict(model, im, "s", other, &ps);
    (void)cls_c;
    CHECK(trace_a.aux_losses != trace_c.aux_losses);
}

TEST_CASE("sweep scores every iteration budget in one pass") {
    const auto ds = two_domain_shapes();
    const net::GeosModel model = net::GeosModel::build(tiny_arch());
    const perms::PermutationSet ps = perms::generate(4, 4, 1);

    const OSConfig cfg = quick_os(2);
    const auto res = adapt_batch(model, ds, all_indices(ds), cfg, &ps);
    REQUIRE(res.rows.size() == ds.samples.size());
    REQUIRE(res.accuracy_by_iteration.size() == 3);

    for (size_t k = 0; k < res.accuracy_by_iteration.size(); ++k) {
        double acc = 0.0;
        for (const auto& row : res.rows) {
            REQUIRE(row.predicted.size() == 3);
            REQUIRE(row.aux_losses.size() == 2);
            if (row.predicted[k] == row.label) acc += 1.0;
        }
        acc /= static_cast<double>(res.rows.size());
        CHECK(res.accuracy_by_iteration[k] == acc);
        CHECK(res.accuracy_by_iteration[k] >= 0.0);
        CHECK(res.accuracy_by_iteration[k] <= 1.0);
    }

    for (const auto& row : res.rows) {
        const auto& s = ds.samples[row.sample_index];
        CHECK(row.sample_id == s.domain + "|" + s.id);
        CHECK(row.label == s.label);
    }
}

TEST_CASE("sweep rows do not depend on subset order") {
    const auto ds = two_domain_shapes();
    const net::GeosModel model = net::GeosModel::build(tiny_arch());
    const perms::PermutationSet ps = perms::generate(4, 4, 1);
    const OSConfig cfg = quick_os(2);

    const std::vector<size_t> fwd{2, 5, 9, 11};
    const std::vector<size_t> rev{11, 9, 5, 2};
    const auto res_fwd = adapt_batch(model, ds, fwd, cfg, &ps);
    const auto res_rev = adapt_batch(model, ds, rev, cfg, &ps);
    const auto res_all = adapt_batch(model, ds, all_indices(ds), cfg, &ps);

    for (size_t idx : fwd) {
        const SweepRow& a = row_for(res_fwd, idx);
        const SweepRow& b = row_for(res_rev, idx);
        const SweepRow& c = row_for(res_all, idx);
        CHECK(a.predicted == b.predicted);
        CHECK(a.aux_losses == b.aux_losses);
        CHECK(a.predicted == c.predicted);
        CHECK(a.aux_losses == c.aux_losses);
    }
}

TEST_CASE("restart per budget reproduces the single pass") {
    const auto ds = two_domain_shapes();
    const net::GeosModel model = net::GeosModel::build(tiny_arch());
    const perms::PermutationSet ps = perms::generate(4, 4, 1);
    const OSConfig cfg = quick_os(3);

    const std::vector<size_t> subset{0, 3, 7};
    const auto incremental = adapt_batch(model, ds, subset, cfg, &ps, false);
    const auto restarted = adapt_batch(model, ds, subset, cfg, &ps, true);
    REQUIRE(incremental.rows.size() == restarted.rows.size());
    for (size_t i = 0; i < incremental.rows.size(); ++i) {
        CHECK(incremental.rows[i].sample_index == restarted.rows[i].sample_index);
        CHECK(incremental.rows[i].predicted == restarted.rows[i].predicted);
        CHECK(incremental.rows[i].aux_losses == restarted.rows[i].aux_losses);
    }
    CHECK(incremental.accuracy_by_iteration == restarted.accuracy_by_iteration);
}

TEST_CASE("adaptation lowers the pretext loss on most samples") {
    const auto ds = two_domain_shapes();
    const perms::PermutationSet ps = perms::generate(4, 4, 1);

    // A briefly trained model, as in deployment: adapting a random pretext
    // head is close to noise, a trained one reliably improves.
    train::TrainConfig tc;
    tc.alpha = 1.0;
    tc.lr_main = 0.01;
    tc.lr_head = 0.01;
    tc.epochs = 10;
    tc.batch_size_primary = 8;
    tc.batch_size_auxiliary = 8;
    tc.seed = 3;
    tc.val_fraction = 0.25;
    train::FitOptions opts;
    opts.perm_set = &ps;
    auto fitted = train::fit(tc, tiny_arch(), ds, {}, {}, opts);

    OSConfig cfg = os_from_training(tc);
    cfg.iterations = 5;
    cfg.batch_size = 32;
    cfg.lr = 0.02;
    cfg.seed = 11;
    const auto res = adapt_batch(fitted.state.model, ds, all_indices(ds), cfg, &ps);

    int improved = 0;
    for (const auto& row : res.rows)
        if (row.aux_losses.back() < row.aux_losses.front()) ++improved;
    // 24 samples; demand a clear majority rather than a knife-edge bound.
    CHECK(improved >= 22);
}

TEST_CASE("trace csv lists one row per sample and budget") {
    const auto ds = two_domain_shapes();
    const net::GeosModel model = net::GeosModel::build(tiny_arch());
    const perms::PermutationSet ps = perms::generate(4, 4, 1);

    const auto res = adapt_batch(model, ds, {0, 1}, quick_os(2), &ps);
    const fs::path dir = fresh_dir("geos_osadapt_csv");
    write_trace_csv(res, dir / "trace.csv");

    const auto lines = split(slurp(dir / "trace.csv"), '\n');
    // Header, two samples with three budgets each, trailing newline.
    REQUIRE(lines.size() == 8);
    CHECK(lines[0] == "sample_id,iteration,aux_loss,predicted_class");
    CHECK(lines.back().empty());

    for (size_t i = 0; i < 2; ++i) {
        const SweepRow& row = res.rows[i];
        for (size_t k = 0; k <= 2; ++k) {
            const auto fields = split(lines[1 + i * 3 + k], ',');
            REQUIRE(fields.size() == 4);
            CHECK(fields[0] == row.sample_id);
            CHECK(fields[1] == std::to_string(k));
            if (k < 2) {
                CHECK(std::stod(fields[2]) == doctest::Approx(row.aux_losses[k]).epsilon(1e-12));
            } else {
                CHECK(fields[2].empty());
            }
            CHECK(fields[3] == std::to_string(row.predicted[k]));
        }
    }
}

TEST_CASE("training hyperparameters carry over to adaptation") {
    const OSConfig dflt;
    CHECK(dflt.iterations == 3);
    CHECK(dflt.batch_size == 128);
    CHECK(dflt.optimizer == train::OptKind::sgd_momentum);
    CHECK(dflt.lr == 0.001);
    CHECK(dflt.momentum == 0.9);
    CHECK(dflt.weight_decay == 0.0005);

    const OSConfig os = os_from_training(train::preset("pda_compcars"));
    CHECK(os.optimizer == train::OptKind::adam);
    CHECK(os.lr == 1e-4);
    CHECK(os.weight_decay == 1e-6);
    CHECK(os.task == tasks::Task::jigsaw);
    CHECK(os.iterations == 3);
    CHECK(os.batch_size == 128);
}

TEST_CASE("bad settings and mismatched geometry are rejected") {
    const auto ds = two_domain_shapes();
    const perms::PermutationSet ps = perms::generate(4, 4, 1);
    net::GeosModel model = net::GeosModel::build(tiny_arch());
    const Image im = to_float(ds.samples[0].image);

    SUBCASE("negative iterations") {
        OSConfig cfg = quick_os(0);
        cfg.iterations = -1;
        CHECK_THROWS_AS(adapt_and_predict(model, im, "s", cfg, &ps), ConfigError);
    }
    SUBCASE("zero batch") {
        OSConfig cfg = quick_os(1);
        cfg.batch_size = 0;
        CHECK_THROWS_AS(adapt_and_predict(model, im, "s", cfg, &ps), ConfigError);
    }
    SUBCASE("negative lr") {
        OSConfig cfg = quick_os(1);
        cfg.lr = -0.1;
        CHECK_THROWS_AS(adapt_and_predict(model, im, "s", cfg, &ps), ConfigError);
    }
    SUBCASE("momentum at one") {
        OSConfig cfg = quick_os(1);
        cfg.momentum = 1.0;
        CHECK_THROWS_AS(adapt_and_predict(model, im, "s", cfg, &ps), ConfigError);
    }
    SUBCASE("negative weight decay") {
        OSConfig cfg = quick_os(1);
        cfg.weight_decay = -1e-4;
        CHECK_THROWS_AS(adapt_and_predict(model, im, "s", cfg, &ps), ConfigError);
    }
    SUBCASE("jigsaw without a permutation set") {
        CHECK_THROWS_AS(adapt_and_predict(model, im, "s", quick_os(1), nullptr), ConfigError);
    }
    SUBCASE("pretext width mismatch") {
        const perms::PermutationSet wide = perms::generate(4, 7, 1);
        CHECK_THROWS_AS(adapt_and_predict(model, im, "s", quick_os(1), &wide), ConfigError);
    }
    SUBCASE("rotation head width mismatch") {
        net::BuildConfig arch = tiny_arch();
        arch.num_pretext = 6;
        net::GeosModel wide = net::GeosModel::build(arch);
        OSConfig cfg = quick_os(1);
        cfg.task = tasks::Task::rotation;
        CHECK_THROWS_AS(adapt_and_predict(wide, im, "s", cfg, nullptr), ConfigError);
    }
    SUBCASE("input does not tile") {
        net::BuildConfig arch = tiny_arch();
        arch.input_size = 9;
        net::GeosModel odd = net::GeosModel::build(arch);
        CHECK_THROWS_AS(adapt_and_predict(odd, im, "s", quick_os(1), &ps), ConfigError);
    }
    SUBCASE("empty sweep") {
        CHECK_THROWS_AS(adapt_batch(model, ds, {}, quick_os(1), &ps), EmptyInputError);
    }
    SUBCASE("sweep index out of range") {
        CHECK_THROWS_AS(adapt_batch(model, ds, {ds.samples.size()}, quick_os(1), &ps),
                        ConfigError);
    }
}
