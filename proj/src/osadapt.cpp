#include "geos/osadapt.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "geos/errors.hpp"
#include "geos/rng.hpp"

namespace geos::osa {

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
    return std::string(buf, res.ptr);
}

// Grid side for the active pretext, after checking that the model head and
// the permutation set agree on the label space and that the input tiles.
int checked_side(const net::BuildConfig& arch, const OSConfig& cfg,
                 const perms::PermutationSet* perm_set) {
    if (cfg.task == tasks::Task::jigsaw) {
        if (perm_set == nullptr || perm_set->size() == 0)
            throw ConfigError("jigsaw adaptation requires a permutation set");
        const int n = perm_set->n;
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
        if (side * side != n)
            throw ConfigError("permutation length " + std::to_string(n) +
                              " is not a square tile grid");
        if (arch.input_size % side != 0)
            throw ConfigError("input size " + std::to_string(arch.input_size) +
                              " does not tile into a " + std::to_string(side) + "x" +
                              std::to_string(side) + " grid");
        if (arch.num_pretext != perm_set->size())
            throw ConfigError("model has " + std::to_string(arch.num_pretext) +
                              " pretext outputs but the permutation set holds " +
                              std::to_string(perm_set->size()));
        return side;
    }
    if (arch.num_pretext != tasks::kRotationLabels)
        throw ConfigError("rotation pretext needs " + std::to_string(tasks::kRotationLabels) +
                          " pretext outputs, model has " + std::to_string(arch.num_pretext));
    return 1;
}

int single_prediction(net::GeosModel& model, const Tensor& x, const std::string& sample_id,
                      Tensor* logits_out) {
    auto out = model.forward_primary(x, false);
    for (int64_t i = 0; i < out.primary_logits.numel(); ++i)
        if (!std::isfinite(out.primary_logits[i]))
            throw AdaptationDivergenceError(
                "non-finite prediction logits for sample '" + sample_id + "'", sample_id);
    const int cls = net::argmax_rows(out.primary_logits).front();
    if (logits_out != nullptr) *logits_out = out.primary_logits;
    return cls;
}

}  // namespace

void validate(const OSConfig& cfg) {
    if (cfg.iterations < 0)
        throw ConfigError("iterations must be >= 0, got " + std::to_string(cfg.iterations));
    if (cfg.batch_size < 1)
        throw ConfigError("batch_size must be >= 1, got " + std::to_string(cfg.batch_size));
    if (cfg.lr < 0.0) throw ConfigError("learning rate must be >= 0, got " + format_double(cfg.lr));
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw ConfigError("momentum must lie in [0,1), got " + format_double(cfg.momentum));
    if (cfg.weight_decay < 0.0)
        throw ConfigError("weight_decay must be >= 0, got " + format_double(cfg.weight_decay));
}

OSConfig os_from_training(const train::TrainConfig& cfg) {
    OSConfig os;
    os.task = cfg.task;
    os.optimizer = cfg.optimizer;
    os.lr = cfg.lr_main;
    os.momentum = cfg.momentum;
    os.weight_decay = cfg.weight_decay;
    os.seed = cfg.seed;
    return os;
}

std::pair<int, OSTrace> adapt_and_predict(net::GeosModel& model, const Image& sample,
                                          const std::string& sample_id, const OSConfig& cfg,
                                          const perms::PermutationSet* perm_set) {
    validate(cfg);
    const net::BuildConfig& arch = model.config();
    const int side = checked_side(arch, cfg, perm_set);

    tasks::AugmentConfig aug = cfg.augment;
    aug.crop_size = arch.input_size;

    const Image plain = tasks::prepare_plain(sample, arch.input_size);
    const Tensor x = net::batch_to_tensor({&plain});

    OSTrace trace;
    trace.predicted.push_back(single_prediction(model, x, sample_id, &trace.pre_logits));
    trace.post_logits = trace.pre_logits;

    const net::LambdaSnapshot snap = model.snapshot_lambda();
    train::Optimizer opt(cfg.optimizer, cfg.lr, cfg.lr, cfg.momentum, cfg.weight_decay);
    const std::vector<tasks::SourceSample> sources{{&sample, sample_id}};

    try {
        for (int it = 0; it < cfg.iterations; ++it) {
            const auto variants = tasks::make_ss_batch(
                sources, cfg.task, perm_set, cfg.batch_size,
                derive_seed(cfg.seed, "os.iter", static_cast<uint64_t>(it)), aug, side, side);
            std::vector<const Image*> ptrs;
            std::vector<int> labels;
            ptrs.reserve(variants.size());
            labels.reserve(variants.size());
            for (const auto& v : variants) {
                ptrs.push_back(&v.image);
                labels.push_back(v.label);
            }
            model.zero_grad();
            const auto out = model.forward_auxiliary(net::batch_to_tensor(ptrs), true);
            const auto la = net::cross_entropy(out.pretext_logits, labels);
            if (!std::isfinite(la.loss))
                throw AdaptationDivergenceError(
                    "non-finite adaptation loss at iteration " + std::to_string(it + 1) +
                        " for sample '" + sample_id + "'",
                    sample_id);
            trace.aux_losses.push_back(la.loss);
            model.backward_auxiliary(la.dlogits);
            opt.step(model.lambda_params());

            trace.predicted.push_back(single_prediction(model, x, sample_id, &trace.post_logits));
        }
    } catch (...) {
        model.restore_lambda(snap);
        throw;
    }
    model.restore_lambda(snap);
    trace.lambda_restored = true;
    return {trace.predicted.back(), trace};
}

SweepResult adapt_batch(const net::GeosModel& model, const data::DomainDataset& ds,
                        const std::vector<size_t>& indices, const OSConfig& cfg,
                        const perms::PermutationSet* perm_set, bool restart_per_k) {
    validate(cfg);
    checked_side(model.config(), cfg, perm_set);
    if (indices.empty()) throw EmptyInputError("adaptation sweep got no samples");
    for (size_t i : indices)
        if (i >= ds.samples.size())
            throw ConfigError("sample index " + std::to_string(i) + " out of range (dataset has " +
                              std::to_string(ds.samples.size()) + " samples)");

    SweepResult result;
    result.rows.resize(indices.size());
    std::vector<std::exception_ptr> failures(indices.size());

    const auto n = static_cast<int64_t>(indices.size());
#pragma omp parallel for schedule(dynamic)
    for (int64_t slot = 0; slot < n; ++slot) {
        try {
            const size_t idx = indices[static_cast<size_t>(slot)];
            const data::Sample& s = ds.samples[idx];
            const Image im = to_float(s.image);

            OSConfig scfg = cfg;
            scfg.seed = derive_seed(cfg.seed, "os.sample", static_cast<uint64_t>(idx));

            SweepRow row;
            row.sample_index = idx;
            row.sample_id = s.domain + "|" + s.id;
            row.label = s.label;
            if (restart_per_k) {
                // Re-run from the pristine model for every budget and keep
                // the full-budget trace; each shorter run replays a prefix of
                // the same seeded batches, so the losses coincide by
                // construction.
                for (int k = 0; k <= cfg.iterations; ++k) {
                    OSConfig kcfg = scfg;
                    kcfg.iterations = k;
                    net::GeosModel local = model.clone();
                    auto [cls, trace] = adapt_and_predict(local, im, row.sample_id, kcfg, perm_set);
                    row.predicted.push_back(cls);
                    if (k == cfg.iterations) row.aux_losses = trace.aux_losses;
                }
            } else {
                net::GeosModel local = model.clone();
                auto [cls, trace] = adapt_and_predict(local, im, row.sample_id, scfg, perm_set);
                (void)cls;
                row.predicted = trace.predicted;
                row.aux_losses = trace.aux_losses;
            }
            result.rows[static_cast<size_t>(slot)] = std::move(row);
        } catch (...) {
            failures[static_cast<size_t>(slot)] = std::current_exception();
        }
    }
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);

    result.accuracy_by_iteration.assign(static_cast<size_t>(cfg.iterations) + 1, 0.0);
    for (const auto& row : result.rows)
        for (size_t k = 0; k < row.predicted.size(); ++k)
            if (row.predicted[k] == row.label) result.accuracy_by_iteration[k] += 1.0;
    for (double& a : result.accuracy_by_iteration) a /= static_cast<double>(result.rows.size());
    return result;
}

void write_trace_csv(const SweepResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write trace file " + path.string());
    out << "sample_id,iteration,aux_loss,predicted_class\n";
    for (const auto& row : result.rows) {
        for (size_t k = 0; k < row.predicted.size(); ++k) {
            out << row.sample_id << ',' << k << ',';
            if (k < row.aux_losses.size()) out << format_double(row.aux_losses[k]);
            out << ',' << row.predicted[k] << '\n';
        }
    }
    out.flush();
    if (!out.good()) throw Error("failed writing trace file " + path.string());
}

}  // namespace geos::osa
