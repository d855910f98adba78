#include "geos/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "geos/errors.hpp"
#include "geos/rng.hpp"

namespace geos::train {

namespace {

// Shortest round-trip text for a double; also locale-independent, unlike the
// iostream inserters.
std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
    if (ec != std::errc()) throw Error("failed to format a double");
    return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [end, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || end != last)
        throw ConfigError("value of '" + key + "' is not a valid number: '" + value + "'");
    return out;
}

}  // namespace

Mode mode_from_string(const std::string& s) {
    if (s == "dg") return Mode::dg;
    if (s == "da") return Mode::da;
    if (s == "pda") return Mode::pda;
    if (s == "null" || s == "null_hypothesis") return Mode::null_hypothesis;
    throw ConfigError("unknown mode '" + s + "' (expected dg, da, pda or null)");
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::dg: return "dg";
        case Mode::da: return "da";
        case Mode::pda: return "pda";
        case Mode::null_hypothesis: return "null";
    }
    throw Error("unhandled mode value");
}

OptKind optimizer_from_string(const std::string& s) {
    if (s == "sgd_momentum" || s == "sgd") return OptKind::sgd_momentum;
    if (s == "adam") return OptKind::adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd_momentum or adam)");
}

std::string to_string(OptKind k) {
    switch (k) {
        case OptKind::sgd_momentum: return "sgd_momentum";
        case OptKind::adam: return "adam";
    }
    throw Error("unhandled optimizer value");
}

void validate(const TrainConfig& cfg) {
    if (cfg.alpha < 0.0)
        throw ConfigError("alpha must be >= 0, got " + format_double(cfg.alpha));
    if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0))
        throw ConfigError("val_fraction must lie in (0,1), got " + format_double(cfg.val_fraction));
    if (cfg.batch_size_primary < 1 || cfg.batch_size_auxiliary < 1)
        throw ConfigError("batch sizes must be >= 1");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.lr_main < 0.0 || cfg.lr_head < 0.0)
        throw ConfigError("learning rates must be >= 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw ConfigError("momentum must lie in [0,1), got " + format_double(cfg.momentum));
    if (cfg.weight_decay < 0.0)
        throw ConfigError("weight_decay must be >= 0, got " + format_double(cfg.weight_decay));
    if (cfg.lr_decay.factor <= 0.0)
        throw ConfigError("lr_decay.factor must be positive, got " +
                          format_double(cfg.lr_decay.factor));
    if (cfg.lr_decay.at_epoch < 0) throw ConfigError("lr_decay.at_epoch must be >= 0");
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open training config " + path.string());
    TrainConfig cfg;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (!seen.insert(key).second)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        if (key == "mode") cfg.mode = mode_from_string(value);
        else if (key == "task") cfg.task = tasks::task_from_string(value);
        else if (key == "alpha") cfg.alpha = parse_number<double>(key, value);
        else if (key == "optimizer") cfg.optimizer = optimizer_from_string(value);
        else if (key == "lr_main") cfg.lr_main = parse_number<double>(key, value);
        else if (key == "lr_head") cfg.lr_head = parse_number<double>(key, value);
        else if (key == "momentum") cfg.momentum = parse_number<double>(key, value);
        else if (key == "weight_decay") cfg.weight_decay = parse_number<double>(key, value);
        else if (key == "epochs") cfg.epochs = parse_number<int>(key, value);
        else if (key == "batch_size_primary")
            cfg.batch_size_primary = parse_number<int>(key, value);
        else if (key == "batch_size_auxiliary")
            cfg.batch_size_auxiliary = parse_number<int>(key, value);
        else if (key == "lr_decay.factor") cfg.lr_decay.factor = parse_number<double>(key, value);
        else if (key == "lr_decay.at_epoch") cfg.lr_decay.at_epoch = parse_number<int>(key, value);
        else if (key == "seed") cfg.seed = parse_number<uint64_t>(key, value);
        else if (key == "val_fraction") cfg.val_fraction = parse_number<double>(key, value);
        else
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" +
                              key + "'");
    }
    validate(cfg);
    return cfg;
}

void save_train_config(const TrainConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write training config " + path.string());
    out << "mode=" << to_string(cfg.mode) << "\n"
        << "task=" << tasks::to_string(cfg.task) << "\n"
        << "alpha=" << format_double(cfg.alpha) << "\n"
        << "optimizer=" << to_string(cfg.optimizer) << "\n"
        << "lr_main=" << format_double(cfg.lr_main) << "\n"
        << "lr_head=" << format_double(cfg.lr_head) << "\n"
        << "momentum=" << format_double(cfg.momentum) << "\n"
        << "weight_decay=" << format_double(cfg.weight_decay) << "\n"
        << "epochs=" << cfg.epochs << "\n"
        << "batch_size_primary=" << cfg.batch_size_primary << "\n"
        << "batch_size_auxiliary=" << cfg.batch_size_auxiliary << "\n"
        << "lr_decay.factor=" << format_double(cfg.lr_decay.factor) << "\n"
        << "lr_decay.at_epoch=" << cfg.lr_decay.at_epoch << "\n"
        << "seed=" << cfg.seed << "\n"
        << "val_fraction=" << format_double(cfg.val_fraction) << "\n";
    if (!out) throw ConfigError("failed while writing training config " + path.string());
}

TrainConfig preset(const std::string& name) {
    TrainConfig cfg;
    if (name == "dg") return cfg;
    if (name == "pda_compcars" || name == "portraits_decades" || name == "portraits_regions") {
        cfg.mode = Mode::pda;
        cfg.optimizer = OptKind::adam;
        cfg.weight_decay = 1e-6;
        cfg.epochs = 6;
        cfg.batch_size_primary = 16;
        cfg.batch_size_auxiliary = 16;
        cfg.lr_head = 1e-3;
        cfg.lr_main = 1e-4;
        cfg.lr_decay = {10.0, 4};
        cfg.alpha = (name == "portraits_regions") ? 1.0 : 2.0;
        return cfg;
    }
    throw ConfigError("unknown preset '" + name +
                      "' (expected dg, pda_compcars, portraits_decades or portraits_regions)");
}

Optimizer::Optimizer(OptKind kind, double lr_main, double lr_head, double momentum,
                     double weight_decay)
    : kind_(kind),
      lr_main_(lr_main),
      lr_head_(lr_head),
      momentum_(momentum),
      weight_decay_(weight_decay) {}

double Optimizer::effective_lr(const std::string& param_name) const {
    const bool head = param_name.rfind("theta/head", 0) == 0 ||
                      param_name.rfind("lambda/head", 0) == 0;
    return (head ? lr_head_ : lr_main_) * lr_scale_;
}

void Optimizer::step(const std::vector<net::Param*>& params) {
    for (net::Param* p : params) {
        if (!p->trainable) continue;
        const int64_t n = p->value.numel();
        if (p->grad.numel() != n)
            throw Error("gradient shape does not match parameter '" + p->name + "'");
        Slot& slot = slots_[p->name];
        if (slot.momentum.numel() == 0) {
            slot.momentum = Tensor::zeros_like(p->value);
            if (kind_ == OptKind::adam) slot.second = Tensor::zeros_like(p->value);
        } else if (slot.momentum.numel() != n) {
            throw Error("optimizer slot does not match parameter '" + p->name + "'");
        }
        const double lr = effective_lr(p->name);
        double* value = p->value.data();
        const double* grad = p->grad.data();
        double* m = slot.momentum.data();
        if (kind_ == OptKind::sgd_momentum) {
            for (int64_t i = 0; i < n; ++i) {
                const double g = grad[i] + weight_decay_ * value[i];
                m[i] = momentum_ * m[i] + g;
                value[i] -= lr * m[i];
            }
        } else {
            slot.t += 1;
            const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
            const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(slot.t));
            const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(slot.t));
            double* v = slot.second.data();
            for (int64_t i = 0; i < n; ++i) {
                const double g = grad[i] + weight_decay_ * value[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                value[i] -= lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + eps);
            }
        }
    }
}

StepLosses train_step(TrainState& state, const TrainConfig& cfg, const Batch& primary,
                      const Batch* aux, FlowAudit* audit) {
    if (cfg.mode == Mode::null_hypothesis && aux != nullptr)
        throw ProtocolError("null-hypothesis training takes no auxiliary batches");
    if (cfg.mode != Mode::null_hypothesis && aux == nullptr)
        throw ProtocolError("mode '" + to_string(cfg.mode) + "' requires an auxiliary batch");
    if (primary.labels.empty()) throw EmptyInputError("train_step: empty primary batch");
    if (aux != nullptr && aux->labels.empty())
        throw EmptyInputError("train_step: empty auxiliary batch");

    net::GeosModel& model = state.model;
    const bool isolation = model.config().isolation;
    // With alpha=0 the auxiliary pass is skipped outright so the lambda group
    // stays bitwise untouched: no gradients, no batchnorm buffer updates, and
    // no momentum/decay from an optimizer visit.
    const bool aux_live = aux != nullptr && cfg.alpha > 0.0;
    StepLosses losses;
    model.zero_grad();

    const uint64_t lambda_before = (audit && isolation) ? model.lambda_checksum() : 0;
    auto out = model.forward_primary(primary.x, true);
    auto lp = net::cross_entropy(out.primary_logits, primary.labels);
    if (!std::isfinite(lp.loss))
        throw DivergenceError("non-finite primary loss", primary.id);
    model.backward_primary(lp.dlogits);
    losses.primary = lp.loss;
    if (audit && isolation && model.lambda_checksum() != lambda_before)
        audit->violations.push_back("lambda state changed during the primary accumulation (" +
                                    primary.id + ")");

    if (aux_live) {
        const uint64_t theta_before = (audit && isolation) ? model.theta_checksum() : 0;
        auto out_aux = model.forward_auxiliary(aux->x, true);
        auto la = net::cross_entropy(out_aux.pretext_logits, aux->labels);
        if (!std::isfinite(la.loss))
            throw DivergenceError("non-finite auxiliary loss", aux->id);
        la.dlogits.scale_(cfg.alpha);
        model.backward_auxiliary(la.dlogits);
        losses.auxiliary = la.loss;
        if (audit && isolation && model.theta_checksum() != theta_before)
            audit->violations.push_back("theta state changed during the auxiliary accumulation (" +
                                        aux->id + ")");
    }

    std::vector<net::Param*> stepped = model.theta_params();
    if (aux_live || !isolation) {
        auto lambda = model.lambda_params();
        stepped.insert(stepped.end(), lambda.begin(), lambda.end());
    }
    state.optimizer.step(stepped);
    return losses;
}

namespace {

struct EvalBatch {
    Tensor x;
    std::vector<int> labels;
};

std::vector<EvalBatch> pack_eval_batches(std::vector<tasks::SSVariant> variants, int batch_size) {
    std::vector<EvalBatch> out;
    for (size_t lo = 0; lo < variants.size(); lo += static_cast<size_t>(batch_size)) {
        const size_t hi = std::min(variants.size(), lo + static_cast<size_t>(batch_size));
        std::vector<const Image*> ptrs;
        EvalBatch b;
        for (size_t k = lo; k < hi; ++k) {
            ptrs.push_back(&variants[k].image);
            b.labels.push_back(variants[k].label);
        }
        b.x = net::batch_to_tensor(ptrs);
        out.push_back(std::move(b));
    }
    return out;
}

double pretext_accuracy(net::GeosModel& model, const std::vector<EvalBatch>& batches) {
    size_t correct = 0, total = 0;
    for (const auto& b : batches) {
        auto out = model.forward_auxiliary(b.x, false);
        const auto pred = net::argmax_rows(out.pretext_logits);
        for (size_t k = 0; k < b.labels.size(); ++k) correct += pred[k] == b.labels[k];
        total += b.labels.size();
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

void require_known_domains(const data::DomainDataset& ds, const std::vector<std::string>& names,
                           const char* what) {
    std::set<std::string> seen;
    for (const auto& d : names) {
        if (std::find(ds.domain_names.begin(), ds.domain_names.end(), d) == ds.domain_names.end())
            throw ConfigError(std::string(what) + " domain '" + d + "' is not in the dataset");
        if (!seen.insert(d).second)
            throw ConfigError(std::string(what) + " domain '" + d + "' listed twice");
    }
}

}  // namespace

FitResult fit(const TrainConfig& cfg, const net::BuildConfig& arch,
              const data::DomainDataset& ds, const std::vector<std::string>& source_domains,
              const std::vector<std::string>& aux_domains, const FitOptions& opts) {
    validate(cfg);
    if (ds.samples.empty()) throw EmptyInputError("fit: dataset has no samples");
    if (ds.num_classes() != arch.num_classes)
        throw ConfigError("model expects " + std::to_string(arch.num_classes) +
                          " classes, dataset has " + std::to_string(ds.num_classes()));

    require_known_domains(ds, source_domains, "source");
    require_known_domains(ds, aux_domains, "auxiliary");
    for (const auto& d : aux_domains)
        if (std::find(source_domains.begin(), source_domains.end(), d) != source_domains.end())
            throw ProtocolError("domain '" + d + "' appears as both source and auxiliary");

    std::vector<std::string> sources = source_domains;
    if (sources.empty()) {
        for (const auto& d : ds.domain_names)
            if (std::find(aux_domains.begin(), aux_domains.end(), d) == aux_domains.end())
                sources.push_back(d);
    }
    if (sources.empty()) throw ProtocolError("no source domains remain");

    switch (cfg.mode) {
        case Mode::dg:
            if (!aux_domains.empty())
                throw ProtocolError(
                    "dg mode scrambles the sources themselves; auxiliary domains not allowed");
            break;
        case Mode::null_hypothesis:
            if (!aux_domains.empty())
                throw ProtocolError("the null hypothesis trains without auxiliary data");
            if (arch.isolation)
                throw ProtocolError(
                    "the null hypothesis requires isolation off (plain residual training)");
            break;
        case Mode::da:
            if (aux_domains.size() != 1)
                throw ProtocolError("da mode needs exactly one target domain, got " +
                                    std::to_string(aux_domains.size()));
            break;
        case Mode::pda:
            if (aux_domains.empty())
                throw ProtocolError("pda mode needs at least one auxiliary domain");
            break;
    }

    // The null hypothesis never builds auxiliary batches, so the pretext
    // geometry is irrelevant there.
    int side = 0;
    if (cfg.mode != Mode::null_hypothesis) {
        if (cfg.task == tasks::Task::jigsaw) {
            if (opts.perm_set == nullptr || opts.perm_set->size() == 0)
                throw ConfigError("jigsaw training requires a permutation set");
            const int n = opts.perm_set->n;
            side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
            if (side * side != n)
                throw ConfigError("permutation length " + std::to_string(n) +
                                  " is not a square tile grid");
            if (arch.input_size % side != 0)
                throw ConfigError("input size " + std::to_string(arch.input_size) +
                                  " does not tile into a " + std::to_string(side) + "x" +
                                  std::to_string(side) + " grid");
            if (arch.num_pretext != opts.perm_set->size())
                throw ConfigError("model has " + std::to_string(arch.num_pretext) +
                                  " pretext outputs but the permutation set holds " +
                                  std::to_string(opts.perm_set->size()));
        } else if (arch.num_pretext != tasks::kRotationLabels) {
            throw ConfigError("rotation pretext needs " + std::to_string(tasks::kRotationLabels) +
                              " pretext outputs, model has " + std::to_string(arch.num_pretext));
        }
    }

    std::vector<size_t> source_idx;
    for (const auto& d : sources) {
        const auto v = ds.domain_indices(d);
        source_idx.insert(source_idx.end(), v.begin(), v.end());
    }
    std::sort(source_idx.begin(), source_idx.end());
    if (source_idx.empty()) throw EmptyInputError("fit: source domains hold no samples");

    // Primary train/val and the auxiliary sample pool, per mode. DA keeps all
    // source samples for training because its model selection runs on the
    // pretext task over a target holdout, not on labeled source data.
    std::vector<size_t> train_idx, val_idx, aux_idx;
    std::string target;
    if (cfg.mode == Mode::da) {
        target = aux_domains.front();
        train_idx = source_idx;
        std::vector<size_t> target_idx = ds.domain_indices(target);
        if (target_idx.size() < 2)
            throw EmptyInputError("da mode cannot hold out a validation split from " +
                                  std::to_string(target_idx.size()) + " target samples");
        Rng rng(derive_seed(cfg.seed, "fit.targetholdout"));
        rng.shuffle(target_idx);
        auto held = static_cast<size_t>(std::llround(cfg.val_fraction *
                                                     static_cast<double>(target_idx.size())));
        held = std::clamp<size_t>(held, 1, target_idx.size() - 1);
        val_idx.assign(target_idx.begin(), target_idx.begin() + static_cast<ptrdiff_t>(held));
        aux_idx.assign(target_idx.begin() + static_cast<ptrdiff_t>(held), target_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
        std::sort(aux_idx.begin(), aux_idx.end());
    } else {
        const data::Split split = data::split_indices(ds, source_idx, cfg.val_fraction, cfg.seed);
        train_idx = split.train;
        val_idx = split.val;
        if (cfg.mode == Mode::dg) {
            aux_idx = train_idx;
        } else if (cfg.mode == Mode::pda) {
            for (const auto& d : aux_domains) {
                const auto v = ds.domain_indices(d);
                aux_idx.insert(aux_idx.end(), v.begin(), v.end());
            }
            std::sort(aux_idx.begin(), aux_idx.end());
            if (aux_idx.empty())
                throw EmptyInputError("fit: auxiliary domains hold no samples");
        }
    }
    if (train_idx.empty()) throw EmptyInputError("fit: training split is empty");
    if (val_idx.empty()) throw EmptyInputError("fit: validation split is empty");

    std::vector<Image> cache(ds.samples.size());
    std::vector<char> cached(ds.samples.size(), 0);
    const auto ensure_cached = [&](const std::vector<size_t>& idx) {
        for (size_t i : idx) {
            if (!cached[i]) {
                cache[i] = to_float(ds.samples[i].image);
                cached[i] = 1;
            }
        }
    };
    ensure_cached(train_idx);
    ensure_cached(aux_idx);

    tasks::AugmentConfig aug = opts.augment;
    aug.crop_size = arch.input_size;

    std::vector<tasks::SourceSample> aux_sources;
    aux_sources.reserve(aux_idx.size());
    for (size_t i : aux_idx)
        aux_sources.push_back({&cache[i], ds.samples[i].domain + "|" + ds.samples[i].id});

    // DA model selection: a fixed pretext holdout, one deterministic variant
    // per held-out target image, evaluated every epoch with running stats.
    std::vector<EvalBatch> holdout_batches;
    if (cfg.mode == Mode::da) {
        ensure_cached(val_idx);
        std::vector<tasks::SSVariant> variants;
        variants.reserve(val_idx.size());
        for (size_t k = 0; k < val_idx.size(); ++k) {
            Rng rng(derive_seed(cfg.seed, "fit.valss", k));
            const Image plain = tasks::prepare_plain(cache[val_idx[k]], arch.input_size);
            if (cfg.task == tasks::Task::jigsaw) {
                const auto label = rng.index(static_cast<size_t>(opts.perm_set->size()));
                variants.push_back(tasks::scramble(plain, opts.perm_set->permutations[label], side,
                                                   side, *opts.perm_set));
            } else {
                const auto label = rng.index(tasks::kRotationLabels);
                variants.push_back(tasks::rotate(plain, static_cast<int>(label)));
            }
        }
        holdout_batches = pack_eval_batches(std::move(variants), 64);
    }

    if (!opts.workdir.empty()) std::filesystem::create_directories(opts.workdir);

    FitResult result{TrainState(net::GeosModel::build(arch)), {}, {}};
    result.state.optimizer =
        Optimizer(cfg.optimizer, cfg.lr_main, cfg.lr_head, cfg.momentum, cfg.weight_decay);
    FlowAudit* audit = opts.audit_parameter_flow ? &result.audit : nullptr;

    const net::CheckpointMeta meta{opts.config_hash, cfg.seed, opts.permset_hash, arch.isolation,
                                   to_string(cfg.mode)};
    const auto bsp = static_cast<size_t>(cfg.batch_size_primary);
    const size_t iters = (train_idx.size() + bsp - 1) / bsp;
    std::vector<std::pair<std::string, Tensor>> best_state;

    for (int e = 0; e < cfg.epochs; ++e) {
        const bool decayed = cfg.lr_decay.at_epoch > 0 && e + 1 > cfg.lr_decay.at_epoch;
        const double scale = decayed ? 1.0 / cfg.lr_decay.factor : 1.0;
        result.state.optimizer.set_lr_scale(scale);

        std::vector<size_t> order = train_idx;
        {
            Rng rng(derive_seed(cfg.seed, "fit.order", static_cast<uint64_t>(e)));
            rng.shuffle(order);
        }

        double sum_lp = 0.0, sum_la = 0.0;
        for (size_t it = 0; it < iters; ++it) {
            const size_t lo = it * bsp;
            const size_t hi = std::min(order.size(), lo + bsp);
            const auto count = static_cast<ptrdiff_t>(hi - lo);

            std::vector<Image> images(static_cast<size_t>(count));
#pragma omp parallel for schedule(static)
            for (ptrdiff_t s = 0; s < count; ++s) {
                const uint64_t slot =
                    (static_cast<uint64_t>(e) * iters + it) * bsp + static_cast<uint64_t>(s);
                Rng rng(derive_seed(cfg.seed, "fit.paug", slot));
                images[static_cast<size_t>(s)] = tasks::augment(cache[order[lo + s]], aug, rng);
            }
            Batch pb;
            std::vector<const Image*> ptrs;
            for (ptrdiff_t s = 0; s < count; ++s) {
                ptrs.push_back(&images[static_cast<size_t>(s)]);
                pb.labels.push_back(ds.samples[order[lo + s]].label);
            }
            pb.x = net::batch_to_tensor(ptrs);
            pb.id = "primary epoch " + std::to_string(e + 1) + " iter " + std::to_string(it + 1);

            Batch ab;
            const bool has_aux = cfg.mode != Mode::null_hypothesis;
            if (has_aux) {
                auto variants = tasks::make_ss_batch(
                    aux_sources, cfg.task, opts.perm_set, cfg.batch_size_auxiliary,
                    derive_seed(cfg.seed, "fit.aux", static_cast<uint64_t>(e) * iters + it), aug,
                    side, side);
                if (cfg.mode == Mode::da) {
                    for (const auto& v : variants)
                        if (v.source_id.rfind(target + "|", 0) != 0)
                            throw ProtocolError("auxiliary batch contains a non-target sample '" +
                                                v.source_id + "'");
                }
                std::vector<const Image*> aptrs;
                for (const auto& v : variants) {
                    aptrs.push_back(&v.image);
                    ab.labels.push_back(v.label);
                }
                ab.x = net::batch_to_tensor(aptrs);
                ab.id =
                    "auxiliary epoch " + std::to_string(e + 1) + " iter " + std::to_string(it + 1);
            }

            const StepLosses sl =
                train_step(result.state, cfg, pb, has_aux ? &ab : nullptr, audit);
            sum_lp += sl.primary;
            sum_la += sl.auxiliary;
        }
        result.state.epoch = e + 1;

        const double val = cfg.mode == Mode::da
                               ? pretext_accuracy(result.state.model, holdout_batches)
                               : evaluate(result.state.model, ds, val_idx);

        result.log.push_back({e + 1, sum_lp / static_cast<double>(iters),
                              sum_la / static_cast<double>(iters), val, cfg.lr_main * scale});

        if (val > result.state.best_val_metric) {
            result.state.best_val_metric = val;
            result.state.best_epoch = e + 1;
            best_state.clear();
            for (const auto& ref : std::as_const(result.state.model).state())
                best_state.emplace_back(ref.name, *ref.tensor);
            if (!opts.workdir.empty())
                net::save_checkpoint(result.state.model, meta, opts.workdir / "checkpoint.bin");
        }
    }

    for (auto& ref : result.state.model.state()) {
        const auto it = std::find_if(best_state.begin(), best_state.end(),
                                     [&](const auto& kv) { return kv.first == ref.name; });
        if (it == best_state.end())
            throw Error("best-state record is missing tensor '" + ref.name + "'");
        *ref.tensor = it->second;
    }
    if (!opts.workdir.empty()) write_epoch_log(result.log, opts.workdir / "log.csv");
    return result;
}

double evaluate(net::GeosModel& model, const data::DomainDataset& ds,
                const std::vector<size_t>& indices, int batch_size) {
    if (indices.empty()) throw EmptyInputError("evaluate: no samples given");
    if (batch_size < 1) throw ConfigError("evaluate: batch_size must be >= 1");
    const int input = model.config().input_size;
    size_t correct = 0;
    for (size_t lo = 0; lo < indices.size(); lo += static_cast<size_t>(batch_size)) {
        const size_t hi = std::min(indices.size(), lo + static_cast<size_t>(batch_size));
        const auto count = static_cast<ptrdiff_t>(hi - lo);
        std::vector<Image> images(static_cast<size_t>(count));
#pragma omp parallel for schedule(static)
        for (ptrdiff_t s = 0; s < count; ++s)
            images[static_cast<size_t>(s)] =
                tasks::prepare_plain(to_float(ds.samples[indices[lo + s]].image), input);
        std::vector<const Image*> ptrs;
        for (ptrdiff_t s = 0; s < count; ++s) ptrs.push_back(&images[static_cast<size_t>(s)]);
        const auto out = model.forward_primary(net::batch_to_tensor(ptrs), false);
        const auto pred = net::argmax_rows(out.primary_logits);
        for (ptrdiff_t s = 0; s < count; ++s)
            correct += pred[static_cast<size_t>(s)] == ds.samples[indices[lo + s]].label;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

void write_epoch_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write epoch log " + path.string());
    out << "epoch,loss_primary,loss_auxiliary,val_metric,lr\n";
    for (const auto& row : log)
        out << row.epoch << ',' << format_double(row.loss_primary) << ','
            << format_double(row.loss_auxiliary) << ',' << format_double(row.val_metric) << ','
            << format_double(row.lr) << "\n";
    if (!out) throw Error("failed while writing epoch log " + path.string());
}

}  // namespace geos::train
