#include "geos/evalproto.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>

#include "geos/errors.hpp"
#include "geos/rng.hpp"

namespace geos::proto {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kCsvHeader = "protocol,target,method,os_iterations,run,seed,accuracy,status";

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
    return std::string(buf, res.ptr);
}

// Percent with two decimals, the paper tables' presentation.
std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

std::string signed_percent(double delta) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.2f", delta * 100.0);
    return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_accuracy(const std::string& s, const std::string& where) {
    if (s == "nan") return kNan;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("bad accuracy '" + s + "' at " + where);
    return v;
}

template <typename T>
T parse_integer(const std::string& s, const std::string& where) {
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("bad integer '" + s + "' at " + where);
    return v;
}

enum class Family { control, jigsaw, rotation };

Family family_of(Method m) {
    switch (m) {
        case Method::null_hypothesis:
            return Family::control;
        case Method::ges:
        case Method::geos:
            return Family::jigsaw;
        case Method::ges_rotation:
        case Method::geos_rotation:
            return Family::rotation;
    }
    throw Error("unhandled method");
}

std::string family_name(Family f) {
    switch (f) {
        case Family::control:
            return "null";
        case Family::jigsaw:
            return "jigsaw";
        case Family::rotation:
            return "rotation";
    }
    throw Error("unhandled family");
}

bool is_adapted(Method m) { return m == Method::geos || m == Method::geos_rotation; }

Method baseline_of(Method m) {
    return m == Method::geos ? Method::ges : Method::ges_rotation;
}

struct CellPlan {
    Protocol protocol = Protocol::dg_loo;
    std::string target_label;
    std::string eval_domain;
    std::vector<std::string> labeled;
    std::vector<std::string> stripped;
    std::vector<std::string> sources;
    std::vector<std::string> aux_domains;
    train::Mode mode = train::Mode::dg;
};

struct FamilyOutcome {
    bool train_failed = false;
    bool os_failed = false;
    double it0 = kNan;
    std::vector<double> os_accuracy;  // index k-1 holds the budget-k accuracy
};

void require_domain(const data::DomainDataset& ds, const std::string& name) {
    if (std::find(ds.domain_names.begin(), ds.domain_names.end(), name) == ds.domain_names.end())
        throw ConfigError("unknown domain '" + name + "'");
}

CellPlan dg_plan(const data::DomainDataset& ds, const std::string& target) {
    require_domain(ds, target);
    CellPlan plan;
    plan.protocol = Protocol::dg_loo;
    plan.target_label = target;
    plan.eval_domain = target;
    for (const auto& d : ds.domain_names)
        if (d != target) plan.labeled.push_back(d);
    plan.mode = train::Mode::dg;
    return plan;
}

CellPlan da_plan(const data::DomainDataset& ds, const std::string& target) {
    require_domain(ds, target);
    CellPlan plan;
    plan.protocol = Protocol::da_multi;
    plan.target_label = target;
    plan.eval_domain = target;
    for (const auto& d : ds.domain_names)
        if (d != target) plan.labeled.push_back(d);
    plan.stripped = {target};
    plan.aux_domains = {target};
    plan.mode = train::Mode::da;
    return plan;
}

CellPlan pda_plan(const data::DomainDataset& ds, const std::string& source,
                  const std::string& target) {
    require_domain(ds, source);
    require_domain(ds, target);
    if (source == target) throw ConfigError("pda pair must use two distinct domains");
    CellPlan plan;
    plan.protocol = Protocol::pda_pairs;
    plan.target_label = source + "->" + target;
    plan.eval_domain = target;
    plan.labeled = {source};
    plan.sources = {source};
    for (const auto& d : ds.domain_names)
        if (d != source && d != target) plan.stripped.push_back(d);
    plan.aux_domains = plan.stripped;
    plan.mode = train::Mode::pda;
    return plan;
}

// Rebuilds the plan a row was produced under, so that replay needs only the
// row itself plus the spec.
CellPlan plan_of_row(const data::DomainDataset& ds, const ResultRow& row) {
    switch (row.protocol) {
        case Protocol::dg_loo:
            return dg_plan(ds, row.target);
        case Protocol::da_multi:
            return da_plan(ds, row.target);
        case Protocol::pda_pairs: {
            const auto sep = row.target.find("->");
            if (sep == std::string::npos)
                throw ConfigError("pda row target '" + row.target +
                                  "' is not a source->target pair");
            return pda_plan(ds, row.target.substr(0, sep), row.target.substr(sep + 2));
        }
    }
    throw Error("unhandled protocol");
}

FamilyOutcome run_family(const data::DomainDataset& ds, const ProtocolSpec& spec,
                         const CellPlan& plan, Family family, uint64_t cell_seed, bool want_os,
                         AuditSummary* audit) {
    // The parameter-count control trains on labeled sources alone: no
    // stripped domains, no auxiliary task, isolation off.
    const bool control = family == Family::control;
    const std::vector<std::string> stripped =
        control ? std::vector<std::string>{} : plan.stripped;
    const data::DomainDataset train_ds = protocol_training_set(ds, plan.labeled, stripped);
    const std::vector<size_t> eval_idx = ds.domain_indices(plan.eval_domain);

    if (audit != nullptr) {
        audit->cells += 1;
        if (!stripped.empty()) audit->stripped_cells += 1;
        std::set<std::string> labeled_ids;
        for (const auto& s : train_ds.samples)
            if (s.label != kStrippedLabel) labeled_ids.insert(s.domain + "|" + s.id);
        for (size_t i : eval_idx)
            if (labeled_ids.count(ds.samples[i].domain + "|" + ds.samples[i].id) != 0)
                audit->leaked_ids += 1;
    }

    train::TrainConfig cfg = spec.config;
    cfg.seed = cell_seed;
    net::BuildConfig arch = spec.arch;
    if (control) {
        cfg.mode = train::Mode::null_hypothesis;
        arch.isolation = false;
    } else {
        cfg.mode = plan.mode;
        cfg.task = family == Family::rotation ? tasks::Task::rotation : tasks::Task::jigsaw;
        arch.num_pretext =
            family == Family::rotation ? tasks::kRotationLabels : spec.perm_set->size();
    }

    train::FitOptions opts;
    opts.augment = spec.augment;
    if (family == Family::jigsaw) opts.perm_set = spec.perm_set;

    FamilyOutcome out;
    try {
        auto fitted = train::fit(cfg, arch, train_ds, plan.sources,
                                 control ? std::vector<std::string>{} : plan.aux_domains, opts);
        out.it0 = train::evaluate(fitted.state.model, ds, eval_idx);
        if (want_os && !control) {
            osa::OSConfig os = osa::os_from_training(cfg);
            os.iterations = spec.os_iterations;
            os.batch_size = spec.os_batch_size;
            os.seed = derive_seed(cell_seed, "protocol.os");
            os.augment = spec.augment;
            try {
                const auto sweep =
                    osa::adapt_batch(fitted.state.model, ds, eval_idx, os,
                                     family == Family::jigsaw ? spec.perm_set : nullptr);
                for (int k = 1; k <= spec.os_iterations; ++k)
                    out.os_accuracy.push_back(
                        sweep.accuracy_by_iteration[static_cast<size_t>(k)]);
            } catch (const DivergenceError&) {
                out.os_failed = true;
            }
        }
    } catch (const DivergenceError&) {
        out.train_failed = true;
        out.os_failed = true;
    }
    return out;
}

uint64_t cell_seed_of(const ProtocolSpec& spec, const CellPlan& plan, Family family, int run) {
    return derive_seed(spec.seed,
                       "cell." + to_string(plan.protocol) + "." + plan.target_label + "." +
                           family_name(family),
                       static_cast<uint64_t>(run));
}

void emit_cell(const data::DomainDataset& ds, const ProtocolSpec& spec, const CellPlan& plan,
               int run, ProtocolResult& result) {
    std::map<Family, FamilyOutcome> outcomes;
    std::map<Family, uint64_t> seeds;
    for (Method m : spec.methods) {
        const Family fam = family_of(m);
        if (outcomes.count(fam) != 0) continue;
        bool want_os = false;
        for (Method other : spec.methods)
            if (family_of(other) == fam && is_adapted(other)) want_os = true;
        const uint64_t seed = cell_seed_of(spec, plan, fam, run);
        outcomes.emplace(fam, run_family(ds, spec, plan, fam, seed, want_os, &result.audit));
        seeds.emplace(fam, seed);
    }

    for (Method m : spec.methods) {
        const FamilyOutcome& oc = outcomes.at(family_of(m));
        ResultRow base;
        base.protocol = plan.protocol;
        base.target = plan.target_label;
        base.method = m;
        base.run = run;
        base.seed = seeds.at(family_of(m));
        if (!is_adapted(m)) {
            base.os_iterations = 0;
            base.failed = oc.train_failed;
            base.accuracy = oc.train_failed ? kNan : oc.it0;
            result.rows.push_back(base);
        } else {
            for (int k = 1; k <= spec.os_iterations; ++k) {
                ResultRow row = base;
                row.os_iterations = k;
                row.failed = oc.train_failed || oc.os_failed;
                row.accuracy = row.failed ? kNan : oc.os_accuracy[static_cast<size_t>(k - 1)];
                result.rows.push_back(row);
            }
        }
    }
}

void require_protocol(const ProtocolSpec& spec, Protocol expected, const char* runner) {
    if (spec.protocol != expected)
        throw ConfigError(std::string(runner) + " requires spec.protocol == " +
                          to_string(expected) + ", got " + to_string(spec.protocol));
}

}  // namespace

Method method_from_string(const std::string& s) {
    if (s == "null") return Method::null_hypothesis;
    if (s == "ges") return Method::ges;
    if (s == "geos") return Method::geos;
    if (s == "ges_rotation") return Method::ges_rotation;
    if (s == "geos_rotation") return Method::geos_rotation;
    throw ConfigError("unknown method '" + s +
                      "' (expected null, ges, geos, ges_rotation or geos_rotation)");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::null_hypothesis:
            return "null";
        case Method::ges:
            return "ges";
        case Method::geos:
            return "geos";
        case Method::ges_rotation:
            return "ges_rotation";
        case Method::geos_rotation:
            return "geos_rotation";
    }
    throw Error("unhandled method");
}

Protocol protocol_from_string(const std::string& s) {
    if (s == "dg_loo") return Protocol::dg_loo;
    if (s == "da_multi") return Protocol::da_multi;
    if (s == "pda_pairs") return Protocol::pda_pairs;
    throw ConfigError("unknown protocol '" + s +
                      "' (expected dg_loo, da_multi or pda_pairs)");
}

std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::dg_loo:
            return "dg_loo";
        case Protocol::da_multi:
            return "da_multi";
        case Protocol::pda_pairs:
            return "pda_pairs";
    }
    throw Error("unhandled protocol");
}

void validate(const ProtocolSpec& spec) {
    if (spec.repetitions < 1)
        throw ConfigError("repetitions must be >= 1, got " + std::to_string(spec.repetitions));
    if (spec.methods.empty()) throw ConfigError("methods list is empty");
    std::set<Method> seen;
    for (Method m : spec.methods)
        if (!seen.insert(m).second) throw ConfigError("duplicate method " + to_string(m));
    if (spec.os_iterations < 0)
        throw ConfigError("os_iterations must be >= 0, got " +
                          std::to_string(spec.os_iterations));
    bool adapted = false;
    bool jigsaw = false;
    for (Method m : spec.methods) {
        adapted = adapted || is_adapted(m);
        jigsaw = jigsaw || family_of(m) == Family::jigsaw;
    }
    if (adapted && spec.os_iterations < 1)
        throw ConfigError("adapted methods need os_iterations >= 1");
    if (spec.os_batch_size < 1)
        throw ConfigError("os_batch_size must be >= 1, got " +
                          std::to_string(spec.os_batch_size));
    if (spec.max_pairs < 1)
        throw ConfigError("max_pairs must be >= 1, got " + std::to_string(spec.max_pairs));
    if (jigsaw && (spec.perm_set == nullptr || spec.perm_set->size() == 0))
        throw ConfigError("jigsaw methods require a permutation set");
    train::validate(spec.config);
}

bool any_failed(const ProtocolResult& result) {
    for (const auto& row : result.rows)
        if (row.failed) return true;
    return false;
}

void merge(ProtocolResult& into, ProtocolResult&& more) {
    into.rows.insert(into.rows.end(), std::make_move_iterator(more.rows.begin()),
                     std::make_move_iterator(more.rows.end()));
    into.audit.cells += more.audit.cells;
    into.audit.leaked_ids += more.audit.leaked_ids;
    into.audit.stripped_cells += more.audit.stripped_cells;
    into.audit.subsampled_pairs = into.audit.subsampled_pairs || more.audit.subsampled_pairs;
}

data::DomainDataset protocol_training_set(const data::DomainDataset& ds,
                                          const std::vector<std::string>& labeled,
                                          const std::vector<std::string>& stripped) {
    const std::set<std::string> keep_labeled(labeled.begin(), labeled.end());
    const std::set<std::string> keep_stripped(stripped.begin(), stripped.end());
    for (const auto& d : keep_labeled)
        if (keep_stripped.count(d) != 0)
            throw ConfigError("domain '" + d + "' listed both labeled and stripped");
    for (const auto& d : keep_labeled) require_domain(ds, d);
    for (const auto& d : keep_stripped) require_domain(ds, d);

    data::DomainDataset out;
    out.class_names = ds.class_names;
    out.resolution = ds.resolution;
    for (const auto& d : ds.domain_names)
        if (keep_labeled.count(d) != 0 || keep_stripped.count(d) != 0)
            out.domain_names.push_back(d);
    for (const auto& s : ds.samples) {
        if (keep_labeled.count(s.domain) != 0) {
            out.samples.push_back(s);
        } else if (keep_stripped.count(s.domain) != 0) {
            data::Sample copy = s;
            copy.label = kStrippedLabel;
            out.samples.push_back(std::move(copy));
        }
    }
    if (out.samples.empty()) throw EmptyInputError("training set has no samples");
    return out;
}

ProtocolResult run_dg_loo(const data::DomainDataset& ds, const ProtocolSpec& spec) {
    validate(spec);
    require_protocol(spec, Protocol::dg_loo, "run_dg_loo");
    if (ds.domain_names.size() < 2)
        throw ProtocolError("leave-one-domain-out needs at least two domains, got " +
                            std::to_string(ds.domain_names.size()));
    ProtocolResult result;
    for (const auto& target : ds.domain_names) {
        const CellPlan plan = dg_plan(ds, target);
        for (int run = 1; run <= spec.repetitions; ++run)
            emit_cell(ds, spec, plan, run, result);
    }
    return result;
}

ProtocolResult run_da(const data::DomainDataset& ds, const std::string& target,
                      const ProtocolSpec& spec) {
    validate(spec);
    require_protocol(spec, Protocol::da_multi, "run_da");
    if (ds.domain_names.size() < 2)
        throw ProtocolError("adaptation needs at least two domains, got " +
                            std::to_string(ds.domain_names.size()));
    const CellPlan plan = da_plan(ds, target);
    ProtocolResult result;
    for (int run = 1; run <= spec.repetitions; ++run) emit_cell(ds, spec, plan, run, result);
    return result;
}

ProtocolResult run_pda(const data::DomainDataset& ds, const ProtocolSpec& spec) {
    validate(spec);
    require_protocol(spec, Protocol::pda_pairs, "run_pda");
    if (ds.domain_names.size() < 3)
        throw ProtocolError("pda needs at least three domains, got " +
                            std::to_string(ds.domain_names.size()));

    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& src : ds.domain_names)
        for (const auto& tgt : ds.domain_names)
            if (src != tgt) pairs.emplace_back(src, tgt);

    ProtocolResult result;
    if (!spec.full_sweep && pairs.size() > static_cast<size_t>(spec.max_pairs)) {
        Rng rng(derive_seed(spec.seed, "pda.pairs"));
        rng.shuffle(pairs);
        pairs.resize(static_cast<size_t>(spec.max_pairs));
        std::sort(pairs.begin(), pairs.end());
        result.audit.subsampled_pairs = true;
    }

    for (const auto& [src, tgt] : pairs) {
        const CellPlan plan = pda_plan(ds, src, tgt);
        for (int run = 1; run <= spec.repetitions; ++run)
            emit_cell(ds, spec, plan, run, result);
    }
    return result;
}

double replay_row(const data::DomainDataset& ds, const ProtocolSpec& spec, const ResultRow& row) {
    validate(spec);
    const CellPlan plan = plan_of_row(ds, row);
    const Family fam = family_of(row.method);
    if (is_adapted(row.method) &&
        (row.os_iterations < 1 || row.os_iterations > spec.os_iterations))
        throw ConfigError("row budget " + std::to_string(row.os_iterations) +
                          " outside the spec's os_iterations");
    const FamilyOutcome oc =
        run_family(ds, spec, plan, fam, row.seed, is_adapted(row.method), nullptr);
    if (oc.train_failed || (is_adapted(row.method) && oc.os_failed)) return kNan;
    if (!is_adapted(row.method)) return oc.it0;
    return oc.os_accuracy[static_cast<size_t>(row.os_iterations - 1)];
}

std::vector<MethodAggregate> aggregate(const ProtocolResult& result) {
    std::vector<std::pair<Method, int>> order;
    std::map<std::pair<int, int>, std::map<std::string, std::pair<double, int>>> sums;
    for (const auto& row : result.rows) {
        const std::pair<Method, int> key{row.method, row.os_iterations};
        if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
        if (row.failed) continue;
        auto& cell = sums[{static_cast<int>(row.method), row.os_iterations}][row.target];
        cell.first += row.accuracy;
        cell.second += 1;
    }

    std::vector<MethodAggregate> out;
    for (const auto& [method, iterations] : order) {
        const auto it = sums.find({static_cast<int>(method), iterations});
        if (it == sums.end() || it->second.empty()) continue;  // every row failed
        MethodAggregate agg;
        agg.method = method;
        agg.os_iterations = iterations;
        double total = 0.0;
        for (const auto& [target, cell] : it->second) {
            const double mean = cell.first / cell.second;
            agg.per_target.emplace_back(target, mean);
            total += mean;
        }
        agg.overall = total / static_cast<double>(agg.per_target.size());
        out.push_back(std::move(agg));
    }
    return out;
}

void write_result_csv(const ProtocolResult& result, const std::filesystem::path& path) {
    if (result.rows.empty()) throw EmptyInputError("refusing to write an empty result");
    std::ofstream out(path);
    if (!out) throw Error("cannot write result file " + path.string());
    out << kCsvHeader << '\n';
    for (const auto& row : result.rows) {
        out << to_string(row.protocol) << ',' << row.target << ',' << to_string(row.method)
            << ',' << row.os_iterations << ',' << row.run << ',' << row.seed << ','
            << format_double(row.accuracy) << ',' << (row.failed ? "failed" : "ok") << '\n';
    }
    out.flush();
    if (!out.good()) throw Error("failed writing result file " + path.string());
}

ProtocolResult load_result_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open result file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty result file " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader)
        throw ParseError("result header mismatch in " + path.string() + ": got '" + line + "'");

    ProtocolResult result;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        const auto fields = split_fields(line);
        if (fields.size() != 8)
            throw ParseError("expected 8 fields, got " + std::to_string(fields.size()) + " at " +
                             where);
        ResultRow row;
        row.protocol = protocol_from_string(fields[0]);
        row.target = fields[1];
        row.method = method_from_string(fields[2]);
        row.os_iterations = parse_integer<int>(fields[3], where);
        row.run = parse_integer<int>(fields[4], where);
        row.seed = parse_integer<uint64_t>(fields[5], where);
        row.accuracy = parse_accuracy(fields[6], where);
        if (fields[7] == "ok")
            row.failed = false;
        else if (fields[7] == "failed")
            row.failed = true;
        else
            throw ParseError("bad status '" + fields[7] + "' at " + where);
        result.rows.push_back(std::move(row));
    }
    if (result.rows.empty()) throw ParseError("result file has no rows: " + path.string());
    return result;
}

void write_markdown_table(const ProtocolResult& result, const std::filesystem::path& path) {
    if (result.rows.empty()) throw EmptyInputError("refusing to render an empty result");
    std::ofstream out(path);
    if (!out) throw Error("cannot write report file " + path.string());

    std::vector<Protocol> protocols;
    for (const auto& row : result.rows)
        if (std::find(protocols.begin(), protocols.end(), row.protocol) == protocols.end())
            protocols.push_back(row.protocol);

    for (Protocol p : protocols) {
        ProtocolResult sub;
        for (const auto& row : result.rows)
            if (row.protocol == p) sub.rows.push_back(row);
        const auto groups = aggregate(sub);

        out << "# " << to_string(p) << " results\n\n";
        if (groups.empty()) {
            out << "_Every row failed._\n\n";
            continue;
        }

        std::set<std::string> target_set;
        for (const auto& g : groups)
            for (const auto& [target, mean] : g.per_target) target_set.insert(target);
        const std::vector<std::string> targets(target_set.begin(), target_set.end());

        out << "| Method | It |";
        for (const auto& t : targets) out << ' ' << t << " |";
        out << " Avg |\n";
        out << "|---|---:|";
        for (size_t i = 0; i < targets.size(); ++i) out << "---:|";
        out << "---:|\n";

        for (const auto& g : groups) {
            out << "| " << to_string(g.method) << " | " << g.os_iterations << " |";
            for (const auto& t : targets) {
                const auto it = std::find_if(g.per_target.begin(), g.per_target.end(),
                                             [&](const auto& e) { return e.first == t; });
                if (it == g.per_target.end())
                    out << " - |";
                else
                    out << ' ' << percent(it->second) << " |";
            }
            out << ' ' << percent(g.overall) << " |\n";
        }
        out << '\n';
    }
    out.flush();
    if (!out.good()) throw Error("failed writing report file " + path.string());
}

void write_iteration_gains(const ProtocolResult& result, const std::filesystem::path& path) {
    if (result.rows.empty()) throw EmptyInputError("refusing to render an empty result");
    std::ofstream out(path);
    if (!out) throw Error("cannot write report file " + path.string());

    // Baselines: un-adapted accuracy per (method family, target, run).
    std::map<std::tuple<int, std::string, int>, double> baseline;
    for (const auto& row : result.rows)
        if (!is_adapted(row.method) && row.method != Method::null_hypothesis && !row.failed)
            baseline[{static_cast<int>(row.method), row.target, row.run}] = row.accuracy;

    std::vector<Method> methods;
    int max_budget = 0;
    for (const auto& row : result.rows) {
        if (!is_adapted(row.method)) continue;
        if (std::find(methods.begin(), methods.end(), row.method) == methods.end())
            methods.push_back(row.method);
        max_budget = std::max(max_budget, row.os_iterations);
    }

    out << "# Accuracy by adaptation budget\n\n";
    if (methods.empty() || max_budget == 0) {
        out << "_No adapted rows present._\n";
        out.flush();
        if (!out.good()) throw Error("failed writing report file " + path.string());
        return;
    }

    out << "| Method | Target | Run | It 0 |";
    for (int k = 1; k <= max_budget; ++k) out << " It " << k << " |";
    out << '\n';
    out << "|---|---|---:|---:|";
    for (int k = 1; k <= max_budget; ++k) out << "---:|";
    out << '\n';

    // Collect adapted accuracies per (method, target, run) keyed by budget.
    std::map<std::tuple<int, std::string, int>, std::map<int, double>> adapted;
    for (const auto& row : result.rows)
        if (is_adapted(row.method) && !row.failed)
            adapted[{static_cast<int>(row.method), row.target, row.run}][row.os_iterations] =
                row.accuracy;

    for (Method m : methods) {
        for (const auto& [key, budgets] : adapted) {
            if (std::get<0>(key) != static_cast<int>(m)) continue;
            const auto base = baseline.find(
                {static_cast<int>(baseline_of(m)), std::get<1>(key), std::get<2>(key)});
            if (base == baseline.end()) continue;  // no un-adapted reference row
            out << "| " << to_string(m) << " | " << std::get<1>(key) << " | "
                << std::get<2>(key) << " | " << percent(base->second) << " |";
            for (int k = 1; k <= max_budget; ++k) {
                const auto it = budgets.find(k);
                if (it == budgets.end())
                    out << " - |";
                else
                    out << ' ' << signed_percent(it->second - base->second) << " |";
            }
            out << '\n';
        }
    }
    out.flush();
    if (!out.good()) throw Error("failed writing report file " + path.string());
}

}  // namespace geos::proto
