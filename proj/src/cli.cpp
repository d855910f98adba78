#include "geos/cli.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "geos/datasets.hpp"
#include "geos/errors.hpp"
#include "geos/evalproto.hpp"
#include "geos/netcore.hpp"
#include "geos/osadapt.hpp"
#include "geos/permset.hpp"
#include "geos/sstasks.hpp"
#include "geos/trainer.hpp"

namespace geos::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
    return std::string(buf, res.ptr);
}

void write_json(const ordered_json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out.good()) throw Error("failed while writing " + path.string());
}

// Datasets resolve against --data first; a bare or missing path falls back
// to the GEOS_DATA_ROOT environment variable.
fs::path resolve_data_path(const std::string& flag) {
    const char* root = std::getenv("GEOS_DATA_ROOT");
    if (flag.empty()) {
        if (root != nullptr && *root != '\0') return fs::path(root);
        throw ConfigError("no dataset given: pass --data or set GEOS_DATA_ROOT");
    }
    fs::path p(flag);
    if (!fs::exists(p) && p.is_relative() && root != nullptr && *root != '\0' &&
        fs::exists(fs::path(root) / p))
        return fs::path(root) / p;
    return p;
}

data::DomainDataset load_dataset(const fs::path& path, int resolution, std::ostream& err) {
    if (!fs::exists(path)) throw ConfigError("dataset not found: " + path.string());
    data::LoadReport report;
    data::DomainDataset ds = fs::is_directory(path)
                                 ? data::load_folder(path, resolution, &report)
                                 : data::load_manifest(path, resolution, &report);
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    for (const auto& u : report.unreadable) err << "warning: unreadable " << u << "\n";
    return ds;
}

ordered_json dataset_record(const fs::path& path, const data::DomainDataset& ds) {
    return {{"path", path.string()},
            {"domains", ds.domain_names},
            {"classes", ds.class_names},
            {"resolution", ds.resolution},
            {"samples", ds.samples.size()}};
}

ordered_json file_record(const fs::path& path) {
    return {{"path", path.string()}, {"sha256", file_digest(path)}};
}

ordered_json config_json(const train::TrainConfig& cfg) {
    return {{"mode", train::to_string(cfg.mode)},
            {"task", tasks::to_string(cfg.task)},
            {"alpha", cfg.alpha},
            {"optimizer", train::to_string(cfg.optimizer)},
            {"lr_main", cfg.lr_main},
            {"lr_head", cfg.lr_head},
            {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay},
            {"epochs", cfg.epochs},
            {"batch_size_primary", cfg.batch_size_primary},
            {"batch_size_auxiliary", cfg.batch_size_auxiliary},
            {"lr_decay.factor", cfg.lr_decay.factor},
            {"lr_decay.at_epoch", cfg.lr_decay.at_epoch},
            {"seed", cfg.seed},
            {"val_fraction", cfg.val_fraction}};
}

void set_jobs(int jobs) {
#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#else
    (void)jobs;
#endif
}

// ------------------------------------------------------------------ permgen

struct PermgenOpts {
    int tiles = 9;
    int count = 30;
    uint64_t seed = 0;
    std::string out;
};

int cmd_permgen(const PermgenOpts& o, std::ostream& out) {
    const fs::path out_path(o.out);
    ordered_json manifest;
    manifest["command"] = "permgen";
    manifest["parameters"] = {
        {"tiles", o.tiles}, {"count", o.count}, {"seed", o.seed}, {"out", out_path.string()}};
    manifest["inputs"] = ordered_json::object();
    write_json(manifest, out_path.string() + ".manifest.json");

    const perms::PermutationSet set = perms::generate(o.tiles, o.count, o.seed);
    perms::save(set, out_path);
    out << "min pairwise hamming: " << set.min_pairwise_hamming << "\n";
    out << "wrote " << out_path.string() << "\n";
    return kExitOk;
}

// -------------------------------------------------------------------- synth

struct SynthOpts {
    int domains = 4;
    int classes = 7;
    int per_class = 50;
    int resolution = 66;
    uint64_t seed = 0;
    std::string out;
};

int cmd_synth(const SynthOpts& o, std::ostream& out) {
    const fs::path out_dir(o.out);
    ordered_json manifest;
    manifest["command"] = "synth";
    manifest["parameters"] = {{"domains", o.domains},
                              {"classes", o.classes},
                              {"per_class", o.per_class},
                              {"resolution", o.resolution},
                              {"seed", o.seed},
                              {"out", out_dir.string()}};
    manifest["inputs"] = ordered_json::object();
    write_json(manifest, out_dir / "manifest.json");

    data::SynthSpec spec;
    spec.num_domains = o.domains;
    spec.num_classes = o.classes;
    spec.samples_per_domain_class = o.per_class;
    spec.resolution = o.resolution;
    spec.seed = o.seed;
    const data::DomainDataset ds = data::synthesize(spec);
    data::export_dataset(ds, out_dir / "images");
    out << "wrote " << ds.samples.size() << " images under " << (out_dir / "images").string()
        << "\n";
    return kExitOk;
}

// -------------------------------------------------------------------- train

struct TrainOpts {
    std::string config;
    std::string data;
    std::string mode;
    std::string target;
    std::string source;
    std::string perms;
    std::string out;
    std::string profile = "desk_cnn";
    int resolution = 66;
    bool has_seed = false;
    uint64_t seed = 0;
    int epochs = -1;
    double alpha = -1.0;
    double lr = -1.0;
    int jobs = 0;
};

std::string config_echo(const train::TrainConfig& cfg) {
    std::string line = "resolved: mode=" + train::to_string(cfg.mode) +
                       " task=" + tasks::to_string(cfg.task) +
                       " alpha=" + format_double(cfg.alpha) +
                       " optimizer=" + train::to_string(cfg.optimizer) +
                       " lr=" + format_double(cfg.lr_main);
    if (cfg.lr_head != cfg.lr_main) line += " lr_head=" + format_double(cfg.lr_head);
    line += " momentum=" + format_double(cfg.momentum) +
            " wd=" + format_double(cfg.weight_decay) + " epochs=" + std::to_string(cfg.epochs) +
            " batch=" + std::to_string(cfg.batch_size_primary) + "/" +
            std::to_string(cfg.batch_size_auxiliary) + " seed=" + std::to_string(cfg.seed) +
            " val=" + format_double(cfg.val_fraction);
    return line;
}

int cmd_train(const TrainOpts& o, std::ostream& out, std::ostream& err) {
    set_jobs(o.jobs);
    train::TrainConfig cfg;
    if (!o.config.empty()) cfg = train::load_train_config(o.config);
    if (!o.mode.empty()) cfg.mode = train::mode_from_string(o.mode);
    if (o.has_seed) cfg.seed = o.seed;
    if (o.epochs >= 0) cfg.epochs = o.epochs;
    if (o.alpha >= 0) cfg.alpha = o.alpha;
    if (o.lr >= 0) cfg.lr_main = cfg.lr_head = o.lr;
    train::validate(cfg);

    if (cfg.mode == train::Mode::da && o.target.empty())
        throw ConfigError("--mode da requires --target");
    if (cfg.mode == train::Mode::pda && (o.source.empty() || o.target.empty()))
        throw ConfigError("--mode pda requires --source and --target");

    perms::PermutationSet perm_set;
    if (cfg.task == tasks::Task::jigsaw) {
        if (o.perms.empty()) throw ConfigError("jigsaw training requires --perms");
        perm_set = perms::load(o.perms);
    }

    const fs::path data_path = resolve_data_path(o.data);
    const data::DomainDataset ds = load_dataset(data_path, o.resolution, err);
    const auto& all = ds.domain_names;
    auto others = [&](std::initializer_list<std::string> drop) {
        std::vector<std::string> keep;
        for (const auto& d : all)
            if (std::find(drop.begin(), drop.end(), d) == drop.end()) keep.push_back(d);
        return keep;
    };
    if (!o.target.empty() && std::find(all.begin(), all.end(), o.target) == all.end())
        throw ConfigError("unknown target domain: " + o.target);

    std::vector<std::string> sources, aux, stripped;
    switch (cfg.mode) {
        case train::Mode::dg:
        case train::Mode::null_hypothesis:
            sources = o.target.empty() ? all : others({o.target});
            break;
        case train::Mode::da:
            sources = others({o.target});
            aux = {o.target};
            stripped = {o.target};
            break;
        case train::Mode::pda:
            if (std::find(all.begin(), all.end(), o.source) == all.end())
                throw ConfigError("unknown source domain: " + o.source);
            sources = {o.source};
            aux = others({o.source, o.target});
            stripped = aux;
            break;
    }
    const data::DomainDataset train_set = proto::protocol_training_set(ds, sources, stripped);

    net::BuildConfig arch;
    arch.profile = o.profile;
    arch.input_size = o.resolution;
    arch.input_channels = 3;
    arch.num_classes = train_set.num_classes();
    arch.num_pretext = cfg.task == tasks::Task::jigsaw ? static_cast<int>(perm_set.size())
                                                       : tasks::kRotationLabels;
    arch.isolation = cfg.mode != train::Mode::null_hypothesis;
    arch.zero_init_refine = false;
    arch.seed = cfg.seed;

    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);
    train::save_train_config(cfg, out_dir / "config.txt");

    train::FitOptions opts;
    opts.perm_set = cfg.task == tasks::Task::jigsaw ? &perm_set : nullptr;
    opts.workdir = out_dir;
    opts.config_hash = file_digest(out_dir / "config.txt");
    if (!o.perms.empty()) opts.permset_hash = file_digest(o.perms);

    ordered_json manifest;
    manifest["command"] = "train";
    manifest["parameters"] = {{"mode", train::to_string(cfg.mode)},
                              {"target", o.target},
                              {"source", o.source},
                              {"profile", o.profile},
                              {"resolution", o.resolution},
                              {"out", out_dir.string()}};
    manifest["config"] = config_json(cfg);
    manifest["seed"] = cfg.seed;
    manifest["inputs"] = ordered_json::object();
    if (!o.config.empty()) manifest["inputs"]["config"] = file_record(o.config);
    if (!o.perms.empty()) manifest["inputs"]["permutations"] = file_record(o.perms);
    manifest["inputs"]["dataset"] = dataset_record(data_path, ds);
    write_json(manifest, out_dir / "manifest.json");

    out << config_echo(cfg) << "\n";
    const train::FitResult result = train::fit(cfg, arch, train_set, sources, aux, opts);

    double best_val = 0.0;
    int best_epoch = 0;
    for (const auto& e : result.log)
        if (e.val_metric >= best_val) {
            best_val = e.val_metric;
            best_epoch = e.epoch;
        }
    out << "trained " << result.log.size() << " epochs; best val " << format_double(best_val)
        << " at epoch " << best_epoch << "\n";
    out << "wrote " << (out_dir / "checkpoint.bin").string() << "\n";
    return kExitOk;
}

// --------------------------------------------------------------------- eval

struct EvalOpts {
    std::string checkpoint;
    std::string data;
    std::string target;
    std::string perms;
    std::string task = "jigsaw";
    std::string trace;
    std::string out;
    int os_iterations = 3;
    int os_batch = 128;
    double os_lr = 0.001;
    uint64_t seed = 0;
    int jobs = 0;
};

int cmd_eval(const EvalOpts& o, std::ostream& out, std::ostream& err) {
    set_jobs(o.jobs);
    net::CheckpointMeta meta;
    net::GeosModel model = net::load_checkpoint(o.checkpoint, &meta);
    const net::BuildConfig& arch = model.config();

    osa::OSConfig os;
    os.iterations = o.os_iterations;
    os.batch_size = o.os_batch;
    os.task = tasks::task_from_string(o.task);
    os.lr = o.os_lr;
    os.seed = o.seed;
    osa::validate(os);

    perms::PermutationSet perm_set;
    const perms::PermutationSet* ps = nullptr;
    if (os.task == tasks::Task::jigsaw) {
        if (o.perms.empty()) throw ConfigError("jigsaw adaptation requires --perms");
        perm_set = perms::load(o.perms);
        ps = &perm_set;
        if (static_cast<int>(perm_set.size()) != arch.num_pretext)
            throw ConfigError("checkpoint expects " + std::to_string(arch.num_pretext) +
                              " pretext classes but the permutation set has " +
                              std::to_string(perm_set.size()));
    } else if (arch.num_pretext != tasks::kRotationLabels) {
        throw ConfigError("checkpoint expects " + std::to_string(arch.num_pretext) +
                          " pretext classes; rotation provides " +
                          std::to_string(tasks::kRotationLabels));
    }

    const fs::path data_path = resolve_data_path(o.data);
    const data::DomainDataset ds = load_dataset(data_path, arch.input_size, err);
    if (ds.num_classes() != arch.num_classes)
        throw ConfigError("checkpoint predicts " + std::to_string(arch.num_classes) +
                          " classes but the dataset has " + std::to_string(ds.num_classes()));

    std::vector<size_t> indices;
    if (o.target.empty()) {
        indices.resize(ds.samples.size());
        for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    } else {
        indices = ds.domain_indices(o.target);
        if (indices.empty()) throw ConfigError("unknown target domain: " + o.target);
    }

    if (!o.out.empty()) {
        ordered_json manifest;
        manifest["command"] = "eval";
        manifest["parameters"] = {{"target", o.target},
                                  {"task", o.task},
                                  {"os_iterations", os.iterations},
                                  {"os_batch", os.batch_size},
                                  {"os_lr", os.lr},
                                  {"seed", os.seed}};
        manifest["inputs"] = ordered_json::object();
        manifest["inputs"]["checkpoint"] = file_record(o.checkpoint);
        if (!o.perms.empty()) manifest["inputs"]["permutations"] = file_record(o.perms);
        manifest["inputs"]["dataset"] = dataset_record(data_path, ds);
        write_json(manifest, fs::path(o.out) / "manifest.json");
    }

    const osa::SweepResult sweep = osa::adapt_batch(model, ds, indices, os, ps);
    for (size_t k = 0; k < sweep.accuracy_by_iteration.size(); ++k)
        out << "it=" << k << " accuracy=" << format_double(sweep.accuracy_by_iteration[k])
            << "\n";

    if (!o.trace.empty()) {
        osa::write_trace_csv(sweep, o.trace);
        out << "wrote " << o.trace << "\n";
    }
    if (!o.out.empty()) {
        const fs::path csv = fs::path(o.out) / "result.csv";
        std::ofstream rs(csv, std::ios::binary);
        if (!rs) throw Error("cannot write " + csv.string());
        rs << "os_iterations,accuracy\n";
        for (size_t k = 0; k < sweep.accuracy_by_iteration.size(); ++k)
            rs << k << "," << format_double(sweep.accuracy_by_iteration[k]) << "\n";
        if (!rs.good()) throw Error("failed while writing " + csv.string());
        out << "wrote " << csv.string() << "\n";
    }
    return kExitOk;
}

// ----------------------------------------------------------------- protocol

struct ProtocolOpts {
    std::string protocol;
    std::string config;
    std::string data;
    std::string target;
    std::string perms;
    std::string out;
    std::string profile = "desk_cnn";
    std::vector<std::string> methods;
    int reps = 1;
    int os_iterations = 3;
    int os_batch = 128;
    bool full_sweep = false;
    int max_pairs = 6;
    uint64_t seed = 0;
    int jobs = 0;
};

int cmd_protocol(const ProtocolOpts& o, std::ostream& out, std::ostream& err) {
    set_jobs(o.jobs);
    proto::ProtocolSpec spec;
    spec.protocol = proto::protocol_from_string(o.protocol);
    spec.repetitions = o.reps;
    spec.os_iterations = o.os_iterations;
    spec.os_batch_size = o.os_batch;
    spec.full_sweep = o.full_sweep;
    spec.max_pairs = o.max_pairs;
    spec.seed = o.seed;
    if (!o.methods.empty()) {
        spec.methods.clear();
        for (const auto& m : o.methods) spec.methods.push_back(proto::method_from_string(m));
    }
    if (!o.config.empty()) spec.config = train::load_train_config(o.config);
    spec.config.seed = o.seed;

    const bool needs_jigsaw =
        std::any_of(spec.methods.begin(), spec.methods.end(), [](proto::Method m) {
            return m == proto::Method::ges || m == proto::Method::geos;
        });
    perms::PermutationSet perm_set;
    if (needs_jigsaw) {
        if (o.perms.empty()) throw ConfigError("jigsaw methods require --perms");
        perm_set = perms::load(o.perms);
        spec.perm_set = &perm_set;
    }

    const fs::path data_path = resolve_data_path(o.data);
    const data::DomainDataset ds = load_dataset(data_path, 66, err);
    spec.arch.profile = o.profile;
    spec.arch.input_size = ds.resolution;
    spec.arch.input_channels = 3;
    spec.arch.num_classes = ds.num_classes();
    spec.arch.num_pretext = needs_jigsaw ? static_cast<int>(perm_set.size())
                                         : tasks::kRotationLabels;
    spec.arch.zero_init_refine = false;
    spec.arch.seed = o.seed;

    if (spec.protocol == proto::Protocol::da_multi && o.target.empty())
        throw ConfigError("--protocol da_multi requires --target");

    std::vector<std::string> method_names;
    for (const auto m : spec.methods) method_names.push_back(proto::to_string(m));

    const fs::path out_dir(o.out);
    ordered_json manifest;
    manifest["command"] = "protocol";
    manifest["parameters"] = {{"protocol", o.protocol},
                              {"target", o.target},
                              {"methods", method_names},
                              {"repetitions", o.reps},
                              {"os_iterations", o.os_iterations},
                              {"os_batch", o.os_batch},
                              {"full_sweep", o.full_sweep},
                              {"max_pairs", o.max_pairs},
                              {"profile", o.profile}};
    manifest["config"] = config_json(spec.config);
    manifest["seed"] = o.seed;
    manifest["inputs"] = ordered_json::object();
    if (!o.config.empty()) manifest["inputs"]["config"] = file_record(o.config);
    if (!o.perms.empty()) manifest["inputs"]["permutations"] = file_record(o.perms);
    manifest["inputs"]["dataset"] = dataset_record(data_path, ds);
    write_json(manifest, out_dir / "manifest.json");

    proto::ProtocolResult result;
    switch (spec.protocol) {
        case proto::Protocol::dg_loo: result = proto::run_dg_loo(ds, spec); break;
        case proto::Protocol::da_multi: result = proto::run_da(ds, o.target, spec); break;
        case proto::Protocol::pda_pairs: result = proto::run_pda(ds, spec); break;
    }

    if (result.audit.subsampled_pairs) {
        std::set<std::string> pairs;
        for (const auto& row : result.rows) pairs.insert(row.target);
        const size_t d = ds.domain_names.size();
        out << "note: subsampled " << pairs.size() << " of " << d * (d - 1)
            << " ordered pairs; pass --full-sweep for all\n";
    }
    size_t failed = 0;
    for (const auto& row : result.rows) failed += row.failed ? 1 : 0;
    if (failed > 0)
        err << "warning: " << failed << " of " << result.rows.size() << " rows failed\n";

    proto::write_result_csv(result, out_dir / "result.csv");
    proto::write_markdown_table(result, out_dir / "result.md");
    out << "wrote " << (out_dir / "result.csv").string() << "\n";
    out << "wrote " << (out_dir / "result.md").string() << "\n";
    return kExitOk;
}

// ------------------------------------------------------------------- report

struct ReportOpts {
    std::string input;
    std::string format = "table";
    std::string out;
};

int cmd_report(const ReportOpts& o, std::ostream& out) {
    if (o.format != "table" && o.format != "gains")
        throw ConfigError("unknown report format: " + o.format + " (expected table or gains)");
    const proto::ProtocolResult result = proto::load_result_csv(o.input);

    const fs::path out_dir(o.out);
    ordered_json manifest;
    manifest["command"] = "report";
    manifest["parameters"] = {{"format", o.format}};
    manifest["inputs"] = ordered_json::object();
    manifest["inputs"]["results"] = file_record(o.input);
    write_json(manifest, out_dir / "manifest.json");

    const fs::path target = out_dir / (o.format == "table" ? "result.md" : "gains.md");
    if (o.format == "table")
        proto::write_markdown_table(result, target);
    else
        proto::write_iteration_gains(result, target);
    out << "wrote " << target.string() << "\n";
    return kExitOk;
}

}  // namespace

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw Error("digest context allocation failed");
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)))
        EVP_DigestUpdate(ctx, buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<size_t>(in.gcount()));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        s.push_back(hex[digest[i] >> 4]);
        s.push_back(hex[digest[i] & 0xf]);
    }
    return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"gradient-isolated auxiliary self-supervision harness"};
    app.name("geos");
    app.require_subcommand(1);

    PermgenOpts pg;
    CLI::App* permgen = app.add_subcommand("permgen", "Generate a tile permutation set");
    permgen->add_option("--tiles", pg.tiles, "Tiles per image (grid cells)");
    permgen->add_option("--count", pg.count, "Permutations in the set");
    permgen->add_option("--seed", pg.seed, "Generation seed");
    permgen->add_option("--out", pg.out, "Output file")->required();

    SynthOpts sy;
    CLI::App* synth = app.add_subcommand("synth", "Render the procedural shape dataset");
    synth->add_option("--domains", sy.domains, "Number of rendering styles");
    synth->add_option("--classes", sy.classes, "Number of shape classes");
    synth->add_option("--per-class", sy.per_class, "Samples per (domain, class)");
    synth->add_option("--resolution", sy.resolution, "Image side in pixels");
    synth->add_option("--seed", sy.seed, "Rendering seed");
    synth->add_option("--out", sy.out, "Output directory")->required();

    TrainOpts tr;
    CLI::App* train_cmd = app.add_subcommand("train", "Fit a model on source domains");
    train_cmd->add_option("--config", tr.config, "Training config file (flags override)")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--data", tr.data, "Dataset folder or manifest csv");
    train_cmd->add_option("--mode", tr.mode, "dg, da, pda, or null");
    train_cmd->add_option("--target", tr.target, "Held-out / adaptation target domain");
    train_cmd->add_option("--source", tr.source, "Labeled source domain (pda only)");
    train_cmd->add_option("--perms", tr.perms, "Permutation-set file (jigsaw)");
    train_cmd->add_option("--out", tr.out, "Output directory")->required();
    train_cmd->add_option("--profile", tr.profile, "Backbone profile");
    train_cmd->add_option("--resolution", tr.resolution, "Model input side in pixels");
    auto* tr_seed = train_cmd->add_option("--seed", tr.seed, "Root seed");
    train_cmd->add_option("--epochs", tr.epochs, "Override epoch count");
    train_cmd->add_option("--alpha", tr.alpha, "Override auxiliary loss weight");
    train_cmd->add_option("--lr", tr.lr, "Override both learning rates");
    train_cmd->add_option("--jobs", tr.jobs, "Worker thread cap");

    EvalOpts ev;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Score a checkpoint with one-sample adaptation");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Trained model archive")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", ev.data, "Dataset folder or manifest csv");
    eval_cmd->add_option("--target", ev.target, "Restrict scoring to one domain");
    eval_cmd->add_option("--perms", ev.perms, "Permutation-set file (jigsaw)");
    eval_cmd->add_option("--task", ev.task, "Pretext task: jigsaw or rotation");
    eval_cmd->add_option("--os-iterations", ev.os_iterations, "Adaptation updates per sample");
    eval_cmd->add_option("--os-batch", ev.os_batch, "Variants per adaptation update");
    eval_cmd->add_option("--os-lr", ev.os_lr, "Adaptation learning rate");
    eval_cmd->add_option("--seed", ev.seed, "Adaptation seed");
    eval_cmd->add_option("--trace", ev.trace, "Per-sample trace csv path");
    eval_cmd->add_option("--out", ev.out, "Output directory (manifest + result.csv)");
    eval_cmd->add_option("--jobs", ev.jobs, "Worker thread cap");

    ProtocolOpts pr;
    CLI::App* protocol_cmd =
        app.add_subcommand("protocol", "Run a full evaluation protocol table");
    protocol_cmd->add_option("--protocol", pr.protocol, "dg_loo, da_multi, or pda_pairs")
        ->required();
    protocol_cmd->add_option("--config", pr.config, "Training config file")
        ->check(CLI::ExistingFile);
    protocol_cmd->add_option("--data", pr.data, "Dataset folder or manifest csv");
    protocol_cmd->add_option("--target", pr.target, "Target domain (da_multi)");
    protocol_cmd->add_option("--perms", pr.perms, "Permutation-set file (jigsaw methods)");
    protocol_cmd->add_option("--out", pr.out, "Output directory")->required();
    protocol_cmd->add_option("--profile", pr.profile, "Backbone profile");
    protocol_cmd->add_option("--method", pr.methods,
                             "Method row to produce (repeatable; default ges and geos)");
    protocol_cmd->add_option("--reps", pr.reps, "Repetitions per cell");
    protocol_cmd->add_option("--os-iterations", pr.os_iterations, "Adaptation budget");
    protocol_cmd->add_option("--os-batch", pr.os_batch, "Variants per adaptation update");
    protocol_cmd->add_flag("--full-sweep", pr.full_sweep, "Run every ordered pda pair");
    protocol_cmd->add_option("--max-pairs", pr.max_pairs, "Pair cap without --full-sweep");
    protocol_cmd->add_option("--seed", pr.seed, "Root seed");
    protocol_cmd->add_option("--jobs", pr.jobs, "Worker thread cap");

    ReportOpts rp;
    CLI::App* report_cmd = app.add_subcommand("report", "Render tables from a result csv");
    report_cmd->add_option("--input", rp.input, "result.csv from a protocol run")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--format", rp.format, "table or gains");
    report_cmd->add_option("--out", rp.out, "Output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        tr.has_seed = tr_seed->count() > 0;
        if (app.got_subcommand(permgen)) return cmd_permgen(pg, out);
        if (app.got_subcommand(synth)) return cmd_synth(sy, out);
        if (app.got_subcommand(train_cmd)) return cmd_train(tr, out, err);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(ev, out, err);
        if (app.got_subcommand(protocol_cmd)) return cmd_protocol(pr, out, err);
        if (app.got_subcommand(report_cmd)) return cmd_report(rp, out);
        throw ConfigError("no subcommand given");
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        err << "run 'geos --help' for the command list\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace geos::cli
