#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "geos/datasets.hpp"
#include "geos/netcore.hpp"
#include "geos/permset.hpp"
#include "geos/sstasks.hpp"
#include "geos/tensor.hpp"

namespace geos::train {

enum class Mode { dg, da, pda, null_hypothesis };
enum class OptKind { sgd_momentum, adam };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);
OptKind optimizer_from_string(const std::string& s);
std::string to_string(OptKind k);

struct LrDecay {
    double factor = 1.0;  // learning rates divide by this ...
    int at_epoch = 0;     // ... from this epoch on (1-based boundary); 0 = never
};

struct TrainConfig {
    Mode mode = Mode::dg;
    tasks::Task task = tasks::Task::jigsaw;
    double alpha = 2.0;
    OptKind optimizer = OptKind::sgd_momentum;
    double lr_main = 0.001;
    double lr_head = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int epochs = 40;
    int batch_size_primary = 128;
    int batch_size_auxiliary = 128;
    LrDecay lr_decay;
    uint64_t seed = 0;
    double val_fraction = 0.1;
};

void validate(const TrainConfig& cfg);

// Flat key=value file mirroring the TrainConfig fields (nested decay fields
// as lr_decay.factor / lr_decay.at_epoch). Unknown or duplicate keys are
// configuration errors; omitted keys keep their defaults.
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const TrainConfig& cfg, const std::filesystem::path& path);

// Named presets: "dg" (the struct defaults), "pda_compcars",
// "portraits_decades", "portraits_regions".
TrainConfig preset(const std::string& name);

// Slots are keyed by parameter name, so they survive model moves and apply
// to whichever parameter objects currently carry those names. Heads
// (theta/head, lambda/head) take lr_head, everything else lr_main.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(OptKind kind, double lr_main, double lr_head, double momentum,
              double weight_decay);

    void set_lr_scale(double scale) { lr_scale_ = scale; }
    double effective_lr(const std::string& param_name) const;
    // Applies accumulated gradients to the given parameters; params with
    // trainable=false are skipped entirely.
    void step(const std::vector<net::Param*>& params);

private:
    struct Slot {
        Tensor momentum;  // sgd velocity / adam first moment
        Tensor second;    // adam second moment
        int64_t t = 0;
    };
    OptKind kind_ = OptKind::sgd_momentum;
    double lr_main_ = 0.0, lr_head_ = 0.0, momentum_ = 0.0, weight_decay_ = 0.0;
    double lr_scale_ = 1.0;
    std::map<std::string, Slot> slots_;
};

struct Batch {
    Tensor x;
    std::vector<int> labels;
    std::string id;
};

struct TrainState {
    net::GeosModel model;
    Optimizer optimizer;
    int epoch = 0;
    double best_val_metric = -1.0;
    int best_epoch = -1;

    explicit TrainState(net::GeosModel m) : model(std::move(m)) {}
};

struct StepLosses {
    double primary = 0.0;
    double auxiliary = 0.0;
};

// Violations recorded by the optional parameter-flow audit: outside the
// optimizer step, no forward/backward may mutate the opposite group.
struct FlowAudit {
    std::vector<std::string> violations;
};

// One dual-objective iteration: primary loss backward into theta, then the
// alpha-weighted auxiliary loss backward into lambda, then a single optimizer
// step over every live group. The auxiliary batch is mandatory except in
// null_hypothesis mode, which rejects one. With alpha=0 the lambda group is
// not touched at all (no gradients, no momentum, no decay) unless isolation
// is off, in which case the primary loss already covers it.
StepLosses train_step(TrainState& state, const TrainConfig& cfg, const Batch& primary,
                      const Batch* aux, FlowAudit* audit = nullptr);

struct EpochLog {
    int epoch = 0;
    double loss_primary = 0.0;
    double loss_auxiliary = 0.0;
    double val_metric = 0.0;
    double lr = 0.0;
};

struct FitOptions {
    const perms::PermutationSet* perm_set = nullptr;  // required for jigsaw
    std::filesystem::path workdir;  // when set: log.csv + checkpoint.bin land here
    tasks::AugmentConfig augment;   // crop_size is forced to the model input size
    bool audit_parameter_flow = false;
    std::string config_hash;   // recorded in checkpoint metadata
    std::string permset_hash;  // likewise
};

struct FitResult {
    TrainState state;  // model holds the best-validation weights
    std::vector<EpochLog> log;
    FlowAudit audit;
};

// Source domains supply the labeled primary stream and the 90/10 validation
// split. aux_domains meaning per mode: dg/null_hypothesis — must be empty
// (dg scrambles the sources themselves); da — exactly the one target domain
// (self-supervision on target only, validated by pretext accuracy on a
// target holdout); pda — one or more auxiliary domains, labels stripped.
FitResult fit(const TrainConfig& cfg, const net::BuildConfig& arch,
              const data::DomainDataset& ds, const std::vector<std::string>& source_domains,
              const std::vector<std::string>& aux_domains, const FitOptions& opts = {});

// Fraction of samples whose argmax primary logit equals the label.
double evaluate(net::GeosModel& model, const data::DomainDataset& ds,
                const std::vector<size_t>& indices, int batch_size = 64);

void write_epoch_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace geos::train
