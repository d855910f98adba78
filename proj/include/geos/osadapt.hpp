#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geos/datasets.hpp"
#include "geos/netcore.hpp"
#include "geos/permset.hpp"
#include "geos/sstasks.hpp"
#include "geos/trainer.hpp"

namespace geos::osa {

// One-sample adaptation settings. The optimizer hyperparameters deliberately
// mirror the training configuration (see os_from_training); only the
// iteration budget and the per-iteration variant batch are specific to
// adaptation time.
struct OSConfig {
    int iterations = 3;
    int batch_size = 128;
    tasks::Task task = tasks::Task::jigsaw;
    train::OptKind optimizer = train::OptKind::sgd_momentum;
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    uint64_t seed = 0;
    tasks::AugmentConfig augment;
};

void validate(const OSConfig& cfg);

// Carries the optimizer hyperparameters, pretext task and augmentation
// policy over from training, which is the intended deployment pairing.
OSConfig os_from_training(const train::TrainConfig& cfg);

// Everything observable about one sample's adaptation run. predicted[k] is
// the argmax after k update steps (so predicted.front() is the un-adapted
// prediction and predicted.size() == iterations + 1). aux_losses[k] is the
// pretext loss with the weights after k updates, measured on that
// iteration's own freshly seeded batch - the same forward that feeds the
// next update - so aux_losses.front() is the un-adapted loss level and the
// vector has one entry per iteration.
struct OSTrace {
    std::vector<int> predicted;
    std::vector<double> aux_losses;
    Tensor pre_logits;
    Tensor post_logits;
    bool lambda_restored = false;
};

// Fine-tunes only the auxiliary block on seeded variant batches of the one
// given image, predicts with the adapted weights, then restores the block
// (parameters and normalization buffers) bitwise - also when an iteration
// diverges, in which case AdaptationDivergenceError carries the sample id.
// The backbone and primary head are never stepped. With iterations == 0 the
// returned logits are bitwise identical to plain inference.
std::pair<int, OSTrace> adapt_and_predict(net::GeosModel& model, const Image& sample,
                                          const std::string& sample_id, const OSConfig& cfg,
                                          const perms::PermutationSet* perm_set);

struct SweepRow {
    size_t sample_index = 0;  // index into the dataset, not into the subset
    std::string sample_id;
    int label = -1;
    std::vector<int> predicted;
    std::vector<double> aux_losses;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    // accuracy_by_iteration[k] scores predicted[k] against the labels, so a
    // budget of max iterations yields max + 1 columns.
    std::vector<double> accuracy_by_iteration;
};

// Runs adaptation over a subset of a labeled dataset and scores every
// intermediate iteration count in a single pass per sample. Each sample
// adapts an independent copy of the model with a seed stream derived from
// its dataset index, so results do not depend on subset order or on how the
// per-sample work is scheduled across threads. restart_per_k re-runs each
// sample from scratch for every budget k instead of reading intermediate
// predictions out of one run; it exists to cross-check the single-pass
// shortcut and is otherwise just slower.
SweepResult adapt_batch(const net::GeosModel& model, const data::DomainDataset& ds,
                        const std::vector<size_t>& indices, const OSConfig& cfg,
                        const perms::PermutationSet* perm_set, bool restart_per_k = false);

// CSV dump, one row per sample and iteration count: sample_id, iteration,
// aux_loss, predicted_class. Row k pairs predicted[k] with aux_losses[k],
// both describing the state after k updates; the final row (k == budget) has
// an empty aux_loss field because no batch is generated past the last update.
void write_trace_csv(const SweepResult& result, const std::filesystem::path& path);

}  // namespace geos::osa
