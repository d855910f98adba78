#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "geos/datasets.hpp"
#include "geos/netcore.hpp"
#include "geos/osadapt.hpp"
#include "geos/permset.hpp"
#include "geos/sstasks.hpp"
#include "geos/trainer.hpp"

namespace geos::proto {

// Reported method rows. The two jigsaw methods share one training per cell
// (geos is the same model after per-sample adaptation); likewise the two
// rotation methods. null_hypothesis is the depth/parameter control: same
// architecture, isolation off, no auxiliary loss.
enum class Method { null_hypothesis, ges, geos, ges_rotation, geos_rotation };
Method method_from_string(const std::string& s);
std::string to_string(Method m);

enum class Protocol { dg_loo, da_multi, pda_pairs };
Protocol protocol_from_string(const std::string& s);
std::string to_string(Protocol p);

struct ProtocolSpec {
    Protocol protocol = Protocol::dg_loo;
    int repetitions = 1;
    std::vector<Method> methods{Method::ges, Method::geos};
    int os_iterations = 3;   // adaptation rows cover 1..os_iterations
    int os_batch_size = 128;
    train::TrainConfig config;  // mode, task and seed are overridden per cell
    net::BuildConfig arch;      // num_pretext / isolation overridden per method
    const perms::PermutationSet* perm_set = nullptr;  // required for jigsaw methods
    tasks::AugmentConfig augment;
    // The full ordered-pair sweep is quadratic in the domain count; without
    // the explicit acknowledgment pda runs a seeded subsample of max_pairs.
    bool full_sweep = false;
    int max_pairs = 6;
    uint64_t seed = 0;
};

void validate(const ProtocolSpec& spec);

struct ResultRow {
    Protocol protocol = Protocol::dg_loo;
    std::string target;  // held-out domain; for pda the ordered "source->target" pair
    Method method = Method::ges;
    int os_iterations = 0;  // 0 for un-adapted rows, 1..max for adapted ones
    int run = 1;            // 1-based repetition
    uint64_t seed = 0;      // cell seed; replay_row reproduces accuracy from it
    double accuracy = 0.0;  // fraction; NaN when failed
    bool failed = false;
};

struct AuditSummary {
    int cells = 0;            // training cells executed
    size_t leaked_ids = 0;    // labeled-training ids intersecting evaluation ids
    int stripped_cells = 0;   // cells whose training set carries sentinel labels
    bool subsampled_pairs = false;
};

struct ProtocolResult {
    std::vector<ResultRow> rows;
    AuditSummary audit;
};

bool any_failed(const ProtocolResult& result);
void merge(ProtocolResult& into, ProtocolResult&& more);

// Label value assigned to domains whose annotations the protocol forbids
// reading (unlabeled target in da, auxiliary domains in pda). Any code path
// that consumes one as a class label trips the loss's range check, so a
// completed run is proof the labels went unread.
inline constexpr int kStrippedLabel = -1;

// Training-set construction: samples from `labeled` domains keep their
// labels, samples from `stripped` domains get kStrippedLabel, every other
// domain is dropped. Class names and resolution are preserved so label
// indices keep their meaning.
data::DomainDataset protocol_training_set(const data::DomainDataset& ds,
                                          const std::vector<std::string>& labeled,
                                          const std::vector<std::string>& stripped);

// Leave-one-domain-out: every domain is held out once, the rest train in dg
// mode (the held-out domain is absent from the training set entirely).
ProtocolResult run_dg_loo(const data::DomainDataset& ds, const ProtocolSpec& spec);

// Multi-source adaptation toward one named target: sources keep labels, the
// target joins training stripped and feeds only the pretext task.
ProtocolResult run_da(const data::DomainDataset& ds, const std::string& target,
                      const ProtocolSpec& spec);

// Ordered (source, target) pairs: one labeled source, every remaining domain
// except the target joins stripped as auxiliary pretext data.
ProtocolResult run_pda(const data::DomainDataset& ds, const ProtocolSpec& spec);

// Re-executes the cell that produced `row` (training plus adaptation when the
// row is an adapted one) and returns the recomputed accuracy.
double replay_row(const data::DomainDataset& ds, const ProtocolSpec& spec, const ResultRow& row);

// Per-(method, iteration-budget) aggregate over successful rows: mean per
// target across runs, overall = arithmetic mean of the per-target means.
struct MethodAggregate {
    Method method = Method::ges;
    int os_iterations = 0;
    std::vector<std::pair<std::string, double>> per_target;  // sorted by target
    double overall = 0.0;
};

std::vector<MethodAggregate> aggregate(const ProtocolResult& result);

// CSV columns: protocol,target,method,os_iterations,run,seed,accuracy,status.
// Accuracies are written in shortest round-trip form, so a load returns the
// exact doubles and aggregates recompute identically.
void write_result_csv(const ProtocolResult& result, const std::filesystem::path& path);
ProtocolResult load_result_csv(const std::filesystem::path& path);

// One table per protocol present: a (method, budget) row per aggregate group,
// a column per target plus the overall average, in percent.
void write_markdown_table(const ProtocolResult& result, const std::filesystem::path& path);

// Per-run view of what each extra adaptation iteration buys: one row per
// (adapted method, target, run) with the un-adapted accuracy and the signed
// gain at every budget.
void write_iteration_gains(const ProtocolResult& result, const std::filesystem::path& path);

}  // namespace geos::proto
