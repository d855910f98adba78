#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geos/image.hpp"
#include "geos/permset.hpp"

namespace geos::tasks {

enum class Task { jigsaw, rotation };

Task task_from_string(const std::string& s);
std::string to_string(Task t);

// The rotation pretext has a fixed four-way label space.
inline constexpr int kRotationLabels = 4;

// A pretext data-label pair: the transformed raster plus the label encoding
// which transformation produced it.
struct SSVariant {
    Image image;
    int label = 0;
    Task task = Task::jigsaw;
    std::string source_id;
};

struct AugmentConfig {
    int crop_size = 66;
    double flip_probability = 0.5;
    double photometric_strength = 0.0;
    bool enabled = true;
};

struct SourceSample {
    const Image* image = nullptr;
    std::string id;
};

// Tile positions are row-major from the top left; output tile i takes input
// tile perm.mapping[i]. The label is the permutation's index in the active set.
SSVariant scramble(const Image& im, const perms::Permutation& perm, int grid_rows, int grid_cols,
                   const perms::PermutationSet& active, const std::string& source_id = "");

// 90-degree counterclockwise steps; label == v. Square input only.
SSVariant rotate(const Image& im, int v, const std::string& source_id = "");

// Shared augmentation pipeline, applied to the whole image before any pretext
// transform: seeded random square crop, horizontal flip, photometric jitter of
// brightness/contrast/saturation within ±strength, then bilinear resize to
// crop_size. When disabled, a deterministic center crop + resize keeps the
// output geometry identical.
Image augment(const Image& im, const AugmentConfig& cfg, Rng& rng);
Image prepare_plain(const Image& im, int crop_size);

// batch_size variants: each draws a source sample and a uniform pretext label
// from a per-element derived stream, so toggling augmentation changes only
// raster content, never the drawn labels, and concurrent workers can build
// disjoint deterministic batches. perm_set may be null for rotation.
std::vector<SSVariant> make_ss_batch(const std::vector<SourceSample>& samples, Task task,
                                     const perms::PermutationSet* perm_set, int batch_size,
                                     uint64_t seed, const AugmentConfig& aug, int grid_rows,
                                     int grid_cols);

}  // namespace geos::tasks
