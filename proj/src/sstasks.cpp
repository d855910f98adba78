#include "geos/sstasks.hpp"

#include <algorithm>
#include <cmath>

#include "geos/errors.hpp"

namespace geos::tasks {

Task task_from_string(const std::string& s) {
    if (s == "jigsaw") return Task::jigsaw;
    if (s == "rotation") return Task::rotation;
    throw ConfigError("unknown task '" + s + "' (expected jigsaw or rotation)");
}

std::string to_string(Task t) {
    return t == Task::jigsaw ? "jigsaw" : "rotation";
}

SSVariant scramble(const Image& im, const perms::Permutation& perm, int grid_rows, int grid_cols,
                   const perms::PermutationSet& active, const std::string& source_id) {
    if (perm.n() != grid_rows * grid_cols)
        throw GeometryError("permutation over " + std::to_string(perm.n()) + " tiles on a " +
                            std::to_string(grid_rows) + "x" + std::to_string(grid_cols) + " grid");
    if (im.h % grid_rows != 0 || im.w % grid_cols != 0)
        throw GeometryError("image " + std::to_string(im.h) + "x" + std::to_string(im.w) +
                            " not divisible by grid " + std::to_string(grid_rows) + "x" +
                            std::to_string(grid_cols));
    const int label = active.find(perm);
    if (label < 0) throw UnknownPermutationError("permutation not in the active set");

    const int th = im.h / grid_rows, tw = im.w / grid_cols;
    SSVariant out;
    out.image = Image(im.h, im.w, im.c);
    for (int pos = 0; pos < perm.n(); ++pos) {
        const int src = perm.mapping[static_cast<size_t>(pos)];
        const int oy = (pos / grid_cols) * th, ox = (pos % grid_cols) * tw;
        const int sy = (src / grid_cols) * th, sx = (src % grid_cols) * tw;
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x)
                for (int ch = 0; ch < im.c; ++ch)
                    out.image.at(oy + y, ox + x, ch) = im.at(sy + y, sx + x, ch);
    }
    out.label = label;
    out.task = Task::jigsaw;
    out.source_id = source_id;
    return out;
}

SSVariant rotate(const Image& im, int v, const std::string& source_id) {
    if (v < 0 || v >= kRotationLabels)
        throw GeometryError("rotation label " + std::to_string(v) + " outside [0,4)");
    if (im.h != im.w)
        throw GeometryError("rotation pretext needs a square image, got " + std::to_string(im.h) +
                            "x" + std::to_string(im.w));
    SSVariant out;
    out.image = rotate90(im, v);
    out.label = v;
    out.task = Task::rotation;
    out.source_id = source_id;
    return out;
}

Image prepare_plain(const Image& im, int crop_size) {
    const int side = std::min(im.h, im.w);
    const Image sq = crop(im, (im.h - side) / 2, (im.w - side) / 2, side, side);
    return resize_bilinear(sq, crop_size, crop_size);
}

Image augment(const Image& im, const AugmentConfig& cfg, Rng& rng) {
    if (!cfg.enabled) return prepare_plain(im, cfg.crop_size);
    const int max_side = std::min(im.h, im.w);
    const double scale = rng.uniform(0.7, 1.0);
    const int side = std::max(1, static_cast<int>(std::lround(scale * max_side)));
    const int y0 = static_cast<int>(rng.index(static_cast<uint64_t>(im.h - side + 1)));
    const int x0 = static_cast<int>(rng.index(static_cast<uint64_t>(im.w - side + 1)));
    Image out = crop(im, y0, x0, side, side);
    if (rng.bernoulli(cfg.flip_probability)) out = hflip(out);
    if (cfg.photometric_strength > 0) {
        const double s = cfg.photometric_strength;
        adjust_brightness(out, rng.uniform(1.0 - s, 1.0 + s));
        adjust_contrast(out, rng.uniform(1.0 - s, 1.0 + s));
        if (out.c == 3) adjust_saturation(out, rng.uniform(1.0 - s, 1.0 + s));
        clamp01(out);
    }
    return resize_bilinear(out, cfg.crop_size, cfg.crop_size);
}

std::vector<SSVariant> make_ss_batch(const std::vector<SourceSample>& samples, Task task,
                                     const perms::PermutationSet* perm_set, int batch_size,
                                     uint64_t seed, const AugmentConfig& aug, int grid_rows,
                                     int grid_cols) {
    if (samples.empty()) throw EmptyInputError("make_ss_batch: no source samples");
    if (task == Task::jigsaw && (perm_set == nullptr || perm_set->size() == 0))
        throw ConfigError("jigsaw batch requested without a permutation set");
    const int num_labels = task == Task::jigsaw ? perm_set->size() : kRotationLabels;

    std::vector<SSVariant> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    for (int k = 0; k < batch_size; ++k) {
        Rng rng(derive_seed(seed, "ss.batch", static_cast<uint64_t>(k)));
        const auto& src = samples[rng.index(samples.size())];
        const int label = static_cast<int>(rng.index(static_cast<uint64_t>(num_labels)));
        const Image prepared = augment(*src.image, aug, rng);
        if (task == Task::jigsaw) {
            batch.push_back(scramble(prepared, perm_set->permutations[static_cast<size_t>(label)],
                                     grid_rows, grid_cols, *perm_set, src.id));
        } else {
            batch.push_back(rotate(prepared, label, src.id));
        }
    }
    return batch;
}

}  // namespace geos::tasks
