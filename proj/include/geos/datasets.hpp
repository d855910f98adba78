#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geos/image.hpp"

namespace geos::data {

struct Sample {
    ImageU8 image;
    int label = 0;
    std::string id;  // path relative to the dataset root, or a synthetic tag
    std::string domain;
};

struct DomainDataset {
    std::vector<std::string> domain_names;  // sorted
    std::vector<std::string> class_names;   // sorted; label = index herein
    int resolution = 0;
    std::vector<Sample> samples;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::vector<size_t> domain_indices(const std::string& domain) const;
};

struct LoadReport {
    std::vector<std::string> warnings;
    std::vector<std::string> unreadable;  // paths that failed to decode
};

// Layout: root/<domain>/<class>/<files>. Labels follow sorted class-name
// order across the union of all domains; images are bilinearly resized to
// resolution and carried as 3-channel rasters.
DomainDataset load_folder(const std::filesystem::path& root, int resolution,
                          LoadReport* report = nullptr);

// CSV with header path,domain,class; relative paths resolve against the
// manifest's directory.
DomainDataset load_manifest(const std::filesystem::path& csv, int resolution,
                            LoadReport* report = nullptr);
void write_manifest(const DomainDataset& ds, const std::filesystem::path& csv);

// Writes root/<domain>/<class>/<name>.ppm mirroring load_folder's layout.
void export_dataset(const DomainDataset& ds, const std::filesystem::path& root);

struct DomainStyle {
    std::array<double, 3> background{0.9, 0.9, 0.9};
    std::array<double, 3> foreground{0.1, 0.1, 0.1};
    double texture_frequency = 0.0;  // waves across the image; 0 = flat
    double stroke_width = 0.08;      // fraction of resolution, outlined shapes
};

struct SynthSpec {
    int num_domains = 4;
    int num_classes = 7;
    int samples_per_domain_class = 50;
    int resolution = 66;
    uint64_t seed = 0;
    // One entry per domain; left empty, a built-in style table is used.
    std::vector<DomainStyle> styles;
};

// Procedural shape dataset: class = shape identity, domain = rendering style.
// Deterministic in the seed, pixel for pixel.
DomainDataset synthesize(const SynthSpec& spec);

struct Split {
    std::vector<size_t> train;
    std::vector<size_t> val;
    std::vector<std::string> warnings;
};

// Stratified by (domain, class); groups with fewer than 2 samples go wholly
// to train with a warning.
Split split_dataset(const DomainDataset& ds, double val_fraction, uint64_t seed);

// Same contract restricted to a subset of sample indices.
Split split_indices(const DomainDataset& ds, const std::vector<size_t>& subset,
                    double val_fraction, uint64_t seed);

}  // namespace geos::data
