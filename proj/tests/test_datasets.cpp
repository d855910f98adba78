#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "geos/datasets.hpp"
#include "geos/errors.hpp"
#include "geos/image_io.hpp"

using namespace geos;
using namespace geos::data;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec() {
    SynthSpec spec;
    spec.num_domains = 3;
    spec.num_classes = 7;
    spec.samples_per_domain_class = 4;
    spec.resolution = 33;
    spec.seed = 7;
    return spec;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::array<double, 3> mean_rgb(const DomainDataset& ds, const std::string& domain) {
    std::array<double, 3> acc{0, 0, 0};
    int64_t n = 0;
    for (const Sample& s : ds.samples) {
        if (s.domain != domain) continue;
        for (int y = 0; y < s.image.h; ++y)
            for (int x = 0; x < s.image.w; ++x)
                for (int ch = 0; ch < 3; ++ch) acc[static_cast<size_t>(ch)] += s.image.at(y, x, ch);
        n += static_cast<int64_t>(s.image.h) * s.image.w;
    }
    for (double& v : acc) v /= (255.0 * static_cast<double>(n));
    return acc;
}

}  // namespace

TEST_CASE("synthesis is counted, labeled, and pixel-deterministic") {
    DomainDataset a = synthesize(small_spec());
    CHECK(a.samples.size() == 3u * 7u * 4u);
    CHECK(a.domain_names == std::vector<std::string>{"dom_a", "dom_b", "dom_c"});
    CHECK(a.class_names == std::vector<std::string>{"bar", "circle", "cross", "ring", "square",
                                                    "star", "triangle"});
    CHECK(std::is_sorted(a.class_names.begin(), a.class_names.end()));

    std::set<std::string> ids;
    for (const Sample& s : a.samples) {
        CHECK(s.image.h == 33);
        CHECK(s.image.w == 33);
        CHECK(s.image.c == 3);
        CHECK(s.label >= 0);
        CHECK(s.label < 7);
        ids.insert(s.id);
    }
    CHECK(ids.size() == a.samples.size());

    DomainDataset b = synthesize(small_spec());
    REQUIRE(b.samples.size() == a.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].image == b.samples[i].image);
        CHECK(a.samples[i].id == b.samples[i].id);
    }

    SynthSpec other = small_spec();
    other.seed = 8;
    DomainDataset c = synthesize(other);
    bool any_differs = false;
    for (size_t i = 0; i < a.samples.size() && !any_differs; ++i)
        any_differs = !(a.samples[i].image == c.samples[i].image);
    CHECK(any_differs);
}

TEST_CASE("synthetic domains have visibly different statistics") {
    DomainDataset ds = synthesize(small_spec());
    auto a = mean_rgb(ds, "dom_a");
    auto b = mean_rgb(ds, "dom_b");
    double dist = 0.0;
    for (int ch = 0; ch < 3; ++ch) dist += std::abs(a[static_cast<size_t>(ch)] - b[static_cast<size_t>(ch)]);
    CHECK(dist > 0.1);
}

TEST_CASE("invalid synthesis specs are rejected") {
    SynthSpec s = small_spec();
    s.num_classes = 8;
    CHECK_THROWS_AS(synthesize(s), ConfigError);
    s = small_spec();
    s.resolution = 32;
    CHECK_THROWS_AS(synthesize(s), ConfigError);
    s = small_spec();
    s.samples_per_domain_class = 0;
    CHECK_THROWS_AS(synthesize(s), ConfigError);
    s = small_spec();
    s.styles.resize(2);
    CHECK_THROWS_AS(synthesize(s), ConfigError);
}

TEST_CASE("stratified split partitions deterministically") {
    SynthSpec spec = small_spec();
    spec.num_domains = 2;
    spec.samples_per_domain_class = 10;
    DomainDataset ds = synthesize(spec);

    Split sp = split_dataset(ds, 0.1, 5);
    CHECK(sp.val.size() == 14u);  // 2 domains x 7 classes x 1
    CHECK(sp.train.size() == ds.samples.size() - 14u);
    CHECK(sp.warnings.empty());

    std::set<size_t> train(sp.train.begin(), sp.train.end());
    std::set<size_t> val(sp.val.begin(), sp.val.end());
    CHECK(train.size() == sp.train.size());
    CHECK(val.size() == sp.val.size());
    for (size_t i : val) CHECK(train.count(i) == 0);
    CHECK(train.size() + val.size() == ds.samples.size());

    Split again = split_dataset(ds, 0.1, 5);
    CHECK(again.train == sp.train);
    CHECK(again.val == sp.val);
    Split other = split_dataset(ds, 0.1, 6);
    CHECK(other.val != sp.val);

    CHECK_THROWS_AS(split_dataset(ds, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split_dataset(ds, 1.0, 1), ConfigError);
}

TEST_CASE("undersized groups stay in train with a warning") {
    SynthSpec spec = small_spec();
    spec.num_domains = 2;
    spec.num_classes = 3;
    spec.samples_per_domain_class = 1;
    DomainDataset ds = synthesize(spec);
    Split sp = split_dataset(ds, 0.1, 5);
    CHECK(sp.val.empty());
    CHECK(sp.train.size() == ds.samples.size());
    CHECK(sp.warnings.size() == 6u);
}

TEST_CASE("export and folder ingestion round-trip pixels and labels") {
    SynthSpec spec = small_spec();
    spec.num_domains = 2;
    spec.num_classes = 3;
    spec.samples_per_domain_class = 2;
    DomainDataset ds = synthesize(spec);

    fs::path root = fresh_dir("geos_ds_export");
    export_dataset(ds, root);

    LoadReport report;
    DomainDataset back = load_folder(root, spec.resolution, &report);
    CHECK(report.unreadable.empty());
    CHECK(back.domain_names == ds.domain_names);
    CHECK(back.class_names == ds.class_names);
    REQUIRE(back.samples.size() == ds.samples.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].domain == ds.samples[i].domain);
        CHECK(back.samples[i].label == ds.samples[i].label);
        CHECK(back.samples[i].image == ds.samples[i].image);
    }

    DomainDataset resized = load_folder(root, 24);
    CHECK(resized.samples[0].image.h == 24);
    CHECK(resized.samples[0].image.w == 24);
    fs::remove_all(root);
}

TEST_CASE("manifest files round-trip through the loader") {
    SynthSpec spec = small_spec();
    spec.num_domains = 2;
    spec.num_classes = 3;
    spec.samples_per_domain_class = 2;
    DomainDataset ds = synthesize(spec);
    fs::path root = fresh_dir("geos_ds_manifest");
    export_dataset(ds, root);
    DomainDataset filed = load_folder(root, spec.resolution);

    write_manifest(filed, root / "manifest.csv");
    DomainDataset back = load_manifest(root / "manifest.csv", spec.resolution);
    CHECK(back.class_names == filed.class_names);
    CHECK(back.domain_names == filed.domain_names);
    REQUIRE(back.samples.size() == filed.samples.size());
    for (size_t i = 0; i < filed.samples.size(); ++i) {
        CHECK(back.samples[i].label == filed.samples[i].label);
        CHECK(back.samples[i].image == filed.samples[i].image);
    }
    fs::remove_all(root);
}

TEST_CASE("folder ingestion reports problems without dying") {
    fs::path root = fresh_dir("geos_ds_problems");
    CHECK_THROWS_AS(load_folder(root / "missing", 33), IngestionError);
    CHECK_THROWS_AS(load_folder(root, 33), IngestionError);  // no domains

    fs::create_directories(root / "d1" / "circle");
    fs::create_directories(root / "d1" / "square");
    ImageU8 im;
    im.h = im.w = 4;
    im.c = 3;
    im.px.assign(48, 128);
    write_ppm(root / "d1" / "circle" / "ok.ppm", im);
    {
        std::ofstream bad(root / "d1" / "circle" / "junk.png");
        bad << "this is not a png";
    }

    LoadReport report;
    DomainDataset ds = load_folder(root, 8, &report);
    CHECK(ds.samples.size() == 1u);
    CHECK(ds.samples[0].image.h == 8);
    REQUIRE(report.unreadable.size() == 1u);
    CHECK(report.unreadable[0].find("junk.png") != std::string::npos);
    REQUIRE(report.warnings.size() == 1u);
    CHECK(report.warnings[0].find("square") != std::string::npos);
    fs::remove_all(root);
}

TEST_CASE("grayscale sources are widened to three channels") {
    fs::path root = fresh_dir("geos_ds_gray");
    fs::create_directories(root / "d1" / "c1");
    ImageU8 gray;
    gray.h = gray.w = 6;
    gray.c = 1;
    gray.px.assign(36, 0);
    for (size_t i = 0; i < gray.px.size(); ++i) gray.px[i] = static_cast<uint8_t>(i * 7);
    write_ppm(root / "d1" / "c1" / "g.pgm", gray);

    DomainDataset ds = load_folder(root, 6);
    REQUIRE(ds.samples.size() == 1u);
    const ImageU8& got = ds.samples[0].image;
    CHECK(got.c == 3);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            CHECK(got.at(y, x, 0) == gray.at(y, x, 0));
            CHECK(got.at(y, x, 1) == gray.at(y, x, 0));
            CHECK(got.at(y, x, 2) == gray.at(y, x, 0));
        }
    fs::remove_all(root);
}

TEST_CASE("malformed manifests are rejected with locations") {
    fs::path root = fresh_dir("geos_ds_badmanifest");
    {
        std::ofstream os(root / "m1.csv");
        os << "path,domain\nfoo,bar\n";
    }
    CHECK_THROWS_AS(load_manifest(root / "m1.csv", 33), ParseError);
    {
        std::ofstream os(root / "m2.csv");
        os << "path,domain,class\nonly,two\n";
    }
    try {
        load_manifest(root / "m2.csv", 33);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    {
        std::ofstream os(root / "m3.csv");
        os << "path,domain,class\nmissing.ppm,d1,c1\n";
    }
    CHECK_THROWS_AS(load_manifest(root / "m3.csv", 33), IngestionError);
    CHECK_THROWS_AS(load_manifest(root / "nope.csv", 33), IngestionError);
    fs::remove_all(root);
}
