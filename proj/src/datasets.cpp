#include "geos/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "geos/errors.hpp"
#include "geos/image_io.hpp"
#include "geos/rng.hpp"

namespace fs = std::filesystem;

namespace geos::data {

std::vector<size_t> DomainDataset::domain_indices(const std::string& domain) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < samples.size(); ++i)
        if (samples[i].domain == domain) out.push_back(i);
    return out;
}

namespace {

Image to_rgb_float(const ImageU8& u) {
    Image f = to_float(u);
    if (f.c == 3) return f;
    if (f.c == 1) {
        Image rgb(f.h, f.w, 3);
        for (int y = 0; y < f.h; ++y)
            for (int x = 0; x < f.w; ++x)
                for (int ch = 0; ch < 3; ++ch) rgb.at(y, x, ch) = f.at(y, x, 0);
        return rgb;
    }
    throw IngestionError("unsupported channel count " + std::to_string(f.c));
}

ImageU8 normalize_raster(const ImageU8& raw, int resolution) {
    if (raw.c == 3 && raw.h == resolution && raw.w == resolution) return raw;
    Image f = to_rgb_float(raw);
    if (f.h != resolution || f.w != resolution) f = resize_bilinear(f, resolution, resolution);
    return to_u8(f);
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool dirs_only) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (dirs_only ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

DomainDataset load_folder(const fs::path& root, int resolution, LoadReport* report) {
    if (resolution < 1) throw ConfigError("resolution must be positive");
    if (!fs::exists(root) || !fs::is_directory(root))
        throw IngestionError("dataset root not found: " + root.string());
    std::vector<fs::path> domain_dirs = sorted_entries(root, true);
    if (domain_dirs.empty())
        throw IngestionError("no domain folders under " + root.string());

    std::set<std::string> class_set;
    for (const auto& d : domain_dirs)
        for (const auto& c : sorted_entries(d, true)) class_set.insert(c.filename().string());
    if (class_set.empty())
        throw IngestionError("no class folders under " + root.string());

    DomainDataset ds;
    ds.resolution = resolution;
    ds.class_names.assign(class_set.begin(), class_set.end());
    std::map<std::string, int> label_of;
    for (size_t i = 0; i < ds.class_names.size(); ++i)
        label_of[ds.class_names[i]] = static_cast<int>(i);

    for (const auto& d : domain_dirs) {
        ds.domain_names.push_back(d.filename().string());
        for (const auto& c : sorted_entries(d, true)) {
            std::vector<fs::path> files = sorted_entries(c, false);
            if (files.empty() && report)
                report->warnings.push_back("empty class folder: " +
                                           fs::relative(c, root).string());
            for (const auto& f : files) {
                try {
                    Sample s;
                    s.image = normalize_raster(load_image(f), resolution);
                    s.label = label_of.at(c.filename().string());
                    s.id = fs::relative(f, root).string();
                    s.domain = d.filename().string();
                    ds.samples.push_back(std::move(s));
                } catch (const Error& e) {
                    if (report) report->unreadable.push_back(f.string() + ": " + e.what());
                }
            }
        }
    }
    if (ds.samples.empty())
        throw IngestionError("no readable images under " + root.string());
    return ds;
}

namespace {

std::vector<std::string> parse_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

DomainDataset load_manifest(const fs::path& csv, int resolution, LoadReport* report) {
    if (resolution < 1) throw ConfigError("resolution must be positive");
    std::ifstream is(csv);
    if (!is) throw IngestionError("cannot open manifest: " + csv.string());
    std::string line;
    if (!std::getline(is, line) || parse_csv_row(line) != std::vector<std::string>{"path", "domain", "class"})
        throw ParseError("manifest header must be path,domain,class: " + csv.string());

    struct Row {
        std::string path, domain, cls;
    };
    std::vector<Row> rows;
    std::set<std::string> classes, domains;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = parse_csv_row(line);
        if (fields.size() != 3)
            throw ParseError("manifest row needs 3 fields at " + csv.string() + ":" +
                             std::to_string(lineno));
        rows.push_back({fields[0], fields[1], fields[2]});
        classes.insert(fields[2]);
        domains.insert(fields[1]);
    }
    if (rows.empty()) throw IngestionError("manifest lists no images: " + csv.string());

    DomainDataset ds;
    ds.resolution = resolution;
    ds.class_names.assign(classes.begin(), classes.end());
    ds.domain_names.assign(domains.begin(), domains.end());
    std::map<std::string, int> label_of;
    for (size_t i = 0; i < ds.class_names.size(); ++i)
        label_of[ds.class_names[i]] = static_cast<int>(i);

    for (const Row& r : rows) {
        fs::path p(r.path);
        if (p.is_relative()) p = csv.parent_path() / p;
        try {
            Sample s;
            s.image = normalize_raster(load_image(p), resolution);
            s.label = label_of.at(r.cls);
            s.id = r.path;
            s.domain = r.domain;
            ds.samples.push_back(std::move(s));
        } catch (const Error& e) {
            if (report) report->unreadable.push_back(p.string() + ": " + e.what());
        }
    }
    if (ds.samples.empty())
        throw IngestionError("no readable images listed in " + csv.string());
    return ds;
}

void write_manifest(const DomainDataset& ds, const fs::path& csv) {
    std::ofstream os(csv);
    if (!os) throw IngestionError("cannot write manifest: " + csv.string());
    os << "path,domain,class\n";
    for (const Sample& s : ds.samples)
        os << s.id << "," << s.domain << "," << ds.class_names[static_cast<size_t>(s.label)]
           << "\n";
}

void export_dataset(const DomainDataset& ds, const fs::path& root) {
    std::map<std::string, int> counters;
    for (const Sample& s : ds.samples) {
        const std::string& cls = ds.class_names[static_cast<size_t>(s.label)];
        fs::path dir = root / s.domain / cls;
        fs::create_directories(dir);
        char name[32];
        std::snprintf(name, sizeof(name), "%06d.ppm", counters[s.domain + "/" + cls]++);
        write_ppm(dir / name, s.image);
    }
}

// ------------------------------------------------------------- synthesize

namespace {

// Sorted order; labels index into this list.
const char* kShapeNames[7] = {"bar", "circle", "cross", "ring", "square", "star", "triangle"};

const DomainStyle kDefaultStyles[4] = {
    // photo-ish: neutral light ground, dark figure, no texture
    {{0.92, 0.91, 0.88}, {0.16, 0.15, 0.18}, 0.0, 0.08},
    // cartoon-ish: saturated flat ground, bold bright figure
    {{0.24, 0.55, 0.83}, {0.97, 0.84, 0.20}, 0.0, 0.13},
    // sketch-ish: paper ground, graphite figure, fine grain
    {{0.96, 0.96, 0.93}, {0.26, 0.23, 0.28}, 22.0, 0.05},
    // painting-ish: warm ground with slow waves, cool figure
    {{0.79, 0.61, 0.44}, {0.21, 0.31, 0.56}, 6.0, 0.10},
};

struct Vec2 {
    double x, y;
};

double sd_box(Vec2 p, double hx, double hy) {
    double qx = std::abs(p.x) - hx, qy = std::abs(p.y) - hy;
    double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

double sd_circle(Vec2 p, double r) { return std::sqrt(p.x * p.x + p.y * p.y) - r; }

// Equilateral triangle, apex up, circumradius r. Max of the three edge
// half-planes: exact inside, close enough outside for antialiasing.
double sd_triangle(Vec2 p, double r) {
    double d = -1e9;
    for (int i = 0; i < 3; ++i) {
        double a0 = 1.5707963267948966 + 2.0943951023931953 * i;
        double a1 = 1.5707963267948966 + 2.0943951023931953 * (i + 1);
        Vec2 v0{r * std::cos(a0), -r * std::sin(a0)};
        Vec2 v1{r * std::cos(a1), -r * std::sin(a1)};
        Vec2 e{v1.x - v0.x, v1.y - v0.y};
        double len = std::sqrt(e.x * e.x + e.y * e.y);
        Vec2 n{e.y / len, -e.x / len};  // outward
        d = std::max(d, (p.x - v0.x) * n.x + (p.y - v0.y) * n.y);
    }
    return d;
}

double shape_sdf(int cls, Vec2 p, double s, double stroke) {
    switch (cls) {
        case 0:  // bar
            return sd_box(p, s, std::max(stroke * 0.7, 0.02));
        case 1:  // circle
            return sd_circle(p, s * 0.9);
        case 2: {  // cross
            double w = std::max(stroke * 0.9, 0.025);
            return std::min(sd_box(p, s, w), sd_box(p, w, s));
        }
        case 3:  // ring
            return std::abs(sd_circle(p, s * 0.75)) - std::max(stroke * 0.55, 0.02);
        case 4:  // square
            return sd_box(p, s * 0.78, s * 0.78);
        case 5:  // star (two opposed triangles)
            return std::min(sd_triangle(p, s), sd_triangle({-p.x, -p.y}, s));
        case 6:  // triangle
            return sd_triangle(p, s * 1.05);
        default:
            throw ConfigError("shape class out of range");
    }
}

}  // namespace

DomainDataset synthesize(const SynthSpec& spec) {
    if (spec.num_classes < 2 || spec.num_classes > 7)
        throw ConfigError("synthesize supports 2..7 classes, got " +
                          std::to_string(spec.num_classes));
    if (spec.num_domains < 1 || spec.num_domains > 26)
        throw ConfigError("synthesize supports 1..26 domains, got " +
                          std::to_string(spec.num_domains));
    if (spec.samples_per_domain_class < 1)
        throw ConfigError("samples_per_domain_class must be positive");
    if (spec.resolution < 9 || spec.resolution % 3 != 0)
        throw ConfigError("resolution must be a positive multiple of the 3x3 grid side, got " +
                          std::to_string(spec.resolution));
    if (!spec.styles.empty() && spec.styles.size() != static_cast<size_t>(spec.num_domains))
        throw ConfigError("styles must be empty or list one entry per domain");

    DomainDataset ds;
    ds.resolution = spec.resolution;
    for (int c = 0; c < spec.num_classes; ++c) ds.class_names.push_back(kShapeNames[c]);
    for (int d = 0; d < spec.num_domains; ++d)
        ds.domain_names.push_back(std::string("dom_") + static_cast<char>('a' + d));

    const int res = spec.resolution;
    const double aa = 1.2 / res;
    for (int d = 0; d < spec.num_domains; ++d) {
        DomainStyle style =
            spec.styles.empty() ? kDefaultStyles[d % 4] : spec.styles[static_cast<size_t>(d)];
        for (int c = 0; c < spec.num_classes; ++c) {
            for (int k = 0; k < spec.samples_per_domain_class; ++k) {
                uint64_t flat =
                    (static_cast<uint64_t>(d) * spec.num_classes + c) *
                        static_cast<uint64_t>(spec.samples_per_domain_class) +
                    static_cast<uint64_t>(k);
                Rng rng(derive_seed(spec.seed, "synth.sample", flat));
                double cx = rng.uniform(0.42, 0.58);
                double cy = rng.uniform(0.42, 0.58);
                double size = rng.uniform(0.24, 0.32);
                double rot = (c == 1 || c == 3) ? 0.0 : rng.uniform(-0.22, 0.22);
                double fg[3], bg[3];
                for (int ch = 0; ch < 3; ++ch) {
                    fg[ch] = style.foreground[static_cast<size_t>(ch)] + rng.uniform(-0.05, 0.05);
                    bg[ch] = style.background[static_cast<size_t>(ch)] + rng.uniform(-0.05, 0.05);
                }
                double phase = rng.uniform(0.0, 6.283185307179586);
                double tex_angle = rng.uniform(0.0, 3.141592653589793);
                double ca = std::cos(rot), sa = std::sin(rot);

                Image im(res, res, 3);
                for (int y = 0; y < res; ++y) {
                    for (int x = 0; x < res; ++x) {
                        double u = (x + 0.5) / res - cx;
                        double v = (y + 0.5) / res - cy;
                        Vec2 p{u * ca + v * sa, -u * sa + v * ca};
                        double sdf = shape_sdf(c, p, size, style.stroke_width);
                        double cov = std::clamp(0.5 - sdf / aa, 0.0, 1.0);
                        double shade = 1.0;
                        if (style.texture_frequency > 0.0) {
                            double uu = (x + 0.5) / res, vv = (y + 0.5) / res;
                            double w = uu * std::cos(tex_angle) + vv * std::sin(tex_angle);
                            shade = 0.86 +
                                    0.14 * std::sin(6.283185307179586 *
                                                        style.texture_frequency * w +
                                                    phase);
                        }
                        double noise = rng.uniform(-0.015, 0.015);
                        for (int ch = 0; ch < 3; ++ch) {
                            double val = bg[ch] * shade * (1.0 - cov) + fg[ch] * cov + noise;
                            im.at(y, x, ch) = std::clamp(val, 0.0, 1.0);
                        }
                    }
                }
                char tag[16];
                std::snprintf(tag, sizeof(tag), "%04d", k);
                Sample s;
                s.image = to_u8(im);
                s.label = c;
                s.id = ds.domain_names[static_cast<size_t>(d)] + "/" + kShapeNames[c] + "/" + tag;
                s.domain = ds.domain_names[static_cast<size_t>(d)];
                ds.samples.push_back(std::move(s));
            }
        }
    }
    return ds;
}

// ------------------------------------------------------------------ split

Split split_dataset(const DomainDataset& ds, double val_fraction, uint64_t seed) {
    std::vector<size_t> all(ds.samples.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return split_indices(ds, all, val_fraction, seed);
}

Split split_indices(const DomainDataset& ds, const std::vector<size_t>& subset,
                    double val_fraction, uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ConfigError("val_fraction must lie in (0,1), got " + std::to_string(val_fraction));
    std::map<std::pair<std::string, int>, std::vector<size_t>> groups;
    for (size_t i : subset)
        groups[{ds.samples[i].domain, ds.samples[i].label}].push_back(i);

    Split out;
    for (auto& [key, idx] : groups) {
        const auto& [domain, label] = key;
        if (idx.size() < 2) {
            out.warnings.push_back("group " + domain + "/" +
                                   ds.class_names[static_cast<size_t>(label)] +
                                   " has fewer than 2 samples; kept in train");
            out.train.insert(out.train.end(), idx.begin(), idx.end());
            continue;
        }
        Rng rng(derive_seed(seed, "split." + domain + "." + std::to_string(label)));
        rng.shuffle(idx);
        auto nv = static_cast<size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
        nv = std::clamp<size_t>(nv, 1, idx.size() - 1);
        out.val.insert(out.val.end(), idx.begin(), idx.begin() + static_cast<ptrdiff_t>(nv));
        out.train.insert(out.train.end(), idx.begin() + static_cast<ptrdiff_t>(nv), idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    return out;
}

}  // namespace geos::data
