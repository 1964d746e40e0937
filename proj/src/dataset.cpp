#include "spader/dataset.hpp"
#include "spader/binary_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

namespace spader {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSelectSalt = 0xd1;
constexpr std::uint64_t kCanvasSalt = 0xd2;
constexpr std::uint64_t kNoiseSalt = 0xd3;
constexpr std::uint64_t kGlyphSalt = 0xd4;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
    return os.str();
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// Glyph rendering
// ---------------------------------------------------------------------------

struct Point {
    double x, y;
};
using Stroke = std::vector<Point>;

Stroke line(Point a, Point b) { return {a, b}; }

Stroke arc(Point c, double rx, double ry, double from_deg, double to_deg, int steps = 24) {
    Stroke s;
    for (int i = 0; i <= steps; ++i) {
        const double t = (from_deg + (to_deg - from_deg) * i / steps) * std::numbers::pi / 180.0;
        s.push_back({c.x + rx * std::cos(t), c.y + ry * std::sin(t)});
    }
    return s;
}

// Unit-box strokes, x to the right and y downward.
std::vector<Stroke> glyph_strokes(int digit) {
    switch (digit) {
        case 0: return {arc({0.5, 0.5}, 0.22, 0.33, 0, 360, 40)};
        case 1: return {line({0.5, 0.15}, {0.5, 0.86}), line({0.37, 0.28}, {0.5, 0.15})};
        case 2: {
            Stroke top = arc({0.5, 0.34}, 0.21, 0.19, 180, 380);
            const Point end = top.back();
            return {top, line(end, {0.27, 0.85}), line({0.27, 0.85}, {0.76, 0.85})};
        }
        case 3: return {arc({0.48, 0.32}, 0.2, 0.17, 200, 450), arc({0.48, 0.67}, 0.22, 0.18, 270, 520)};
        case 4:
            return {line({0.63, 0.15}, {0.24, 0.62}), line({0.24, 0.62}, {0.78, 0.62}),
                    line({0.63, 0.15}, {0.63, 0.88})};
        case 5:
            return {line({0.73, 0.15}, {0.36, 0.15}), line({0.36, 0.15}, {0.33, 0.49}),
                    arc({0.5, 0.65}, 0.22, 0.2, 220, 510)};
        case 6:
            return {Stroke{{0.68, 0.14}, {0.53, 0.21}, {0.41, 0.34}, {0.33, 0.51}, {0.31, 0.67}},
                    arc({0.5, 0.67}, 0.19, 0.18, 0, 360, 32)};
        case 7: return {line({0.25, 0.17}, {0.76, 0.17}), line({0.76, 0.17}, {0.42, 0.88})};
        case 8: return {arc({0.5, 0.31}, 0.17, 0.15, 0, 360, 32), arc({0.5, 0.67}, 0.21, 0.19, 0, 360, 32)};
        case 9: return {arc({0.5, 0.33}, 0.2, 0.18, 0, 360, 32), line({0.7, 0.35}, {0.6, 0.88})};
        default: break;
    }
    throw std::invalid_argument("glyph_strokes: digit out of range");
}

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = p.x - (a.x + t * dx);
    const double ey = p.y - (a.y + t * dy);
    return std::sqrt(ex * ex + ey * ey);
}

Tensor render_glyph(int digit, Rng& rng) {
    constexpr std::size_t kSide = 28;
    const double scale = uniform(rng, 0.85, 1.1);
    const double angle = uniform(rng, -12.0, 12.0) * std::numbers::pi / 180.0;
    const double shear = uniform(rng, -0.15, 0.15);
    const double tx = uniform(rng, -0.06, 0.06);
    const double ty = uniform(rng, -0.06, 0.06);
    const double thickness = uniform(rng, 1.6, 3.0);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);

    std::vector<Stroke> strokes = glyph_strokes(digit);
    for (Stroke& s : strokes) {
        for (Point& p : s) {
            const double wx = p.x + 0.012 * standard_normal(rng);
            const double wy = p.y + 0.012 * standard_normal(rng);
            const double cx = (wx - 0.5) * scale + shear * (wy - 0.5) * scale;
            const double cy = (wy - 0.5) * scale;
            p = {(0.5 + ca * cx - sa * cy + tx) * kSide, (0.5 + sa * cx + ca * cy + ty) * kSide};
        }
    }
    Tensor img({1, kSide, kSide});
    for (std::size_t r = 0; r < kSide; ++r) {
        for (std::size_t c = 0; c < kSide; ++c) {
            const Point p{static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5};
            double d = 1e9;
            for (const Stroke& s : strokes) {
                for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, segment_distance(p, s[i], s[i + 1]));
            }
            img[r * kSide + c] = std::clamp(thickness / 2.0 + 0.5 - d, 0.0, 1.0);
        }
    }
    return img;
}

// Bilinear resize with pixel-centre alignment.
Tensor resize(const Tensor& src, std::size_t out_h, std::size_t out_w) {
    const std::size_t h = src.dim(1);
    const std::size_t w = src.dim(2);
    Tensor out({1, out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double ay = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double ax = fx - static_cast<double>(x0);
            const double top = src[y0 * w + x0] * (1 - ax) + src[y0 * w + x1] * ax;
            const double bottom = src[y1 * w + x0] * (1 - ax) + src[y1 * w + x1] * ax;
            out[y * out_w + x] = top * (1 - ay) + bottom * ay;
        }
    }
    return out;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

RawDigits parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes) {
    if (image_bytes.size() < 16) {
        throw FormatError("idx images: header needs 16 bytes, got " + std::to_string(image_bytes.size()));
    }
    if (label_bytes.size() < 8) {
        throw FormatError("idx labels: header needs 8 bytes, got " + std::to_string(label_bytes.size()));
    }
    const std::uint32_t image_magic = read_be32(image_bytes, 0);
    if (image_magic != kIdxImageMagic) {
        throw FormatError("idx images: bad magic " + hex32(image_magic) + ", expected " + hex32(kIdxImageMagic));
    }
    const std::uint32_t label_magic = read_be32(label_bytes, 0);
    if (label_magic != kIdxLabelMagic) {
        throw FormatError("idx labels: bad magic " + hex32(label_magic) + ", expected " + hex32(kIdxLabelMagic));
    }
    const std::size_t count = read_be32(image_bytes, 4);
    const std::size_t rows = read_be32(image_bytes, 8);
    const std::size_t cols = read_be32(image_bytes, 12);
    const std::size_t label_count = read_be32(label_bytes, 4);
    if (count != label_count) {
        throw FormatError("idx: image file holds " + std::to_string(count) + " images but label file holds " +
                          std::to_string(label_count) + " labels");
    }
    const std::size_t expected_images = 16 + count * rows * cols;
    if (image_bytes.size() < expected_images) {
        throw FormatError("idx images: truncated payload, expected " + std::to_string(expected_images) +
                          " bytes, got " + std::to_string(image_bytes.size()));
    }
    if (label_bytes.size() < 8 + count) {
        throw FormatError("idx labels: truncated payload, expected " + std::to_string(8 + count) +
                          " bytes, got " + std::to_string(label_bytes.size()));
    }
    RawDigits out;
    out.images.reserve(count);
    out.labels.reserve(count);
    const std::size_t plane = rows * cols;
    for (std::size_t i = 0; i < count; ++i) {
        Tensor img({1, rows, cols});
        const std::uint8_t* src = image_bytes.data() + 16 + i * plane;
        for (std::size_t p = 0; p < plane; ++p) img[p] = src[p] / 255.0;
        out.images.push_back(std::move(img));
        const int label = label_bytes[8 + i];
        if (label > 9) throw FormatError("idx labels: label " + std::to_string(label) + " at index " + std::to_string(i));
        out.labels.push_back(label);
    }
    return out;
}

RawDigits load_idx(const fs::path& images, const fs::path& labels) {
    const std::vector<std::uint8_t> ib = read_file(images);
    const std::vector<std::uint8_t> lb = read_file(labels);
    return parse_idx(ib, lb);
}

RawDigits synth_glyphs(Rng& rng, std::size_t count_per_digit) {
    RawDigits out;
    for (int digit = 0; digit < 10; ++digit) {
        for (std::size_t i = 0; i < count_per_digit; ++i) {
            out.images.push_back(render_glyph(digit, rng));
            out.labels.push_back(digit);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

Role SplitConfig::role_of(int digit) const {
    if (digit == normal_digit) return Role::normal;
    if (digit == known_anomaly_digit) return Role::known_anomaly;
    return Role::unknown_anomaly;
}

void SplitConfig::validate() const {
    auto in_range = [](int d) { return d >= 0 && d <= 9; };
    if (!in_range(normal_digit) || !in_range(known_anomaly_digit)) {
        throw std::invalid_argument("split: digits must lie in 0-9");
    }
    if (normal_digit == known_anomaly_digit) {
        throw std::invalid_argument("split: normal and known-anomaly digits must differ");
    }
}

Tensor compose_canvas(const Tensor& digit, Rng& rng, const CanvasConfig& config) {
    if (digit.rank() != 3 || digit.dim(0) != 1) {
        throw ShapeError("compose_canvas: expected [1,h,w], got " + to_string(digit.shape()));
    }
    const double scale = config.forced_scale ? *config.forced_scale : uniform(rng, config.min_scale, config.max_scale);
    const std::size_t h = std::min<std::size_t>(config.size, static_cast<std::size_t>(std::lround(digit.dim(1) * scale)));
    const std::size_t w = std::min<std::size_t>(config.size, static_cast<std::size_t>(std::lround(digit.dim(2) * scale)));
    const Tensor scaled = resize(digit, std::max<std::size_t>(h, 1), std::max<std::size_t>(w, 1));
    std::size_t row = 0;
    std::size_t col = 0;
    if (config.forced_position) {
        std::tie(row, col) = *config.forced_position;
        if (row + h > config.size || col + w > config.size) {
            throw std::invalid_argument("compose_canvas: forced position puts the digit outside the canvas");
        }
    } else {
        row = std::uniform_int_distribution<std::size_t>(0, config.size - h)(rng);
        col = std::uniform_int_distribution<std::size_t>(0, config.size - w)(rng);
    }
    Tensor canvas({1, config.size, config.size});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) canvas[(row + y) * config.size + col + x] = scaled[y * w + x];
    }
    return canvas;
}

Tensor add_noise(const Tensor& canvas, const NoiseConfig& config, Rng& rng) {
    const double sigma = config.forced_sigma
                             ? *config.forced_sigma
                             : std::max(0.0, config.sigma_mean + config.sigma_std * standard_normal(rng));
    Tensor out = canvas;
    if (sigma <= 0.0) return out;
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : out.values()) {
        v = std::clamp((v * config.pixel_scale + noise(rng)) / config.pixel_scale, 0.0, 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::size_t SplitCounts::needed(Role role) const {
    switch (role) {
        case Role::normal: return train_normal_pool() + test_per_digit;
        case Role::known_anomaly: return train_reg_known + test_per_digit;
        case Role::unknown_anomaly: return test_per_digit;
    }
    return 0;
}

Splits build_splits(std::span<const ImageSample> pool, const SplitConfig& split, const SplitCounts& counts) {
    split.validate();
    std::array<std::vector<const ImageSample*>, 10> by_digit;
    for (const ImageSample& s : pool) {
        if (s.digit < 0 || s.digit > 9) throw std::invalid_argument("build_splits: digit out of range");
        by_digit[static_cast<std::size_t>(s.digit)].push_back(&s);
    }
    for (int d = 0; d < 10; ++d) {
        const Role role = split.role_of(d);
        const std::size_t need = counts.needed(role);
        const std::size_t have = by_digit[static_cast<std::size_t>(d)].size();
        if (have < need) {
            throw std::invalid_argument("build_splits: digit " + std::to_string(d) + " (" +
                                        std::string(role_name(role)) + ") needs " + std::to_string(need) +
                                        " samples, has " + std::to_string(have) + ", short by " +
                                        std::to_string(need - have));
        }
    }

    Splits out;
    auto tagged = [&](const ImageSample* s) {
        ImageSample copy = *s;
        copy.role = split.role_of(s->digit);
        return copy;
    };
    const auto& normals = by_digit[static_cast<std::size_t>(split.normal_digit)];
    const auto& known = by_digit[static_cast<std::size_t>(split.known_anomaly_digit)];
    for (std::size_t i = 0; i < counts.train_vae; ++i) out.train_vae.push_back(tagged(normals[i]));
    for (std::size_t i = 0; i < counts.train_reg_normal; ++i) out.train_reg.push_back(tagged(normals[i]));
    for (std::size_t i = 0; i < counts.train_reg_known; ++i) out.train_reg.push_back(tagged(known[i]));
    for (int d = 0; d < 10; ++d) {
        const auto& list = by_digit[static_cast<std::size_t>(d)];
        const Role role = split.role_of(d);
        const std::size_t skip = role == Role::normal          ? counts.train_normal_pool()
                                 : role == Role::known_anomaly ? counts.train_reg_known
                                                               : 0;
        for (std::size_t i = 0; i < counts.test_per_digit; ++i) out.test.push_back(tagged(list[skip + i]));
    }
    return out;
}

RawDigits synth_source(const BenchmarkConfig& config) {
    config.split.validate();
    RawDigits out;
    for (int d = 0; d < 10; ++d) {
        Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(d), kGlyphSalt);
        const std::size_t n = config.counts.needed(config.split.role_of(d));
        for (std::size_t i = 0; i < n; ++i) {
            out.images.push_back(render_glyph(d, rng));
            out.labels.push_back(d);
        }
    }
    return out;
}

Splits generate_benchmark(const RawDigits& source, const BenchmarkConfig& config) {
    config.split.validate();
    if (source.images.size() != source.labels.size()) {
        throw std::invalid_argument("generate_benchmark: image and label counts differ");
    }
    std::array<std::vector<std::size_t>, 10> by_digit;
    for (std::size_t i = 0; i < source.labels.size(); ++i) {
        by_digit.at(static_cast<std::size_t>(source.labels[i])).push_back(i);
    }
    std::vector<ImageSample> pool;
    std::uint64_t next_id = 0;
    for (int d = 0; d < 10; ++d) {
        auto& idx = by_digit[static_cast<std::size_t>(d)];
        const Role role = config.split.role_of(d);
        const std::size_t need = config.counts.needed(role);
        if (idx.size() < need) {
            throw std::invalid_argument("generate_benchmark: digit " + std::to_string(d) + " (" +
                                        std::string(role_name(role)) + ") needs " + std::to_string(need) +
                                        " source images, has " + std::to_string(idx.size()) + ", short by " +
                                        std::to_string(need - idx.size()));
        }
        Rng select = make_stream(config.seed, static_cast<std::uint64_t>(d), kSelectSalt);
        std::shuffle(idx.begin(), idx.end(), select);
        for (std::size_t k = 0; k < need; ++k) {
            ImageSample s;
            s.id = next_id++;
            s.digit = d;
            s.role = role;
            Rng canvas_rng = make_stream(config.seed, s.id, kCanvasSalt);
            Rng noise_rng = make_stream(config.seed, s.id, kNoiseSalt);
            s.pixels = add_noise(compose_canvas(source.images[idx[k]], canvas_rng, config.canvas), config.noise,
                                 noise_rng);
            pool.push_back(std::move(s));
        }
    }
    return build_splits(pool, config.split, config.counts);
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

void write_dataset(const fs::path& dir, const Splits& splits, std::size_t height, std::size_t width) {
    struct Row {
        const ImageSample* sample;
        bool vae = false, reg = false, test = false;
    };
    std::map<std::uint64_t, Row> rows;
    for (const ImageSample& s : splits.train_vae) rows[s.id].sample = &s, rows[s.id].vae = true;
    for (const ImageSample& s : splits.train_reg) rows[s.id].sample = &s, rows[s.id].reg = true;
    for (const ImageSample& s : splits.test) rows[s.id].sample = &s, rows[s.id].test = true;
    const Shape expected{1, height, width};
    for (const auto& [id, row] : rows) {
        if (row.sample->pixels.shape() != expected) {
            throw ShapeError("write_dataset: sample " + std::to_string(id) + " has shape " +
                             to_string(row.sample->pixels.shape()));
        }
    }

    fs::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
    std::ofstream images(dir / "images.f64", std::ios::binary);
    manifest << "id,digit,role,train_vae,train_reg,test\n";
    for (const auto& [id, row] : rows) {
        manifest << id << ',' << row.sample->digit << ',' << role_name(row.sample->role) << ','
                 << int(row.vae) << ',' << int(row.reg) << ',' << int(row.test) << '\n';
        write_f64_le(images, row.sample->pixels.values());
    }
    std::ofstream cfg(dir / "dataset.cfg", std::ios::binary);
    cfg << "height=" << height << "\nwidth=" << width << "\ncount=" << rows.size() << '\n';
    if (!manifest || !images || !cfg) throw std::runtime_error("write_dataset: failed writing " + dir.string());
}

Splits read_dataset(const fs::path& dir) {
    std::ifstream cfg(dir / "dataset.cfg");
    if (!cfg) throw std::runtime_error("read_dataset: missing " + (dir / "dataset.cfg").string());
    std::map<std::string, std::string> kv;
    for (std::string line; std::getline(cfg, line);) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    std::size_t height = 0, width = 0, count = 0;
    try {
        height = std::stoul(kv.at("height"));
        width = std::stoul(kv.at("width"));
        count = std::stoul(kv.at("count"));
    } catch (const std::exception&) {
        throw FormatError("read_dataset: dataset.cfg lacks height/width/count");
    }

    std::ifstream manifest(dir / "manifest.csv");
    if (!manifest) throw std::runtime_error("read_dataset: missing " + (dir / "manifest.csv").string());
    std::ifstream images(dir / "images.f64", std::ios::binary);
    if (!images) throw std::runtime_error("read_dataset: missing " + (dir / "images.f64").string());
    const auto image_bytes = fs::file_size(dir / "images.f64");
    if (image_bytes != count * height * width * 8) {
        throw FormatError("read_dataset: images.f64 has " + std::to_string(image_bytes) + " bytes, expected " +
                          std::to_string(count * height * width * 8));
    }

    std::string line;
    std::getline(manifest, line);
    if (trim(line) != "id,digit,role,train_vae,train_reg,test") {
        throw FormatError("read_dataset: unexpected manifest header '" + line + "'");
    }
    Splits out;
    std::size_t rows = 0;
    while (std::getline(manifest, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
        if (fields.size() != 6) throw FormatError("read_dataset: malformed manifest row '" + line + "'");
        ImageSample s;
        try {
            s.id = std::stoull(fields[0]);
            s.digit = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw FormatError("read_dataset: malformed manifest row '" + line + "'");
        }
        const auto role = parse_role(fields[2]);
        if (!role || s.digit < 0 || s.digit > 9) throw FormatError("read_dataset: malformed manifest row '" + line + "'");
        s.role = *role;
        s.pixels = Tensor({1, height, width});
        read_f64_le(images, s.pixels.values());
        if (fields[3] == "1") out.train_vae.push_back(s);
        if (fields[4] == "1") out.train_reg.push_back(s);
        if (fields[5] == "1") out.test.push_back(std::move(s));
        ++rows;
    }
    if (rows != count) {
        throw FormatError("read_dataset: manifest lists " + std::to_string(rows) + " rows, dataset.cfg says " +
                          std::to_string(count));
    }
    return out;
}

}  // namespace spader
