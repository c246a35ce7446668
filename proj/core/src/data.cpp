#include "usod/data.hpp"

#include "usod/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <cstring>
#include <sstream>

namespace usod::data {

namespace fs = std::filesystem;

std::string SampleRecord::stem() const { return fs::path(image_path).stem().string(); }

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(item);
    return out;
}

std::string resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

cv::Mat clamp01(const cv::Mat& m) {
    cv::Mat out;
    cv::min(cv::max(m, 0.0), 1.0, out);
    return out;
}

} // namespace

std::vector<SampleRecord> load_manifest(const std::string& path, const std::string& split_name) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest '" + path + "'");
    const fs::path base = fs::path(path).parent_path();
    std::vector<SampleRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split(line, '\t');
        if (fields.size() < 2)
            throw InputError(path + ":" + std::to_string(line_no) + ": expected image<TAB>mask[<TAB>tags]");
        SampleRecord r;
        r.image_path = resolve(base, fields[0]);
        r.mask_path = resolve(base, fields[1]);
        r.split = split_name;
        if (fields.size() > 2)
            for (auto& t : split(fields[2], ','))
                if (!t.empty()) r.tags.push_back(t);
        for (const auto* p : {&r.image_path, &r.mask_path})
            if (!fs::exists(*p)) throw InputError(path + ":" + std::to_string(line_no) + ": missing file '" + *p + "'");
        records.push_back(std::move(r));
    }
    return records;
}

Sample read_sample(const SampleRecord& record, int resolution) {
    cv::Mat bgr = cv::imread(record.image_path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw InputError("cannot read image '" + record.image_path + "'");
    cv::Mat gray = cv::imread(record.mask_path, cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw InputError("cannot read mask '" + record.mask_path + "'");
    if (gray.size() != bgr.size())
        throw InputError("mask '" + record.mask_path + "' (" + std::to_string(gray.cols) + "x" +
                         std::to_string(gray.rows) + ") does not match image '" + record.image_path + "' (" +
                         std::to_string(bgr.cols) + "x" + std::to_string(bgr.rows) + ")");
    Sample s;
    s.name = record.stem();
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    rgb.convertTo(s.image, CV_32FC3, 1.0 / 255.0);
    s.mask = (gray > 127) / 255;
    if (resolution > 0 && (s.image.rows != resolution || s.image.cols != resolution)) {
        cv::resize(s.image, s.image, {resolution, resolution}, 0, 0, cv::INTER_LINEAR);
        cv::resize(s.mask, s.mask, {resolution, resolution}, 0, 0, cv::INTER_NEAREST);
    }
    return s;
}

cv::Mat rotate_quarter(const cv::Mat& m, int quarter_turns) {
    const int q = ((quarter_turns % 4) + 4) % 4;
    if (q == 0) return m.clone();
    cv::Mat out;
    const int codes[] = {0, cv::ROTATE_90_COUNTERCLOCKWISE, cv::ROTATE_180, cv::ROTATE_90_CLOCKWISE};
    cv::rotate(m, out, codes[q]);
    return out;
}

Sample warp_pair(const Sample& sample, const cv::Mat& affine) {
    Sample out;
    out.name = sample.name;
    const cv::Size size = sample.image.size();
    cv::warpAffine(sample.image, out.image, affine, size, cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    cv::warpAffine(sample.mask, out.mask, affine, size, cv::INTER_NEAREST, cv::BORDER_REFLECT_101);
    return out;
}

Sample augment(const Sample& sample, uint64_t seed, const AugmentConfig& config) {
    if (!config.enabled) return {sample.name, sample.image.clone(), sample.mask.clone()};
    std::mt19937_64 rng(seed);
    const double w = sample.image.cols, h = sample.image.rows;

    // rotation about the center, then a square-aspect resized crop, composed into one affine
    const double angle = uniform(rng, -config.max_rotation_deg, config.max_rotation_deg);
    cv::Mat rot = cv::getRotationMatrix2D({static_cast<float>(w / 2), static_cast<float>(h / 2)}, angle, 1.0);
    double scale = 1.0, x0 = 0.0, y0 = 0.0;
    if (config.crop) {
        const double area = uniform(rng, config.crop_scale_min, 1.0);
        const double side = std::sqrt(area);
        x0 = uniform(rng, 0.0, (1.0 - side) * w);
        y0 = uniform(rng, 0.0, (1.0 - side) * h);
        scale = 1.0 / side;
    }
    cv::Mat crop = (cv::Mat_<double>(3, 3) << scale, 0, -x0 * scale, 0, scale, -y0 * scale, 0, 0, 1);
    cv::Mat rot3 = cv::Mat::eye(3, 3, CV_64F);
    rot.copyTo(rot3(cv::Rect(0, 0, 3, 2)));
    cv::Mat full = crop * rot3;
    cv::Mat affine = full(cv::Rect(0, 0, 3, 2)).clone();
    Sample out = warp_pair(sample, affine);

    const double b = uniform(rng, 1.0 - config.brightness, 1.0 + config.brightness);
    const double c = uniform(rng, 1.0 - config.contrast, 1.0 + config.contrast);
    const double s = uniform(rng, 1.0 - config.sharpness, 1.0 + config.sharpness);
    cv::Mat img = clamp01(out.image * b);
    cv::Mat gray;
    cv::cvtColor(img, gray, cv::COLOR_RGB2GRAY);
    const double mean = cv::mean(gray)[0];
    img = clamp01((img - cv::Scalar::all(mean)) * c + cv::Scalar::all(mean));
    cv::Mat blurred;
    cv::GaussianBlur(img, blurred, {3, 3}, 0.0, 0.0, cv::BORDER_REFLECT_101);
    out.image = clamp01(blurred + (img - blurred) * s);
    return out;
}

torch::Tensor image_to_tensor(const cv::Mat& image) {
    if (image.type() != CV_32FC3) throw InputError("image_to_tensor expects CV_32FC3");
    cv::Mat c = image.isContinuous() ? image : image.clone();
    auto t = torch::from_blob(c.data, {c.rows, c.cols, 3}, torch::kFloat32).permute({2, 0, 1}).clone();
    auto mean = torch::tensor({kImageMean[0], kImageMean[1], kImageMean[2]}).view({3, 1, 1});
    auto std = torch::tensor({kImageStd[0], kImageStd[1], kImageStd[2]}).view({3, 1, 1});
    return (t - mean) / std;
}

torch::Tensor mask_to_tensor(const cv::Mat& mask) {
    cv::Mat f;
    mask.convertTo(f, CV_32F);
    return torch::from_blob(f.data, {1, f.rows, f.cols}, torch::kFloat32).clone();
}

Batch make_batch(const std::vector<Sample>& samples) {
    if (samples.empty()) throw InputError("make_batch: no samples");
    std::vector<torch::Tensor> images, masks;
    Batch b;
    for (const auto& s : samples) {
        images.push_back(image_to_tensor(s.image));
        masks.push_back(mask_to_tensor(s.mask));
        b.names.push_back(s.name);
    }
    b.images = torch::stack(images);
    b.masks = torch::stack(masks);
    return b;
}

cv::Mat tensor_to_u8(const torch::Tensor& map, double scale) {
    auto t = map.detach().to(torch::kCPU, torch::kFloat64).squeeze();
    if (t.dim() != 2) throw InputError("tensor_to_u8 expects a single-channel map");
    t = (t * scale * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
    cv::Mat out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8U);
    std::memcpy(out.data, t.data_ptr<uint8_t>(), out.total());
    return out;
}

void SynthSpec::validate() const {
    if (size < 8) throw ConfigError("synth size must be >= 8");
    if (min_shapes < 1 || max_shapes < min_shapes) throw ConfigError("synth shape count range is empty");
    if (types.empty()) throw ConfigError("synth needs at least one shape type");
    if (texture_cell < 1) throw ConfigError("synth texture cell must be >= 1");
    if (!(0.0 <= min_occupancy && min_occupancy <= max_occupancy && max_occupancy <= 1.0))
        throw ConfigError("synth occupancy bounds must satisfy 0 <= min <= max <= 1");
}

void draw_disk(cv::Mat& mask, double cy, double cx, double radius) {
    for (int r = 0; r < mask.rows; ++r)
        for (int c = 0; c < mask.cols; ++c) {
            const double dy = r + 0.5 - cy, dx = c + 0.5 - cx;
            if (dy * dy + dx * dx <= radius * radius) mask.at<uint8_t>(r, c) = 1;
        }
}

namespace {

// Smooth value noise: a random lattice upsampled bilinearly, one channel per call.
cv::Mat value_noise(std::mt19937_64& rng, int size, int cell) {
    const int n = size / cell + 2;
    cv::Mat lattice(n, n, CV_32F);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) lattice.at<float>(r, c) = static_cast<float>(uniform(rng, -1.0, 1.0));
    cv::Mat up;
    cv::resize(lattice, up, {n * cell, n * cell}, 0, 0, cv::INTER_LINEAR);
    return up(cv::Rect(0, 0, size, size)).clone();
}

cv::Mat textured(std::mt19937_64& rng, int size, int cell, const cv::Vec3f& color, double amplitude) {
    std::vector<cv::Mat> ch(3);
    for (int k = 0; k < 3; ++k) ch[k] = value_noise(rng, size, cell) * amplitude + color[k];
    cv::Mat img;
    cv::merge(ch, img);
    return clamp01(img);
}

void draw_shape(std::mt19937_64& rng, cv::Mat& mask, ShapeType type, int size) {
    const double cy = uniform(rng, 0.2, 0.8) * size, cx = uniform(rng, 0.2, 0.8) * size;
    const double radius = uniform(rng, 0.1, 0.25) * size;
    switch (type) {
    case ShapeType::Disk:
        draw_disk(mask, cy, cx, radius);
        break;
    case ShapeType::Rectangle: {
        const double hh = radius * uniform(rng, 0.6, 1.2), hw = radius * uniform(rng, 0.6, 1.2);
        cv::rectangle(mask, cv::Point(static_cast<int>(cx - hw), static_cast<int>(cy - hh)),
                      cv::Point(static_cast<int>(cx + hw), static_cast<int>(cy + hh)), cv::Scalar(1), cv::FILLED);
        break;
    }
    case ShapeType::Blob: {
        const int vertices = uniform_int(rng, 7, 12);
        std::vector<cv::Point> poly;
        for (int i = 0; i < vertices; ++i) {
            const double a = 2.0 * std::numbers::pi * i / vertices;
            const double r = radius * uniform(rng, 0.7, 1.3);
            poly.emplace_back(static_cast<int>(std::lround(cx + r * std::cos(a))),
                              static_cast<int>(std::lround(cy + r * std::sin(a))));
        }
        cv::fillPoly(mask, std::vector<std::vector<cv::Point>>{poly}, cv::Scalar(1), cv::LINE_8);
        break;
    }
    }
}

} // namespace

Sample synth_one(const SynthSpec& spec, uint64_t seed, const std::string& name) {
    spec.validate();
    std::mt19937_64 rng(seed);
    const int n = spec.size;
    Sample s;
    s.name = name;
    for (int attempt = 0;; ++attempt) {
        s.mask = cv::Mat::zeros(n, n, CV_8U);
        const int count = uniform_int(rng, spec.min_shapes, spec.max_shapes);
        for (int i = 0; i < count; ++i) {
            const auto type = spec.types[uniform_int(rng, 0, static_cast<int>(spec.types.size()) - 1)];
            draw_shape(rng, s.mask, type, n);
        }
        const double occ = cv::countNonZero(s.mask) / static_cast<double>(n * n);
        if ((occ >= spec.min_occupancy && occ <= spec.max_occupancy) || attempt >= 100) break;
    }
    // background and foreground colors kept apart in luminance so the task is learnable
    const double bg_level = uniform(rng, 0.1, 0.9);
    const double fg_level = bg_level > 0.5 ? uniform(rng, 0.0, bg_level - 0.4) : uniform(rng, bg_level + 0.4, 1.0);
    auto tint = [&](double level) {
        return cv::Vec3f(static_cast<float>(std::clamp(level + uniform(rng, -0.1, 0.1), 0.0, 1.0)),
                         static_cast<float>(std::clamp(level + uniform(rng, -0.1, 0.1), 0.0, 1.0)),
                         static_cast<float>(std::clamp(level + uniform(rng, -0.1, 0.1), 0.0, 1.0)));
    };
    cv::Mat background = textured(rng, n, spec.texture_cell, tint(bg_level), spec.texture_amplitude);
    cv::Mat foreground = textured(rng, n, spec.texture_cell, tint(fg_level), spec.texture_amplitude * 0.5);
    s.image = background.clone();
    foreground.copyTo(s.image, s.mask);
    return s;
}

std::vector<Sample> synth_generate(const SynthSpec& spec, int n) {
    spec.validate();
    std::vector<Sample> out;
    out.reserve(std::max(n, 0));
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%05d", i);
        out.push_back(synth_one(spec, spec.seed + static_cast<uint64_t>(i), name));
    }
    return out;
}

std::vector<torch::Tensor> uncertainty_corpus(int n, int size, double lo, double hi, uint64_t seed) {
    if (size < 2 || !(0.0 < lo && lo <= hi && hi <= 1.0))
        throw ConfigError("uncertainty_corpus: need size >= 2 and 0 < lo <= hi <= 1");
    std::vector<torch::Tensor> maps;
    const int total = size * size;
    for (int i = 0; i < n; ++i) {
        std::mt19937_64 rng(seed + static_cast<uint64_t>(i));
        // the target is rounded inside the band so that count / total stays in [lo, hi]
        const int min_count = static_cast<int>(std::ceil(lo * total));
        const int max_count = std::max(min_count, static_cast<int>(std::floor(hi * total)));
        const int target = std::max(1, uniform_int(rng, min_count, max_count));
        std::vector<uint8_t> on(total, 0);
        std::vector<int> frontier;
        const int clusters = uniform_int(rng, 1, 4);
        for (int k = 0; k < clusters; ++k) frontier.push_back(uniform_int(rng, 0, total - 1));
        int count = 0;
        while (count < target) {
            if (frontier.empty()) frontier.push_back(uniform_int(rng, 0, total - 1));
            const int pick = uniform_int(rng, 0, static_cast<int>(frontier.size()) - 1);
            const int idx = frontier[pick];
            frontier[pick] = frontier.back();
            frontier.pop_back();
            if (on[idx]) continue;
            on[idx] = 1;
            ++count;
            const int r = idx / size, c = idx % size;
            if (r > 0) frontier.push_back(idx - size);
            if (r + 1 < size) frontier.push_back(idx + size);
            if (c > 0) frontier.push_back(idx - 1);
            if (c + 1 < size) frontier.push_back(idx + 1);
        }
        auto map = torch::zeros({size, size}, torch::kFloat32);
        auto acc = map.accessor<float, 2>();
        for (int idx = 0; idx < total; ++idx)
            if (on[idx]) acc[idx / size][idx % size] = static_cast<float>(uniform(rng, 0.05, 0.5));
        maps.push_back(map);
    }
    return maps;
}

void write_dataset(const std::string& dir, const std::vector<Sample>& samples) {
    const fs::path root(dir);
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    std::ofstream manifest(root / "manifest.tsv");
    if (!manifest) throw InputError("cannot write manifest in '" + dir + "'");
    for (const auto& s : samples) {
        cv::Mat u8, bgr;
        s.image.convertTo(u8, CV_8UC3, 255.0);
        cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
        const std::string image = "images/" + s.name + ".png", mask = "masks/" + s.name + ".png";
        if (!cv::imwrite((root / image).string(), bgr) || !cv::imwrite((root / mask).string(), s.mask * 255))
            throw InputError("failed to write sample '" + s.name + "' under '" + dir + "'");
        manifest << image << '\t' << mask << '\n';
    }
}

} // namespace usod::data
