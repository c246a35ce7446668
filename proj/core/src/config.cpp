#include "usod/config.hpp"

#include "usod/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace usod {

int64_t TrainConfig::resolved_warmup() const {
    return warmup >= 0 ? warmup : iterations / 20;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
    if (!(base_lr > 0)) throw ConfigError("train.lr must be > 0");
    if (!(backbone_lr_mult > 0 && backbone_lr_mult <= 1)) throw ConfigError("train.backbone_lr_mult must be in (0,1]");
    if (!(poly_power > 0)) throw ConfigError("train.poly_power must be > 0");
    if (resolved_warmup() > iterations) throw ConfigError("train.warmup must not exceed train.iterations");
    if (grad_clip < 0) throw ConfigError("train.grad_clip must be >= 0");
    if (eval_every < 0 || log_every < 1) throw ConfigError("train.eval_every >= 0 and train.log_every >= 1 required");
}

void DataConfig::validate() const {
    if (source != "synthetic" && source != "manifest") throw ConfigError("data.source must be synthetic|manifest");
    if (resolution < 8) throw ConfigError("data.resolution must be >= 8");
    if (synth_count < 1 || holdout_count < 0) throw ConfigError("data.synth_count >= 1 and data.holdout_count >= 0 required");
}

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    data.validate();
    if (data.resolution % model.backbone.strides[kPyramidLevels - 1] != 0)
        throw ConfigError("data.resolution " + std::to_string(data.resolution) + " is not divisible by the coarsest stride " +
                          std::to_string(model.backbone.strides[kPyramidLevels - 1]));
    if (data.source == "manifest" && paths.train_manifest.empty())
        throw ConfigError("data.source=manifest requires paths.train_manifest");
    if (loss.require_refined && !model.refine.enabled)
        throw ConfigError("loss needs refinement heads but ura.enabled=false");
    if (model.refine.enabled && loss.require_refined && model.refine.stages != 3)
        throw ConfigError("loss expects three refinement heads; set ura.stages=3");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // shortest form that round-trips
    for (int p = 1; p <= 17; ++p) {
        char shorter[64];
        std::snprintf(shorter, sizeof(shorter), "%.*g", p, v);
        if (std::stod(shorter) == v) return shorter;
    }
    return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

std::array<int64_t, kPyramidLevels> parse_levels(const std::string& key, const std::string& v) {
    std::array<int64_t, kPyramidLevels> out{};
    std::istringstream in(v);
    std::string item;
    std::size_t i = 0;
    while (std::getline(in, item, ',')) {
        if (i >= out.size()) throw ConfigError(key + ": expected 5 comma-separated integers");
        out[i++] = parse_number<int64_t>(key, trim(item));
    }
    if (i != out.size()) throw ConfigError(key + ": expected 5 comma-separated integers");
    return out;
}

std::string fmt_levels(const std::array<int64_t, kPyramidLevels>& a) {
    std::string s;
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + std::to_string(a[i]);
    return s;
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

// Wraps parse functions that throw ConfigError without the key name.
template <class F>
auto keyed(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

#define USOD_NUM(KEY, MEMBER, TYPE)                                                                          \
    {KEY, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_number<TYPE>(k, v); }, \
           [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }}}
#define USOD_REAL(KEY, MEMBER)                                                                               \
    {KEY, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_number<double>(k, v); }, \
           [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); }}}
#define USOD_BOOL(KEY, MEMBER)                                                                               \
    {KEY, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_bool(k, v); }, \
           [](const ExperimentConfig& c) { return fmt_bool(c.MEMBER); }}}
#define USOD_STR(KEY, MEMBER)                                                                                \
    {KEY, {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.MEMBER = v; },               \
           [](const ExperimentConfig& c) { return c.MEMBER; }}}
#define USOD_ENUM(KEY, MEMBER, PARSE, PRINT)                                                                 \
    {KEY, {[](ExperimentConfig& c, const std::string& k, const std::string& v) {                              \
               c.MEMBER = keyed(k, [&] { return PARSE(v); });                                                 \
           },                                                                                                 \
           [](const ExperimentConfig& c) { return PRINT(c.MEMBER); }}}

std::string scheme_string(const InteractionScheme& s) { return s.to_string(); }
std::string enum_string(PartitionMode m) { return to_string(m); }
std::string enum_string(OccupancyNorm m) { return to_string(m); }
std::string enum_string(MaskAxis m) { return to_string(m); }
std::string enum_string(Guidance m) { return to_string(m); }
std::string enum_string(LossVariant m) { return to_string(m); }
std::string enum_string(Reduction m) { return to_string(m); }

const std::map<std::string, Field>& schema() {
    static const std::map<std::string, Field> fields = {
        {"backbone.channels",
         {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.model.backbone.stage_channels = parse_levels(k, v);
          },
          [](const ExperimentConfig& c) { return fmt_levels(c.model.backbone.stage_channels); }}},
        {"backbone.strides",
         {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.model.backbone.strides = parse_levels(k, v); },
          [](const ExperimentConfig& c) { return fmt_levels(c.model.backbone.strides); }}},
        USOD_NUM("backbone.blocks", model.backbone.blocks_per_stage, int64_t),
        USOD_BOOL("backbone.bias", model.backbone.bias),
        USOD_NUM("model.width", model.width, int64_t),
        USOD_NUM("model.heads", model.heads, int64_t),
        USOD_BOOL("model.bias", model.bias),
        USOD_BOOL("model.scale_logits", model.scale_logits),
        USOD_BOOL("model.gate_sigmoid", model.gate_sigmoid),
        USOD_BOOL("mia.enabled", model.mia_enabled),
        USOD_ENUM("mia.scheme", model.scheme, InteractionScheme::parse, scheme_string),
        USOD_BOOL("ssca.enabled", model.ssca_enabled),
        USOD_BOOL("ura.enabled", model.refine.enabled),
        USOD_NUM("ura.stages", model.refine.stages, int),
        USOD_ENUM("ura.guidance", model.refine.guidance, parse_guidance, enum_string),
        USOD_ENUM("ura.mask_axis", model.refine.mask_axis, parse_mask_axis, enum_string),
        USOD_ENUM("ura.stage_factors", model.refine.stage_factors, parse_stage_factors, stage_factors_string),
        USOD_ENUM("partition.mode", model.partition.mode, parse_partition_mode, enum_string),
        USOD_REAL("partition.p_threshold", model.partition.p_threshold),
        USOD_NUM("partition.min_size", model.partition.min_size, int64_t),
        USOD_ENUM("partition.occupancy_norm", model.partition.occupancy_norm, parse_occupancy_norm, enum_string),
        USOD_REAL("partition.random_prob", model.partition.random_split_prob),
        USOD_NUM("partition.seed", model.partition.random_seed, uint64_t),
        USOD_ENUM("loss.variant", loss.variant, parse_loss_variant, enum_string),
        USOD_ENUM("loss.reduction", loss.reduction, parse_reduction, enum_string),
        USOD_BOOL("loss.require_refined", loss.require_refined),
        USOD_NUM("train.batch_size", train.batch_size, int64_t),
        USOD_NUM("train.iterations", train.iterations, int64_t),
        USOD_REAL("train.lr", train.base_lr),
        USOD_REAL("train.backbone_lr_mult", train.backbone_lr_mult),
        USOD_REAL("train.poly_power", train.poly_power),
        USOD_NUM("train.warmup", train.warmup, int64_t),
        USOD_NUM("train.seed", train.seed, uint64_t),
        USOD_REAL("train.grad_clip", train.grad_clip),
        USOD_NUM("train.eval_every", train.eval_every, int64_t),
        USOD_NUM("train.log_every", train.log_every, int64_t),
        USOD_STR("data.source", data.source),
        USOD_NUM("data.resolution", data.resolution, int),
        USOD_NUM("data.synth_count", data.synth_count, int),
        USOD_NUM("data.holdout_count", data.holdout_count, int),
        USOD_NUM("data.synth_seed", data.synth_seed, uint64_t),
        USOD_BOOL("data.augment", data.augment),
        USOD_STR("paths.train_manifest", paths.train_manifest),
        USOD_STR("paths.holdout_manifest", paths.holdout_manifest),
        USOD_STR("paths.output_dir", paths.output_dir),
    };
    return fields;
}

#undef USOD_NUM
#undef USOD_REAL
#undef USOD_BOOL
#undef USOD_STR
#undef USOD_ENUM

} // namespace

uint64_t fnv1a(const std::string& text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> ExperimentConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [k, _] : schema()) out.push_back(k);
    return out;
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
    std::map<std::string, std::string> out;
    for (const auto& [k, f] : schema()) out[k] = f.get(*this);
    return out;
}

std::string ExperimentConfig::to_text() const {
    std::string s;
    for (const auto& [k, v] : to_map()) s += k + " = " + v + "\n";
    return s;
}

std::string ExperimentConfig::hash() const {
    std::string canonical;
    for (const auto& [k, v] : to_map())
        if (k.rfind("paths.", 0) != 0) canonical += k + "=" + v + "\n";
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
    return buf;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    const auto it = schema().find(key);
    if (it == schema().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(line_no) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        try {
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

void ExperimentConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config '" + path + "'");
    out << to_text();
}

} // namespace usod
