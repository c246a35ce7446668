#include "usod/adp.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

namespace usod {

std::string to_string(PartitionMode mode) {
    switch (mode) {
    case PartitionMode::Adaptive: return "adp";
    case PartitionMode::Global: return "global";
    case PartitionMode::FixedWindow: return "fixed-window";
    case PartitionMode::RandomWindow: return "random-window";
    }
    return "adp";
}

std::string to_string(OccupancyNorm norm) {
    return norm == OccupancyNorm::ParentArea ? "parent" : "window";
}

std::string to_string(MaskAxis axis) {
    return axis == MaskAxis::Keys ? "keys" : "queries";
}

PartitionMode parse_partition_mode(const std::string& text) {
    if (text == "adp") return PartitionMode::Adaptive;
    if (text == "global") return PartitionMode::Global;
    if (text == "fixed-window") return PartitionMode::FixedWindow;
    if (text == "random-window") return PartitionMode::RandomWindow;
    throw ConfigError("unknown partition mode '" + text + "' (adp|global|fixed-window|random-window)");
}

OccupancyNorm parse_occupancy_norm(const std::string& text) {
    if (text == "parent") return OccupancyNorm::ParentArea;
    if (text == "window") return OccupancyNorm::WindowArea;
    throw ConfigError("unknown occupancy normalization '" + text + "' (parent|window)");
}

MaskAxis parse_mask_axis(const std::string& text) {
    if (text == "keys") return MaskAxis::Keys;
    if (text == "queries") return MaskAxis::Queries;
    throw ConfigError("unknown mask axis '" + text + "' (keys|queries)");
}

void PartitionConfig::validate() const {
    if (!(p_threshold >= 0.0 && p_threshold <= 1.0))
        throw ConfigError("partition.p_threshold must lie in [0, 1]");
    if (min_size < 1)
        throw ConfigError("partition.min_size must be >= 1");
    if (!(random_split_prob >= 0.0 && random_split_prob <= 1.0))
        throw ConfigError("partition.random_prob must lie in [0, 1]");
}

bool PartitionConfig::is_global() const {
    return mode == PartitionMode::Global || (mode == PartitionMode::Adaptive && p_threshold == 0.0);
}

double PartitionConfig::effective_threshold() const {
    switch (mode) {
    case PartitionMode::Global: return 0.0;
    case PartitionMode::FixedWindow: return 1.0;
    default: return p_threshold;
    }
}

CostReport& CostReport::operator+=(const CostReport& other) {
    mac_count += other.mac_count;
    leaf_count += other.leaf_count;
    max_depth = std::max(max_depth, other.max_depth);
    for (std::size_t i = 0; i < occupancy_histogram.size(); ++i)
        occupancy_histogram[i] += other.occupancy_histogram[i];
    return *this;
}

namespace {

class IntegralImage {
public:
    explicit IntegralImage(const torch::Tensor& mask) {
        auto m = mask.to(torch::kCPU).to(torch::kUInt8).contiguous();
        h_ = m.size(0);
        w_ = m.size(1);
        sums_.assign(static_cast<std::size_t>((h_ + 1) * (w_ + 1)), 0);
        auto acc = m.accessor<uint8_t, 2>();
        for (int64_t y = 0; y < h_; ++y) {
            int64_t row = 0;
            for (int64_t x = 0; x < w_; ++x) {
                row += acc[y][x] ? 1 : 0;
                at(y + 1, x + 1) = at(y, x + 1) + row;
            }
        }
    }

    int64_t sum(const Window& win) const {
        return at(win.y0 + win.h, win.x0 + win.w) - at(win.y0, win.x0 + win.w) - at(win.y0 + win.h, win.x0) +
               at(win.y0, win.x0);
    }

private:
    int64_t& at(int64_t y, int64_t x) { return sums_[static_cast<std::size_t>(y * (w_ + 1) + x)]; }
    int64_t at(int64_t y, int64_t x) const { return sums_[static_cast<std::size_t>(y * (w_ + 1) + x)]; }

    int64_t h_ = 0, w_ = 0;
    std::vector<int64_t> sums_;
};

uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double coin(uint64_t seed, uint64_t salt, const Window& w) {
    uint64_t h = splitmix(seed);
    for (uint64_t v : {salt, static_cast<uint64_t>(w.y0), static_cast<uint64_t>(w.x0), static_cast<uint64_t>(w.h),
                       static_cast<uint64_t>(w.w)})
        h = splitmix(h ^ v);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

bool splittable(const Window& w) {
    return w.h >= 2 && w.w >= 2 && w.h % 2 == 0 && w.w % 2 == 0;
}

std::array<Window, 4> quadrants(const Window& w) {
    const int64_t hh = w.h / 2, hw = w.w / 2;
    return {Window{w.y0, w.x0, hh, hw}, Window{w.y0, w.x0 + hw, hh, hw}, Window{w.y0 + hh, w.x0, hh, hw},
            Window{w.y0 + hh, w.x0 + hw, hh, hw}};
}

struct Planner {
    const IntegralImage& integral;
    const PartitionConfig& config;
    uint64_t salt;

    bool wants_split(const PartitionNode& child) const {
        switch (config.mode) {
        case PartitionMode::FixedWindow: return true;
        case PartitionMode::RandomWindow:
            return coin(config.random_seed, salt, child.window) < config.random_split_prob;
        default: return child.occupancy < config.p_threshold;
        }
    }

    // Partition `node` into quadrants; each quadrant either recurses or becomes an attended leaf.
    void expand(PartitionNode& node) const {
        node.decision = PartitionNode::Decision::Recurse;
        node.children.reserve(4);
        for (const auto& win : quadrants(node.window)) {
            PartitionNode child;
            child.window = win;
            child.depth = node.depth + 1;
            child.uncertain = integral.sum(win);
            const auto denom = config.occupancy_norm == OccupancyNorm::ParentArea ? node.window.area() : win.area();
            child.occupancy = static_cast<double>(child.uncertain) / static_cast<double>(denom);
            // Odd or unit sides cannot be halved: such windows attend whole.
            if (wants_split(child) && win.h > config.min_size && splittable(win))
                expand(child);
            else
                child.decision = PartitionNode::Decision::Attend;
            node.children.push_back(std::move(child));
        }
    }
};

} // namespace

PartitionNode plan_partition(const torch::Tensor& uncertain, const PartitionConfig& config, uint64_t salt) {
    config.validate();
    if (uncertain.dim() != 2)
        throw InputError("plan_partition expects an [h, w] mask, got " + shape_string(uncertain));
    IntegralImage integral(uncertain);
    PartitionNode root;
    root.window = Window{0, 0, uncertain.size(0), uncertain.size(1)};
    root.uncertain = integral.sum(root.window);
    root.occupancy = root.window.area() ? static_cast<double>(root.uncertain) / static_cast<double>(root.window.area()) : 0.0;
    root.decision = PartitionNode::Decision::Attend;
    if (config.is_global())
        return root;
    if (splittable(root.window) && root.window.h > config.min_size)
        Planner{integral, config, salt}.expand(root);
    return root;
}

std::vector<const PartitionNode*> leaves(const PartitionNode& root) {
    std::vector<const PartitionNode*> out;
    std::function<void(const PartitionNode&)> walk = [&](const PartitionNode& n) {
        if (n.decision == PartitionNode::Decision::Attend) {
            out.push_back(&n);
            return;
        }
        for (const auto& c : n.children)
            walk(c);
    };
    walk(root);
    return out;
}

CostReport tree_cost(const PartitionNode& root, int64_t channels, bool global) {
    CostReport report;
    for (const PartitionNode* leaf : leaves(root)) {
        ++report.leaf_count;
        report.max_depth = std::max(report.max_depth, leaf->depth);
        const auto bin = std::clamp(static_cast<int>(std::floor(leaf->occupancy * 10.0)), 0, 9);
        ++report.occupancy_histogram[static_cast<std::size_t>(bin)];
        if (global || leaf->uncertain > 0) {
            const auto n = static_cast<uint64_t>(leaf->window.area());
            report.mac_count += n * n * static_cast<uint64_t>(channels);
        }
    }
    return report;
}

namespace {

struct LeafExecutor {
    const torch::Tensor& x; // [C, h, w] of one image
    const torch::Tensor& q;
    const torch::Tensor& k;
    const torch::Tensor& v;
    const torch::Tensor& uncertain; // [h, w] bool
    const AttentionProjectionsImpl& projections;
    MaskAxis axis;

    static torch::Tensor crop(const torch::Tensor& t, const Window& w) {
        return t.slice(-2, w.y0, w.y0 + w.h).slice(-1, w.x0, w.x0 + w.w);
    }

    static torch::Tensor tokens(const torch::Tensor& t, const Window& w) {
        // [C, h, w] window -> [1, h*w, C]
        return crop(t, w).flatten(1).transpose(0, 1).unsqueeze(0);
    }

    torch::Tensor attend(const PartitionNode& leaf) const {
        const auto& win = leaf.window;
        auto flags = crop(uncertain, win).reshape({1, win.area()});
        auto allowed = axis == MaskAxis::Keys ? flags.unsqueeze(1) : flags.unsqueeze(2);
        auto update = projections.attend_tokens(tokens(q, win), tokens(k, win), tokens(v, win), allowed);
        auto update_map = update.squeeze(0).transpose(0, 1).reshape({update.size(2), win.h, win.w});
        return crop(x, win) + update_map;
    }

    // Returns the updated window, or an undefined tensor if nothing inside changed.
    torch::Tensor run(const PartitionNode& node) const {
        if (node.uncertain == 0)
            return {};
        if (node.decision == PartitionNode::Decision::Attend)
            return attend(node);
        std::array<torch::Tensor, 4> parts;
        bool changed = false;
        for (std::size_t i = 0; i < 4; ++i) {
            parts[i] = run(node.children[i]);
            changed = changed || parts[i].defined();
        }
        if (!changed)
            return {};
        for (std::size_t i = 0; i < 4; ++i)
            if (!parts[i].defined())
                parts[i] = crop(x, node.children[i].window);
        auto top = torch::cat({parts[0], parts[1]}, 2);
        auto bottom = torch::cat({parts[2], parts[3]}, 2);
        return torch::cat({top, bottom}, 1);
    }
};

} // namespace

AdpResult adp_attend_projected(const torch::Tensor& x, const torch::Tensor& q, const torch::Tensor& k,
                               const torch::Tensor& v, const torch::Tensor& u, const PartitionConfig& config,
                               const AttentionProjectionsImpl& projections, MaskAxis axis, uint64_t salt) {
    config.validate();
    if (x.dim() != 4 || u.dim() != 4 || u.size(1) != 1)
        throw InputError("adp expects x [b,C,h,w] and u [b,1,h,w], got " + shape_string(x) + " " + shape_string(u));
    for (const auto* t : {&q, &k, &v}) {
        if (t->dim() != 4 || t->size(0) != x.size(0) || t->size(2) != x.size(2) || t->size(3) != x.size(3))
            throw InputError("adp: projected tensor " + shape_string(*t) + " does not match x " + shape_string(x));
    }
    if (u.size(0) != x.size(0) || u.size(2) != x.size(2) || u.size(3) != x.size(3))
        throw InputError("adp: uncertainty " + shape_string(u) + " does not match x " + shape_string(x));
    if (v.size(1) != x.size(1))
        throw InputError("adp: value width " + std::to_string(v.size(1)) + " differs from x width " +
                         std::to_string(x.size(1)));

    const int64_t batch = x.size(0), h = x.size(2), w = x.size(3);
    const int64_t channels = q.size(1);
    auto uncertain = (u.detach() > kUncertainCutoff).squeeze(1); // [b, h, w]
    auto uncertain_cpu = uncertain.to(torch::kCPU);

    AdpResult result;
    result.trees.reserve(static_cast<std::size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
        result.trees.push_back(plan_partition(uncertain_cpu[b], config, splitmix(salt) ^ static_cast<uint64_t>(b)));
        result.cost += tree_cost(result.trees.back(), channels, config.is_global());
    }

    if (config.is_global()) {
        if (!uncertain_cpu.any().item<bool>()) {
            result.output = x;
            return result;
        }
        auto flags = uncertain.reshape({batch, h * w});
        auto allowed = axis == MaskAxis::Keys ? flags.unsqueeze(1) : flags.unsqueeze(2);
        auto update = projections.attend_tokens(to_tokens(q), to_tokens(k), to_tokens(v), allowed);
        result.output = x + from_tokens(update, h, w);
        return result;
    }

    std::vector<torch::Tensor> images;
    images.reserve(static_cast<std::size_t>(batch));
    bool changed = false;
    for (int64_t b = 0; b < batch; ++b) {
        auto xb = x[b];
        auto ub = uncertain[b];
        LeafExecutor exec{xb, q[b], k[b], v[b], ub, projections, axis};
        auto out = exec.run(result.trees[static_cast<std::size_t>(b)]);
        changed = changed || out.defined();
        images.push_back(out.defined() ? out : xb);
    }
    result.output = changed ? torch::stack(images) : x;
    return result;
}

AdpResult adp_attend(const torch::Tensor& x, const torch::Tensor& l, const torch::Tensor& u,
                     const PartitionConfig& config, AttentionProjectionsImpl& projections, MaskAxis axis,
                     uint64_t salt) {
    if (x.dim() != 4 || l.dim() != 4)
        throw InputError("adp expects rank-4 x and l, got " + shape_string(x) + " " + shape_string(l));
    if (x.size(0) != l.size(0) || x.size(2) != l.size(2) || x.size(3) != l.size(3))
        throw InputError("adp: x " + shape_string(x) + " and l " + shape_string(l) + " differ spatially");
    const int64_t h = x.size(2), w = x.size(3);
    auto q = from_tokens(projections.q_proj->forward(to_tokens(x)), h, w);
    auto lt = to_tokens(l);
    auto k = from_tokens(projections.k_proj->forward(lt), h, w);
    auto v = from_tokens(projections.v_proj->forward(lt), h, w);
    return adp_attend_projected(x, q, k, v, u, config, projections, axis, salt);
}

std::vector<CostRow> cost_compare(const std::vector<std::pair<std::string, torch::Tensor>>& corpus,
                                  const std::vector<PartitionConfig>& configs, int64_t channels) {
    std::vector<CostRow> rows;
    for (const auto& [id, map] : corpus) {
        if (map.dim() != 2 && !(map.dim() == 4 && map.size(0) == 1 && map.size(1) == 1))
            throw InputError("cost_compare: map '" + id + "' must be [h,w] or [1,1,h,w], got " + shape_string(map));
        auto flags = (map.reshape({map.size(-2), map.size(-1)}) > kUncertainCutoff);
        for (const auto& cfg : configs) {
            auto tree = plan_partition(flags, cfg);
            auto cost = tree_cost(tree, channels, cfg.is_global());
            std::string mode;
            if (cfg.is_global())
                mode = "global";
            else if (cfg.mode == PartitionMode::Adaptive && cfg.p_threshold >= 1.0)
                mode = "fixed-window";
            else
                mode = to_string(cfg.mode);
            rows.push_back(CostRow{id, mode, cfg.effective_threshold(), cost.mac_count, cost.leaf_count, cost.max_depth});
        }
    }
    return rows;
}

void write_cost_csv(std::ostream& out, const std::vector<CostRow>& rows) {
    out << "map_id,mode,p_threshold,mac_count,leaf_count,max_depth\n";
    for (const auto& r : rows)
        out << r.map_id << ',' << r.mode << ',' << r.p_threshold << ',' << r.mac_count << ',' << r.leaf_count << ','
            << r.max_depth << '\n';
}

} // namespace usod
