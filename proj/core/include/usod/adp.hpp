#pragma once

#include "usod/attention.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace usod {

/// Uncertainty values strictly above this count as "uncertain" for masking and occupancy.
inline constexpr double kUncertainCutoff = 0.01;

enum class PartitionMode {
    Adaptive,     ///< recursive split driven by occupancy
    Global,       ///< one attention over the whole map
    FixedWindow,  ///< split down to min_size everywhere
    RandomWindow, ///< split with a fixed probability per node
};

/// How occupancy is normalized for a child window.
enum class OccupancyNorm {
    ParentArea, ///< uncertain pixels in the window / area of the window being partitioned
    WindowArea, ///< uncertain pixels in the window / area of the window itself
};

/// Whether the uncertainty mask blocks keys (default) or whole query rows.
enum class MaskAxis { Keys, Queries };

std::string to_string(PartitionMode mode);
std::string to_string(OccupancyNorm norm);
std::string to_string(MaskAxis axis);
PartitionMode parse_partition_mode(const std::string& text);
OccupancyNorm parse_occupancy_norm(const std::string& text);
MaskAxis parse_mask_axis(const std::string& text);

struct PartitionConfig {
    double p_threshold = 0.2;
    /// Smallest window height that may still be split. 0 lets the model derive input_side / 32.
    int64_t min_size = 2;
    PartitionMode mode = PartitionMode::Adaptive;
    OccupancyNorm occupancy_norm = OccupancyNorm::ParentArea;
    double random_split_prob = 0.5;
    uint64_t random_seed = 0;

    void validate() const;
    /// Global mode, or adaptive with a zero threshold.
    bool is_global() const;
    /// Threshold actually applied by the split rule (1 for fixed windows).
    double effective_threshold() const;
};

struct Window {
    int64_t y0 = 0, x0 = 0, h = 0, w = 0;

    int64_t area() const { return h * w; }
    bool operator==(const Window&) const = default;
};

struct PartitionNode {
    enum class Decision { Recurse, Attend };

    Window window;
    double occupancy = 0.0;  ///< p used for this node's decision
    int64_t uncertain = 0;   ///< binarized-uncertain pixels inside the window
    Decision decision = Decision::Attend;
    int depth = 0;
    std::vector<PartitionNode> children; ///< four quadrants (TL, TR, BL, BR) when recursing
};

struct CostReport {
    /// query * key * channel multiply-accumulates of Q K^T summed over attended leaves.
    uint64_t mac_count = 0;
    int64_t leaf_count = 0;
    int max_depth = 0;
    /// Leaf occupancy histogram over ten equal bins of [0, 1].
    std::array<int64_t, 10> occupancy_histogram{};

    CostReport& operator+=(const CostReport& other);
};

/// Builds the partition tree for one map. `uncertain` is a boolean [h, w] tensor; `salt`
/// only feeds the random-window coin flips so that each (seed, salt, window) is reproducible.
PartitionNode plan_partition(const torch::Tensor& uncertain, const PartitionConfig& config, uint64_t salt = 0);

/// Leaves in depth-first (TL, TR, BL, BR) order.
std::vector<const PartitionNode*> leaves(const PartitionNode& root);

/// Cost of executing a tree with the given channel count. Global roots are charged the dense
/// product; partitioned leaves without uncertain pixels are skipped and cost nothing.
CostReport tree_cost(const PartitionNode& root, int64_t channels, bool global);

struct AdpResult {
    torch::Tensor output;            ///< [b, C, h, w]
    CostReport cost;                 ///< summed over the batch
    std::vector<PartitionNode> trees; ///< one per image
};

/// Adaptive dynamic partition over pre-projected tensors: x, q [b, C, h, w], k, v [b, C, h, w],
/// u [b, 1, h, w]. Each attended leaf returns x_window + MaskAttention(M_window, q_w, k_w, v_w).
AdpResult adp_attend_projected(const torch::Tensor& x, const torch::Tensor& q, const torch::Tensor& k,
                               const torch::Tensor& v, const torch::Tensor& u, const PartitionConfig& config,
                               const AttentionProjectionsImpl& projections, MaskAxis axis = MaskAxis::Keys,
                               uint64_t salt = 0);

/// Projects Q from x and K/V from l through `projections`, then runs adp_attend_projected.
AdpResult adp_attend(const torch::Tensor& x, const torch::Tensor& l, const torch::Tensor& u,
                     const PartitionConfig& config, AttentionProjectionsImpl& projections,
                     MaskAxis axis = MaskAxis::Keys, uint64_t salt = 0);

struct CostRow {
    std::string map_id;
    std::string mode;
    double p_threshold = 0.0;
    uint64_t mac_count = 0;
    int64_t leaf_count = 0;
    int max_depth = 0;
};

/// Partition cost of every (map, config) pair. Maps are [h, w] or [1, 1, h, w] uncertainty values.
std::vector<CostRow> cost_compare(const std::vector<std::pair<std::string, torch::Tensor>>& corpus,
                                  const std::vector<PartitionConfig>& configs, int64_t channels);

/// CSV with header map_id,mode,p_threshold,mac_count,leaf_count,max_depth.
void write_cost_csv(std::ostream& out, const std::vector<CostRow>& rows);

} // namespace usod
