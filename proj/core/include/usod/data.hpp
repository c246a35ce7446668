#pragma once

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace usod::data {

struct SampleRecord {
    std::string image_path;
    std::string mask_path;
    std::string split;
    std::vector<std::string> tags;

    /// File stem of the image, used to name outputs.
    std::string stem() const;
};

/// Parses "image<TAB>mask[<TAB>tag,tag...]" lines. Blank lines and lines starting with '#' are
/// skipped; relative paths resolve against the manifest directory. Missing files raise
/// InputError naming the path.
std::vector<SampleRecord> load_manifest(const std::string& path, const std::string& split = "train");

/// Image is RGB CV_32FC3 in [0, 1]; mask is CV_8U holding 0 or 1.
struct Sample {
    std::string name;
    cv::Mat image;
    cv::Mat mask;
};

/// Reads one record and resizes it to resolution x resolution (bilinear image, nearest mask).
/// A mask whose size differs from its image raises InputError naming both files.
Sample read_sample(const SampleRecord& record, int resolution);

struct AugmentConfig {
    bool enabled = true;
    double max_rotation_deg = 15.0;
    bool crop = true;
    double crop_scale_min = 0.75; ///< random resized crop keeps [min, 1] of the area
    double contrast = 0.2;        ///< factors drawn from [1 - x, 1 + x]
    double sharpness = 0.2;
    double brightness = 0.2;
};

/// Same geometric transform for image and mask (mask resampled nearest-neighbor), photometric
/// jitter on the image only. Deterministic given the seed.
Sample augment(const Sample& sample, uint64_t seed, const AugmentConfig& config = {});

/// Rotates by a multiple of 90 degrees counter-clockwise; an exact permutation.
cv::Mat rotate_quarter(const cv::Mat& m, int quarter_turns);

/// Warps image bilinearly and mask nearest-neighbor with the same 2x3 affine matrix.
Sample warp_pair(const Sample& sample, const cv::Mat& affine);

inline constexpr float kImageMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kImageStd[3] = {0.229f, 0.224f, 0.225f};

struct Batch {
    torch::Tensor images; ///< [b, 3, H, W], normalized
    torch::Tensor masks;  ///< [b, 1, H, W], 0/1 float
    std::vector<std::string> names;
};

/// Stacks samples, applying the mean/std normalization last.
Batch make_batch(const std::vector<Sample>& samples);
torch::Tensor image_to_tensor(const cv::Mat& image);
torch::Tensor mask_to_tensor(const cv::Mat& mask);
/// [H, W] or [1, 1, H, W] map in [0, 1] to an 8-bit image (value * scale * 255, clamped).
cv::Mat tensor_to_u8(const torch::Tensor& map, double scale = 1.0);

enum class ShapeType { Disk, Rectangle, Blob };

struct SynthSpec {
    int size = 64;
    int min_shapes = 1;
    int max_shapes = 3;
    std::vector<ShapeType> types{ShapeType::Disk, ShapeType::Rectangle, ShapeType::Blob};
    double texture_amplitude = 0.15;
    int texture_cell = 8;          ///< side of the value-noise lattice cells
    double min_occupancy = 0.05;   ///< rejected-and-redrawn outside [min, max]
    double max_occupancy = 0.6;
    uint64_t seed = 0;

    void validate() const;
};

/// n image/mask pairs; record i is drawn from seed + i, so any subset regenerates identically.
std::vector<Sample> synth_generate(const SynthSpec& spec, int n);
Sample synth_one(const SynthSpec& spec, uint64_t seed, const std::string& name);

/// Draws a filled disk into a mask (1 inside, centers and radius in pixels).
void draw_disk(cv::Mat& mask, double cy, double cx, double radius);

/// Uncertainty maps with clustered uncertain pixels covering a fraction in [lo, hi] of each map.
/// Values above the uncertainty cutoff lie in [0.05, 0.5]; the rest are 0. [H, W] float tensors.
std::vector<torch::Tensor> uncertainty_corpus(int n, int size, double lo, double hi, uint64_t seed);

/// Writes samples as <dir>/images/<name>.png and <dir>/masks/<name>.png plus <dir>/manifest.tsv.
void write_dataset(const std::string& dir, const std::vector<Sample>& samples);

} // namespace usod::data
