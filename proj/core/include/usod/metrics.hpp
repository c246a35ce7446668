#pragma once

#include <opencv2/core.hpp>

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace usod::metrics {

/// Number of evenly spaced binarization thresholds used by curves and E_xi.
inline constexpr int kThresholdCount = 256;
inline constexpr double kStructureAlpha = 0.5;
inline constexpr double kWeightedFBeta2 = 1.0;
inline constexpr double kCurveBeta2 = 0.3;

/// Threshold k of the curve: P > k / 256.
inline double curve_threshold(int k) { return static_cast<double>(k) / kThresholdCount; }

/// Ground truth as a 0/1 double map (values above 0.5 are foreground).
cv::Mat1d binarize_gt(const cv::Mat1d& g);

/// (1 / HW) sum |P - G|.
double mae(const cv::Mat1d& p, const cv::Mat1d& g);

/// Enhanced alignment of a binary prediction against a binary ground truth, averaged over HW.
double enhanced_alignment(const cv::Mat1b& prediction, const cv::Mat1b& gt);

struct EMeasure {
    double mean = 0.0;     ///< mean over the 256-threshold curve (headline E_xi^m)
    double max = 0.0;
    double adaptive = 0.0; ///< at threshold min(2 * mean(P), 1)
    std::vector<double> curve;
};

EMeasure e_measure(const cv::Mat1d& p, const cv::Mat1d& g);

/// alpha * S_object + (1 - alpha) * S_region. Degenerate ground truths fall back to the
/// mean-based score of the original release: 1 - mean(P) for empty G, mean(P) for full G.
double s_measure(const cv::Mat1d& p, const cv::Mat1d& g, double alpha = kStructureAlpha);

/// Weighted F-measure. Background errors borrow the error of their nearest foreground pixel
/// (ties broken by smallest row, then column), are smoothed by a 7x7 sigma=5 Gaussian and
/// weighted by distance. Empty ground truth scores 0.
double weighted_f(const cv::Mat1d& p, const cv::Mat1d& g, double beta2 = kWeightedFBeta2);

/// Exact Euclidean distance to the nearest foreground pixel plus that pixel's row-major index.
struct NearestForeground {
    cv::Mat1d distance;
    cv::Mat1i index;
};
NearestForeground nearest_foreground(const cv::Mat1b& gt);

struct CurvePoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

/// Per-threshold precision / recall of one image (P > threshold).
std::vector<CurvePoint> image_curve(const cv::Mat1d& p, const cv::Mat1d& g, double beta2 = kCurveBeta2);
/// Dataset curve: per-image precision and recall averaged, F recomputed from the averages.
std::vector<CurvePoint> dataset_curve(const std::vector<cv::Mat1d>& p_set, const std::vector<cv::Mat1d>& g_set,
                                      double beta2 = kCurveBeta2);
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

struct ImageMetrics {
    std::string name;
    double mae = 0.0;
    double e_mean = 0.0;
    double e_max = 0.0;
    double e_adaptive = 0.0;
    double s_measure = 0.0;
    double weighted_f = 0.0;
};

ImageMetrics evaluate_pair(const std::string& name, const cv::Mat1d& p, const cv::Mat1d& g);

struct MetricReport {
    std::vector<ImageMetrics> images;
    ImageMetrics aggregate; ///< arithmetic mean over `images`, name "aggregate"

    static MetricReport from_images(std::vector<ImageMetrics> images);
    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
    void write_csv(std::ostream& out) const;
};

} // namespace usod::metrics
