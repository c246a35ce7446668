#include "usod/metrics.hpp"

#include "usod/errors.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <ostream>

namespace usod::metrics {

namespace {

constexpr double kEps = DBL_EPSILON;

void check_pair(const cv::Mat1d& p, const cv::Mat1d& g, const char* what) {
    if (p.empty() || p.size() != g.size())
        throw InputError(std::string(what) + ": prediction and ground truth must be non-empty and share a size");
    double lo = 0.0, hi = 0.0;
    cv::minMaxLoc(p, &lo, &hi);
    if (!(lo >= 0.0 && hi <= 1.0))
        throw InputError(std::string(what) + ": prediction values must lie in [0,1]");
}

cv::Mat1b gt_mask(const cv::Mat1d& g) {
    cv::Mat1b m(g.size());
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            m(r, c) = g(r, c) > 0.5 ? 1 : 0;
    return m;
}

double mean_of(const cv::Mat1d& m) { return cv::mean(m)[0]; }

// Structural similarity of one quadrant, sample variances.
double region_ssim(const cv::Mat1d& p, const cv::Mat1d& g) {
    const double n = static_cast<double>(p.total());
    if (n == 0) return 0.0;
    const double x = mean_of(p), y = mean_of(g);
    double sx = 0, sy = 0, sxy = 0;
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c) {
            const double dx = p(r, c) - x, dy = g(r, c) - y;
            sx += dx * dx;
            sy += dy * dy;
            sxy += dx * dy;
        }
    sx /= (n - 1 + kEps);
    sy /= (n - 1 + kEps);
    sxy /= (n - 1 + kEps);
    const double alpha = 4 * x * y * sxy;
    const double beta = (x * x + y * y) * (sx + sy);
    if (alpha != 0) return alpha / (beta + kEps);
    if (beta == 0) return 1.0;
    return 0.0;
}

double object_score(const cv::Mat1d& p, const cv::Mat1b& region) {
    double sum = 0;
    int n = 0;
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c)
            if (region(r, c)) {
                sum += p(r, c);
                ++n;
            }
    if (n == 0) return 0.0;
    const double x = sum / n;
    double var = 0;
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c)
            if (region(r, c)) var += (p(r, c) - x) * (p(r, c) - x);
    const double sigma = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const cv::Mat1d& p, const cv::Mat1b& gt) {
    cv::Mat1d fg = p.clone();
    cv::Mat1d bg(p.size());
    cv::Mat1b inv(gt.size());
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c) {
            if (!gt(r, c)) fg(r, c) = 0.0;
            bg(r, c) = gt(r, c) ? 0.0 : 1.0 - p(r, c);
            inv(r, c) = gt(r, c) ? 0 : 1;
        }
    const double o_fg = object_score(fg, gt);
    const double o_bg = object_score(bg, inv);
    const double u = cv::countNonZero(gt) / static_cast<double>(gt.total());
    return u * o_fg + (1 - u) * o_bg;
}

double s_region(const cv::Mat1d& p, const cv::Mat1b& gt) {
    const int rows = gt.rows, cols = gt.cols;
    double total = 0, sx = 0, sy = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (gt(r, c)) {
                total += 1;
                sx += c + 1;
                sy += r + 1;
            }
    const int X = static_cast<int>(std::round(sx / total));
    const int Y = static_cast<int>(std::round(sy / total));
    const double area = static_cast<double>(rows) * cols;
    cv::Mat1d g;
    gt.convertTo(g, CV_64F);
    const cv::Rect rects[4] = {cv::Rect(0, 0, X, Y), cv::Rect(X, 0, cols - X, Y), cv::Rect(0, Y, X, rows - Y),
                               cv::Rect(X, Y, cols - X, rows - Y)};
    double q = 0;
    for (const auto& rc : rects) {
        const double w = static_cast<double>(rc.area()) / area;
        if (rc.area() == 0) continue;
        q += w * region_ssim(p(rc), g(rc));
    }
    return q;
}

cv::Mat1d gaussian_7x7_sigma5() {
    cv::Mat1d k(7, 7);
    double s = 0;
    for (int r = -3; r <= 3; ++r)
        for (int c = -3; c <= 3; ++c) {
            k(r + 3, c + 3) = std::exp(-(r * r + c * c) / (2.0 * 25.0));
            s += k(r + 3, c + 3);
        }
    return k / s;
}

} // namespace

cv::Mat1d binarize_gt(const cv::Mat1d& g) {
    cv::Mat1d out(g.size());
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            out(r, c) = g(r, c) > 0.5 ? 1.0 : 0.0;
    return out;
}

double mae(const cv::Mat1d& p, const cv::Mat1d& g) {
    check_pair(p, g, "mae");
    cv::Mat1d diff;
    cv::absdiff(p, g, diff);
    return mean_of(diff);
}

double enhanced_alignment(const cv::Mat1b& prediction, const cv::Mat1b& gt) {
    if (prediction.empty() || prediction.size() != gt.size())
        throw InputError("enhanced_alignment: shape mismatch");
    const double n = static_cast<double>(gt.total());
    const int fg = cv::countNonZero(gt);
    const int pred_fg = cv::countNonZero(prediction);
    if (fg == 0) return 1.0 - pred_fg / n;
    if (fg == static_cast<int>(gt.total())) return pred_fg / n;
    const double mp = pred_fg / n, mg = fg / n;
    double sum = 0;
    for (int r = 0; r < gt.rows; ++r)
        for (int c = 0; c < gt.cols; ++c) {
            const double a = (prediction(r, c) ? 1.0 : 0.0) - mp;
            const double b = (gt(r, c) ? 1.0 : 0.0) - mg;
            const double align = 2 * a * b / (a * a + b * b + kEps);
            sum += (align + 1) * (align + 1) / 4.0;
        }
    return sum / n;
}

EMeasure e_measure(const cv::Mat1d& p, const cv::Mat1d& g) {
    check_pair(p, g, "e_measure");
    const auto gt = gt_mask(g);
    EMeasure e;
    e.curve.reserve(kThresholdCount);
    cv::Mat1b bin(p.size());
    for (int k = 0; k < kThresholdCount; ++k) {
        const double t = curve_threshold(k);
        for (int r = 0; r < p.rows; ++r)
            for (int c = 0; c < p.cols; ++c)
                bin(r, c) = p(r, c) > t ? 1 : 0;
        e.curve.push_back(enhanced_alignment(bin, gt));
    }
    double s = 0;
    for (double v : e.curve) s += v;
    e.mean = s / kThresholdCount;
    e.max = *std::max_element(e.curve.begin(), e.curve.end());
    const double thr = std::min(2.0 * mean_of(p), 1.0);
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c)
            bin(r, c) = p(r, c) >= thr ? 1 : 0;
    e.adaptive = enhanced_alignment(bin, gt);
    return e;
}

double s_measure(const cv::Mat1d& p, const cv::Mat1d& g, double alpha) {
    check_pair(p, g, "s_measure");
    const auto gt = gt_mask(g);
    const int fg = cv::countNonZero(gt);
    if (fg == 0) return 1.0 - mean_of(p);
    if (fg == static_cast<int>(gt.total())) return mean_of(p);
    const double q = alpha * s_object(p, gt) + (1 - alpha) * s_region(p, gt);
    return std::max(q, 0.0);
}

NearestForeground nearest_foreground(const cv::Mat1b& gt) {
    const int rows = gt.rows, cols = gt.cols;
    constexpr double inf = std::numeric_limits<double>::infinity();
    // column pass: nearest foreground row per column, upper row wins ties
    cv::Mat1d dy(rows, cols, inf);
    cv::Mat1i ry(rows, cols, -1);
    for (int c = 0; c < cols; ++c) {
        int last = -1;
        for (int r = 0; r < rows; ++r) {
            if (gt(r, c)) last = r;
            if (last >= 0) {
                dy(r, c) = r - last;
                ry(r, c) = last;
            }
        }
        int next = -1;
        for (int r = rows - 1; r >= 0; --r) {
            if (gt(r, c)) next = r;
            if (next >= 0 && next - r < dy(r, c)) {
                dy(r, c) = next - r;
                ry(r, c) = next;
            }
        }
    }
    NearestForeground out{cv::Mat1d(rows, cols, inf), cv::Mat1i(rows, cols, -1)};
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double best = inf;
            int br = -1, bc = -1;
            for (int x = 0; x < cols; ++x) {
                if (ry(r, x) < 0) continue;
                const double d = (c - x) * static_cast<double>(c - x) + dy(r, x) * dy(r, x);
                if (d < best || (d == best && (ry(r, x) < br || (ry(r, x) == br && x < bc)))) {
                    best = d;
                    br = ry(r, x);
                    bc = x;
                }
            }
            if (br >= 0) {
                out.distance(r, c) = std::sqrt(best);
                out.index(r, c) = br * cols + bc;
            }
        }
    return out;
}

double weighted_f(const cv::Mat1d& p, const cv::Mat1d& g, double beta2) {
    check_pair(p, g, "weighted_f");
    const auto gt = gt_mask(g);
    if (cv::countNonZero(gt) == 0) {
        std::cerr << "warning: weighted_f with empty ground truth scores 0\n";
        return 0.0;
    }
    const int rows = p.rows, cols = p.cols;
    cv::Mat1d gd;
    gt.convertTo(gd, CV_64F);
    cv::Mat1d e;
    cv::absdiff(p, gd, e);
    const auto nf = nearest_foreground(gt);
    cv::Mat1d et = e.clone();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (!gt(r, c)) {
                const int idx = nf.index(r, c);
                et(r, c) = e(idx / cols, idx % cols);
            }
    cv::Mat1d ea;
    cv::filter2D(et, ea, CV_64F, gaussian_7x7_sigma5(), cv::Point(-1, -1), 0.0, cv::BORDER_CONSTANT);
    double sum_fg = 0, sum_bg = 0;
    const int n_fg = cv::countNonZero(gt);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double m = e(r, c);
            if (gt(r, c) && ea(r, c) < m) m = ea(r, c);
            const double b = gt(r, c) ? 1.0 : 2.0 - std::exp(std::log(0.5) / 5.0 * nf.distance(r, c));
            const double w = m * b;
            if (gt(r, c))
                sum_fg += w;
            else
                sum_bg += w;
        }
    const double tp = n_fg - sum_fg;
    const double fp = sum_bg;
    const double recall = 1.0 - sum_fg / n_fg;
    const double precision = tp / (kEps + tp + fp);
    return (1 + beta2) * recall * precision / (kEps + recall + beta2 * precision);
}

std::vector<CurvePoint> image_curve(const cv::Mat1d& p, const cv::Mat1d& g, double beta2) {
    check_pair(p, g, "image_curve");
    const auto gt = gt_mask(g);
    const int n_fg = cv::countNonZero(gt);
    std::vector<CurvePoint> curve(kThresholdCount);
    for (int k = 0; k < kThresholdCount; ++k) {
        const double t = curve_threshold(k);
        int tp = 0, pos = 0;
        for (int r = 0; r < p.rows; ++r)
            for (int c = 0; c < p.cols; ++c)
                if (p(r, c) > t) {
                    ++pos;
                    if (gt(r, c)) ++tp;
                }
        auto& pt = curve[k];
        pt.threshold = t;
        pt.precision = pos > 0 ? static_cast<double>(tp) / pos : 0.0;
        pt.recall = n_fg > 0 ? static_cast<double>(tp) / n_fg : 0.0;
        const double den = beta2 * pt.precision + pt.recall;
        pt.f_measure = den > 0 ? (1 + beta2) * pt.precision * pt.recall / den : 0.0;
    }
    return curve;
}

std::vector<CurvePoint> dataset_curve(const std::vector<cv::Mat1d>& p_set, const std::vector<cv::Mat1d>& g_set,
                                      double beta2) {
    if (p_set.size() != g_set.size() || p_set.empty())
        throw InputError("dataset_curve: need equally many (>0) predictions and ground truths");
    std::vector<CurvePoint> acc(kThresholdCount);
    for (std::size_t i = 0; i < p_set.size(); ++i) {
        const auto c = image_curve(p_set[i], g_set[i], beta2);
        for (int k = 0; k < kThresholdCount; ++k) {
            acc[k].precision += c[k].precision;
            acc[k].recall += c[k].recall;
        }
    }
    const double n = static_cast<double>(p_set.size());
    for (int k = 0; k < kThresholdCount; ++k) {
        auto& pt = acc[k];
        pt.threshold = curve_threshold(k);
        pt.precision /= n;
        pt.recall /= n;
        const double den = beta2 * pt.precision + pt.recall;
        pt.f_measure = den > 0 ? (1 + beta2) * pt.precision * pt.recall / den : 0.0;
    }
    return acc;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
    out << "threshold,precision,recall,f_measure\n" << std::setprecision(10);
    for (const auto& pt : curve)
        out << pt.threshold << ',' << pt.precision << ',' << pt.recall << ',' << pt.f_measure << '\n';
}

ImageMetrics evaluate_pair(const std::string& name, const cv::Mat1d& p, const cv::Mat1d& g) {
    ImageMetrics m;
    m.name = name;
    m.mae = mae(p, g);
    const auto e = e_measure(p, g);
    m.e_mean = e.mean;
    m.e_max = e.max;
    m.e_adaptive = e.adaptive;
    m.s_measure = s_measure(p, g);
    m.weighted_f = weighted_f(p, g);
    return m;
}

MetricReport MetricReport::from_images(std::vector<ImageMetrics> images) {
    MetricReport report;
    report.images = std::move(images);
    auto& a = report.aggregate;
    a.name = "aggregate";
    if (report.images.empty()) return report;
    for (const auto& m : report.images) {
        a.mae += m.mae;
        a.e_mean += m.e_mean;
        a.e_max += m.e_max;
        a.e_adaptive += m.e_adaptive;
        a.s_measure += m.s_measure;
        a.weighted_f += m.weighted_f;
    }
    const double n = static_cast<double>(report.images.size());
    a.mae /= n;
    a.e_mean /= n;
    a.e_max /= n;
    a.e_adaptive /= n;
    a.s_measure /= n;
    a.weighted_f /= n;
    return report;
}

namespace {

nlohmann::json metrics_json(const ImageMetrics& m) {
    return {{"name", m.name},           {"mae", m.mae},
            {"e_mean", m.e_mean},       {"e_max", m.e_max},
            {"e_adaptive", m.e_adaptive}, {"s_measure", m.s_measure},
            {"weighted_f", m.weighted_f}};
}

ImageMetrics metrics_from_json(const nlohmann::json& j) {
    ImageMetrics m;
    m.name = j.at("name").get<std::string>();
    m.mae = j.at("mae").get<double>();
    m.e_mean = j.at("e_mean").get<double>();
    m.e_max = j.at("e_max").get<double>();
    m.e_adaptive = j.at("e_adaptive").get<double>();
    m.s_measure = j.at("s_measure").get<double>();
    m.weighted_f = j.at("weighted_f").get<double>();
    return m;
}

} // namespace

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["aggregate"] = metrics_json(aggregate);
    j["count"] = images.size();
    j["images"] = nlohmann::json::array();
    for (const auto& m : images) j["images"].push_back(metrics_json(m));
    return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
    std::vector<ImageMetrics> images;
    for (const auto& item : j.at("images")) images.push_back(metrics_from_json(item));
    return from_images(std::move(images));
}

void MetricReport::write_csv(std::ostream& out) const {
    out << "name,mae,e_mean,e_max,e_adaptive,s_measure,weighted_f\n" << std::setprecision(10);
    auto row = [&](const ImageMetrics& m) {
        out << m.name << ',' << m.mae << ',' << m.e_mean << ',' << m.e_max << ',' << m.e_adaptive << ','
            << m.s_measure << ',' << m.weighted_f << '\n';
    };
    for (const auto& m : images) row(m);
    row(aggregate);
}

} // namespace usod::metrics
