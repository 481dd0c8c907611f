#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "solo/inference.hpp"
#include "solo/types.hpp"

namespace solo {

struct MatchResult {
    std::vector<bool> true_positive;  // per detection, in input order
    std::size_t unmatched_gt = 0;
};

/// Single image, single category. Detections are visited in the given
/// (score-sorted) order; each takes the highest-IoU unmatched GT with
/// IoU >= iou_threshold.
MatchResult match_detections(const std::vector<const BinaryMask*>& detections,
                             const std::vector<const BinaryMask*>& gts, double iou_threshold);

/// 101-point interpolated AP over score-sorted TP flags. 0 when num_gt is 0.
double average_precision(const std::vector<bool>& sorted_flags, std::size_t num_gt);

struct EvalResult {
    double ap = 0;    // mean over IoU 0.50:0.05:0.95
    double ap50 = 0;
    double ap75 = 0;
    double ap25 = 0;  // loose threshold used for contour masks
    /// Area buckets (<32^2, 32^2..96^2, >96^2 px); empty when no GT falls in
    /// the bucket.
    std::optional<double> ap_small, ap_medium, ap_large;
    std::map<int, double> per_category;  // AP per category present in GT
    std::size_t num_images = 0;
    std::size_t num_gt = 0;
    std::size_t num_detections = 0;
};

/// `predictions[n]` and `gts[n]` belong to image n. Only category, score and
/// binary mask of each detection are read.
EvalResult evaluate(const std::vector<std::vector<Detection>>& predictions,
                    const std::vector<std::vector<InstanceAnnotation>>& gts);

/// Mean AP over GT categories at a single IoU threshold.
double evaluate_at_iou(const std::vector<std::vector<Detection>>& predictions,
                       const std::vector<std::vector<InstanceAnnotation>>& gts, double iou_threshold);

/// Replaces each detection's binary mask with the GT mask (any category) it
/// overlaps most; detections touching no GT are left alone. Scores are kept.
std::vector<Detection> error_analysis(std::vector<Detection> detections,
                                      const std::vector<InstanceAnnotation>& gts);

/// Machine-readable report.
std::string to_json(const EvalResult& result, const std::vector<std::string>& category_names = {});
/// One `key: value` line per metric.
std::string to_key_value(const EvalResult& result);

}  // namespace solo
