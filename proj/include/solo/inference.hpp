#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "solo/data.hpp"
#include "solo/model.hpp"
#include "solo/types.hpp"

namespace solo {

struct Detection {
    int category = 0;
    double class_score = 0;
    double maskness = 0;
    double score = 0;  // class_score * maskness
    SoftMask soft;
    BinaryMask mask;
    std::size_t level = 0, i = 0, j = 0, k = 0;
};

struct InferenceConfig {
    double conf_threshold = 0.1;
    std::size_t top_k = 500;
    double mask_threshold = 0.5;
    double nms_iou = 0.5;
    /// Kept after NMS, highest final score first.
    std::size_t max_detections = 100;
    /// When false, masks stay at the mask-branch resolution.
    bool upsample_to_image = true;
};

/// One candidate per (level, i, j, class) whose probability exceeds the
/// threshold; `probs[l]` is [C, S, S]. Masks are attached later.
std::vector<Detection> decode_candidates(std::span<const Tensor<float>> probs, double conf_threshold);

/// Sorted by class score (descending), ties by (level, i, j, category), then
/// truncated to k.
std::vector<Detection> top_k(std::vector<Detection> candidates, std::size_t k);

/// Mean of the values above 0.5; 0 when there are none.
double maskness(const SoftMask& soft);

/// value > threshold.
BinaryMask binarize(const SoftMask& soft, double threshold = 0.5);

/// |a & b| / |a | b|, 0 for an empty union.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Greedy, class-aware: walks `sorted` in order and drops any detection whose
/// IoU with an already kept one of the same category exceeds `iou_threshold`.
std::vector<Detection> nms(const std::vector<Detection>& sorted, double iou_threshold);

/// Fills soft masks for `candidates` from the network outputs: channel
/// i*S + j (vanilla) or sigmoid(x_j) * sigmoid(y_i) (decoupled), resized to
/// out_h x out_w.
void attach_masks(std::vector<Detection>& candidates, const SoloModel<float>& model,
                  const std::vector<LevelOutput<float>>& outputs, std::size_t out_h, std::size_t out_w);

/// Row-major foreground runs as (start index, length) pairs.
std::vector<std::pair<std::size_t, std::size_t>> foreground_runs(const BinaryMask& mask);

/// forward -> decode -> top_k -> maskness rescoring -> binarize -> NMS.
/// Detections with empty binary masks are dropped. The image must already
/// have a side divisible by 32.
std::vector<Detection> run_inference(const SoloModel<float>& model, const Image& image,
                                     const InferenceConfig& config = {});

}  // namespace solo
