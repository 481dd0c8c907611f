#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "solo/assignment.hpp"
#include "solo/model.hpp"
#include "solo/tensor.hpp"

namespace solo {

enum class MaskLossKind { dice, focal, bce };

std::string to_string(MaskLossKind k);
MaskLossKind mask_loss_kind_from_string(const std::string& s);

struct LossConfig {
    MaskLossKind mask_loss = MaskLossKind::dice;
    double lambda = 3.0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    double bce_mask_weight = 10.0;
    double bce_pixel_weight = 2.0;
    double focal_mask_weight = 20.0;
    /// Focal parameters for the mask loss when they differ from the
    /// category loss (sparse targets such as contours).
    std::optional<double> mask_focal_alpha;
    std::optional<double> mask_focal_gamma;

    void validate() const;

    /// Weight on L_mask in the total: lambda for dice, the BCE or focal mask
    /// weight otherwise.
    double mask_weight() const;
};

enum class Reduction { mean, sum };

/// 2*sum(p*q) / (sum(p^2) + sum(q^2)); 1 when both masks are empty.
double dice_coefficient(std::span<const double> p, std::span<const std::uint8_t> q);

/// 1 - D(p, q), differentiable in the soft mask p.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& p, std::span<const std::uint8_t> q);

/// Sigmoid focal loss: -alpha_t (1 - p_t)^gamma log(p_t) per element.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const std::uint8_t> targets, double alpha,
                     double gamma, Reduction reduction = Reduction::mean);

/// Weighted mean of per-pixel binary cross-entropy; positives weigh
/// `positive_weight`, negatives 1.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, std::span<const std::uint8_t> targets,
                   double positive_weight);

/// Focal loss over every class/cell of every level (one-vs-all), summed and
/// divided by max(num_positives, 1).
template <typename T>
Tensor<T> category_loss(std::span<const Tensor<T>> logits, std::span<const LevelTargets* const> targets,
                        std::size_t num_positives, const LossConfig& cfg);

/// One positive cell's prediction: a soft mask for dice, logits otherwise.
template <typename T>
struct PositivePrediction {
    Tensor<T> values;
    const BinaryMask* target = nullptr;
};

/// (1 / N_pos) * sum of d_mask over positives; 0 when there are none.
template <typename T>
Tensor<T> mask_loss(std::span<const PositivePrediction<T>> predictions, const LossConfig& cfg);

/// L_cate + weight * L_mask.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& category, const Tensor<T>& mask, double weight);

template <typename T>
struct LossTerms {
    Tensor<T> total;
    Tensor<T> category;
    Tensor<T> mask;
    std::size_t num_positives = 0;
};

/// Full objective over a batch. `outputs[n]` comes from model.forward(image n)
/// (vanilla mask logits may be left out; positives are computed from the
/// trunk). Normalization uses the batch's total positive count.
template <typename T>
LossTerms<T> solo_loss(const SoloModel<T>& model, std::span<const std::vector<LevelOutput<T>>> outputs,
                       std::span<const TrainingTargets> targets, const LossConfig& cfg);

}  // namespace solo
