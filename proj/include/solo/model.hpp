#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "solo/assignment.hpp"
#include "solo/tensor.hpp"

namespace solo {

enum class HeadVariant { vanilla, decoupled };

std::string to_string(HeadVariant v);
HeadVariant head_variant_from_string(const std::string& s);

struct ModelConfig {
    std::size_t num_classes = 3;
    std::size_t head_depth = 7;
    std::size_t head_channels = 64;
    HeadVariant variant = HeadVariant::vanilla;
    std::size_t coordconv_layers = 1;
    PyramidConfig pyramid = PyramidConfig::five_level();
    std::size_t mask_output_stride = 4;
    /// Stem (stride 2) followed by four stride-2 stages C2..C5.
    std::vector<std::size_t> backbone_channels{16, 24, 32, 48, 64};
    std::size_t fpn_channels = 64;

    /// Throws ConfigError when the fields are inconsistent.
    void validate() const;

    /// Mask-branch output channels for a level: S^2 or 2S.
    std::size_t mask_channels(std::size_t level) const;
};

/// Parameter path -> tensor. Ordered, so iteration is deterministic.
template <typename T>
using ModelWeights = std::map<std::string, Tensor<T>>;

/// Kernels ~ N(0, sqrt(2 / fan_in)); biases zero except the category
/// outputs, which start at -ln((1 - prior) / prior).
template <typename T>
ModelWeights<T> init_weights(const ModelConfig& config, std::uint64_t seed, double prior = 0.01);

/// Expected parameter shapes for a config, keyed like ModelWeights.
std::map<std::string, Shape> parameter_shapes(const ModelConfig& config);

std::size_t mask_branch_parameter_count(const ModelConfig& config);
/// Mask-branch output values per image for one level at mask resolution.
std::size_t mask_branch_activation_count(const ModelConfig& config, std::size_t level,
                                         std::size_t img_h, std::size_t img_w);

/// One feature map per pyramid level (levels may share a stride).
template <typename T>
struct PyramidFeatures {
    std::vector<Tensor<T>> levels;
};

template <typename T>
struct DecoupledMasks {
    Tensor<T> x;  // [S, Hm, Wm], column logits
    Tensor<T> y;  // [S, Hm, Wm], row logits
};

template <typename T>
struct LevelOutput {
    Tensor<T> category_logits;  // [C, S, S]
    Tensor<T> mask_features;    // shared trunk at mask resolution
    Tensor<T> mask_logits;      // vanilla: [S^2, Hm, Wm] when requested
    DecoupledMasks<T> decoupled;
};

/// The network: backbone + FPN, then per level a category branch and a mask
/// branch whose convolutions are shared across levels except the last one.
template <typename T>
class SoloModel {
public:
    SoloModel(ModelConfig config, ModelWeights<T> weights);

    const ModelConfig& config() const { return config_; }
    ModelWeights<T>& weights() { return weights_; }
    const ModelWeights<T>& weights() const { return weights_; }

    /// `image` is [3, H, W] with H and W divisible by 32.
    PyramidFeatures<T> backbone_forward(const Tensor<T>& image) const;

    /// [C, S, S] logits: bilinear alignment to S x S, head convolutions, and
    /// the level's own output convolution.
    Tensor<T> category_branch(const Tensor<T>& feature, std::size_t level) const;

    /// Shared mask trunk, upsampled to mask resolution (img / mask stride).
    Tensor<T> mask_trunk(const Tensor<T>& feature, std::size_t mask_h, std::size_t mask_w) const;

    /// [S^2, Hm, Wm] logits; channel k = i*S + j belongs to cell (i, j).
    Tensor<T> mask_branch_vanilla(const Tensor<T>& trunk, std::size_t level) const;

    /// Only the listed vanilla channels, computed from the trunk.
    Tensor<T> vanilla_channels(const Tensor<T>& trunk, std::size_t level,
                               std::span<const std::size_t> channels) const;

    DecoupledMasks<T> mask_branch_decoupled(const Tensor<T>& trunk, std::size_t level) const;

    /// Runs every level. When `full_vanilla_masks` is false, vanilla mask
    /// logits are left empty and only the trunk is returned.
    std::vector<LevelOutput<T>> forward(const Tensor<T>& image, bool full_vanilla_masks = true) const;

private:
    const Tensor<T>& param(const std::string& name) const;
    Tensor<T> conv(const Tensor<T>& x, const std::string& prefix, std::size_t stride,
                   std::size_t padding) const;

    ModelConfig config_;
    ModelWeights<T> weights_;
};

/// sigmoid(x_j) * sigmoid(y_i) for cell (i, j).
template <typename T>
Tensor<T> reconstruct_mask(const Tensor<T>& x, const Tensor<T>& y, std::size_t i, std::size_t j);

/// Converts a weight map between precisions.
template <typename To, typename From>
ModelWeights<To> convert_weights(const ModelWeights<From>& weights, bool requires_grad = true)
{
    ModelWeights<To> out;
    for (const auto& [name, t] : weights) {
        out.emplace(name, Tensor<To>(t.shape(), std::vector<To>(t.data().begin(), t.data().end()),
                                     requires_grad));
    }
    return out;
}

}  // namespace solo
