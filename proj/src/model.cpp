#include "solo/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "solo/ops.hpp"

namespace solo {

namespace {

constexpr std::size_t kStageStrides[] = {4, 8, 16, 32};  // C2..C5

std::size_t min_level_stride(const ModelConfig& c)
{
    std::size_t s = 32;
    for (const auto& level : c.pyramid.levels) s = std::min(s, level.stride);
    return s;
}

std::set<std::size_t> output_strides(const ModelConfig& c)
{
    std::set<std::size_t> out;
    for (const auto& level : c.pyramid.levels) out.insert(level.stride);
    return out;
}

std::size_t stage_index(std::size_t stride)
{
    for (std::size_t n = 0; n < 4; ++n) {
        if (kStageStrides[n] == stride) return n;
    }
    throw ConfigError("no backbone stage with stride " + std::to_string(stride));
}

void add_conv(std::map<std::string, Shape>& shapes, const std::string& prefix, std::size_t out,
              std::size_t in, std::size_t k)
{
    shapes[prefix + ".kernel"] = {out, in, k, k};
    shapes[prefix + ".bias"] = {out};
}

std::string mask_conv_name(std::size_t d) { return "head.mask.conv" + std::to_string(d); }
std::string cate_conv_name(std::size_t d) { return "head.cate.conv" + std::to_string(d); }

}  // namespace

std::string to_string(HeadVariant v) { return v == HeadVariant::vanilla ? "vanilla" : "decoupled"; }

HeadVariant head_variant_from_string(const std::string& s)
{
    if (s == "vanilla") return HeadVariant::vanilla;
    if (s == "decoupled") return HeadVariant::decoupled;
    throw ConfigError("unknown head variant '" + s + "' (expected vanilla or decoupled)");
}

void ModelConfig::validate() const
{
    if (num_classes == 0) throw ConfigError("num_classes must be positive");
    if (head_depth < 1) throw ConfigError("head_depth must be at least 1");
    if (coordconv_layers > head_depth) {
        throw ConfigError("coordconv_layers (" + std::to_string(coordconv_layers) +
                          ") exceeds head_depth (" + std::to_string(head_depth) + ")");
    }
    if (head_channels == 0 || fpn_channels == 0) throw ConfigError("channel counts must be positive");
    if (mask_output_stride == 0) throw ConfigError("mask_output_stride must be positive");
    if (backbone_channels.size() != 5) {
        throw ConfigError("backbone_channels needs 5 entries (stem, C2..C5)");
    }
    for (auto c : backbone_channels) {
        if (c == 0) throw ConfigError("backbone channel counts must be positive");
    }
    pyramid.validate();
}

std::size_t ModelConfig::mask_channels(std::size_t level) const
{
    const std::size_t s = pyramid.levels.at(level).grid;
    return variant == HeadVariant::vanilla ? s * s : 2 * s;
}

std::map<std::string, Shape> parameter_shapes(const ModelConfig& c)
{
    c.validate();
    std::map<std::string, Shape> shapes;
    const auto& bc = c.backbone_channels;
    add_conv(shapes, "backbone.stem", bc[0], 3, 3);
    for (std::size_t n = 0; n < 4; ++n) {
        const std::string stage = "backbone.stage" + std::to_string(n + 2);
        add_conv(shapes, stage + ".conv1", bc[n + 1], bc[n], 3);
        add_conv(shapes, stage + ".conv2", bc[n + 1], bc[n + 1], 3);
    }
    for (std::size_t n = stage_index(min_level_stride(c)); n < 4; ++n) {
        add_conv(shapes, "fpn.lateral" + std::to_string(kStageStrides[n]), c.fpn_channels, bc[n + 1], 1);
    }
    for (auto s : output_strides(c)) {
        add_conv(shapes, "fpn.output" + std::to_string(s), c.fpn_channels, c.fpn_channels, 3);
    }
    for (std::size_t d = 0; d < c.head_depth; ++d) {
        const std::size_t in = d == 0 ? c.fpn_channels : c.head_channels;
        add_conv(shapes, cate_conv_name(d), c.head_channels, in, 3);
        add_conv(shapes, mask_conv_name(d), c.head_channels, in + (d < c.coordconv_layers ? 2 : 0), 3);
    }
    for (std::size_t l = 0; l < c.pyramid.levels.size(); ++l) {
        const std::string suffix = std::to_string(l);
        const std::size_t s = c.pyramid.levels[l].grid;
        add_conv(shapes, "head.cate.out" + suffix, c.num_classes, c.head_channels, 3);
        if (c.variant == HeadVariant::vanilla) {
            add_conv(shapes, "head.mask.out" + suffix, s * s, c.head_channels, 1);
        } else {
            add_conv(shapes, "head.mask.out_x" + suffix, s, c.head_channels, 1);
            add_conv(shapes, "head.mask.out_y" + suffix, s, c.head_channels, 1);
        }
    }
    return shapes;
}

std::size_t mask_branch_parameter_count(const ModelConfig& c)
{
    std::size_t n = 0;
    for (const auto& [name, shape] : parameter_shapes(c)) {
        if (name.rfind("head.mask.", 0) == 0) n += numel(shape);
    }
    return n;
}

std::size_t mask_branch_activation_count(const ModelConfig& c, std::size_t level, std::size_t img_h,
                                         std::size_t img_w)
{
    return c.mask_channels(level) * (img_h / c.mask_output_stride) * (img_w / c.mask_output_stride);
}

template <typename T>
ModelWeights<T> init_weights(const ModelConfig& config, std::uint64_t seed, double prior)
{
    std::mt19937_64 rng(seed);
    const double prior_bias = -std::log((1.0 - prior) / prior);
    ModelWeights<T> weights;
    for (const auto& [name, shape] : parameter_shapes(config)) {
        std::vector<T> values(numel(shape), T(0));
        if (shape.size() == 4) {
            const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            for (auto& v : values) v = static_cast<T>(dist(rng));
        } else if (name.rfind("head.cate.out", 0) == 0) {
            std::fill(values.begin(), values.end(), static_cast<T>(prior_bias));
        }
        weights.emplace(name, Tensor<T>(shape, std::move(values), true));
    }
    return weights;
}

template <typename T>
SoloModel<T>::SoloModel(ModelConfig config, ModelWeights<T> weights)
    : config_(std::move(config)), weights_(std::move(weights))
{
    for (const auto& [name, shape] : parameter_shapes(config_)) {
        auto it = weights_.find(name);
        if (it == weights_.end()) throw ConfigError("missing parameter " + name);
        if (it->second.shape() != shape) {
            throw ConfigError("parameter " + name + " has shape " + shape_string(it->second.shape()) +
                              ", config expects " + shape_string(shape));
        }
    }
}

template <typename T>
const Tensor<T>& SoloModel<T>::param(const std::string& name) const
{
    auto it = weights_.find(name);
    if (it == weights_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
}

template <typename T>
Tensor<T> SoloModel<T>::conv(const Tensor<T>& x, const std::string& prefix, std::size_t stride,
                             std::size_t padding) const
{
    return ops::conv2d(x, param(prefix + ".kernel"), param(prefix + ".bias"), stride, padding);
}

template <typename T>
PyramidFeatures<T> SoloModel<T>::backbone_forward(const Tensor<T>& image) const
{
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("backbone_forward: expected a [3,H,W] image, got " +
                                    shape_string(image.shape()));
    }
    if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0) {
        throw std::invalid_argument("backbone_forward: image " + std::to_string(image.dim(1)) + "x" +
                                    std::to_string(image.dim(2)) + " is not divisible by stride 32");
    }
    std::vector<Tensor<T>> stages;
    auto x = ops::relu(conv(image, "backbone.stem", 2, 1));
    for (std::size_t n = 0; n < 4; ++n) {
        const std::string stage = "backbone.stage" + std::to_string(n + 2);
        x = ops::relu(conv(x, stage + ".conv1", 2, 1));
        x = ops::relu(conv(x, stage + ".conv2", 1, 1));
        stages.push_back(x);
    }

    std::map<std::size_t, Tensor<T>> merged;
    const std::size_t lowest = stage_index(min_level_stride(config_));
    Tensor<T> top;
    for (std::size_t n = 4; n-- > lowest;) {
        const std::size_t stride = kStageStrides[n];
        auto lateral = conv(stages[n], "fpn.lateral" + std::to_string(stride), 1, 0);
        if (n == 3) {
            top = lateral;
        } else {
            top = ops::add(lateral, ops::bilinear_resize(top, lateral.dim(1), lateral.dim(2)));
        }
        merged[stride] = top;
    }
    std::map<std::size_t, Tensor<T>> outputs;
    for (auto s : output_strides(config_)) {
        outputs[s] = conv(merged.at(s), "fpn.output" + std::to_string(s), 1, 1);
    }
    PyramidFeatures<T> features;
    for (const auto& level : config_.pyramid.levels) features.levels.push_back(outputs.at(level.stride));
    return features;
}

template <typename T>
Tensor<T> SoloModel<T>::category_branch(const Tensor<T>& feature, std::size_t level) const
{
    const std::size_t s = config_.pyramid.levels.at(level).grid;
    auto x = ops::bilinear_resize(feature, s, s);
    for (std::size_t d = 0; d < config_.head_depth; ++d) {
        x = ops::relu(conv(x, cate_conv_name(d), 1, 1));
    }
    return conv(x, "head.cate.out" + std::to_string(level), 1, 1);
}

template <typename T>
Tensor<T> SoloModel<T>::mask_trunk(const Tensor<T>& feature, std::size_t mask_h,
                                   std::size_t mask_w) const
{
    auto x = feature;
    Tensor<T> coords;
    if (config_.coordconv_layers > 0) {
        coords = ops::coordinate_channels<T>(feature.dim(1), feature.dim(2));
    }
    for (std::size_t d = 0; d < config_.head_depth; ++d) {
        if (d < config_.coordconv_layers) x = ops::concat_channels(x, coords);
        x = ops::relu(conv(x, mask_conv_name(d), 1, 1));
    }
    return ops::bilinear_resize(x, mask_h, mask_w);
}

template <typename T>
Tensor<T> SoloModel<T>::mask_branch_vanilla(const Tensor<T>& trunk, std::size_t level) const
{
    if (config_.variant != HeadVariant::vanilla) {
        throw std::logic_error("mask_branch_vanilla on a decoupled model");
    }
    return conv(trunk, "head.mask.out" + std::to_string(level), 1, 0);
}

template <typename T>
Tensor<T> SoloModel<T>::vanilla_channels(const Tensor<T>& trunk, std::size_t level,
                                         std::span<const std::size_t> channels) const
{
    const std::string prefix = "head.mask.out" + std::to_string(level);
    return ops::conv2d(trunk, ops::gather_rows(param(prefix + ".kernel"), channels),
                       ops::gather_rows(param(prefix + ".bias"), channels), 1, 0);
}

template <typename T>
DecoupledMasks<T> SoloModel<T>::mask_branch_decoupled(const Tensor<T>& trunk, std::size_t level) const
{
    if (config_.variant != HeadVariant::decoupled) {
        throw std::logic_error("mask_branch_decoupled on a vanilla model");
    }
    const std::string suffix = std::to_string(level);
    return {conv(trunk, "head.mask.out_x" + suffix, 1, 0), conv(trunk, "head.mask.out_y" + suffix, 1, 0)};
}

template <typename T>
std::vector<LevelOutput<T>> SoloModel<T>::forward(const Tensor<T>& image, bool full_vanilla_masks) const
{
    const auto features = backbone_forward(image);
    const std::size_t mh = image.dim(1) / config_.mask_output_stride;
    const std::size_t mw = image.dim(2) / config_.mask_output_stride;
    std::vector<LevelOutput<T>> out;
    for (std::size_t l = 0; l < features.levels.size(); ++l) {
        LevelOutput<T> level;
        level.category_logits = category_branch(features.levels[l], l);
        level.mask_features = mask_trunk(features.levels[l], mh, mw);
        if (config_.variant == HeadVariant::decoupled) {
            level.decoupled = mask_branch_decoupled(level.mask_features, l);
        } else if (full_vanilla_masks) {
            level.mask_logits = mask_branch_vanilla(level.mask_features, l);
        }
        out.push_back(std::move(level));
    }
    return out;
}

template <typename T>
Tensor<T> reconstruct_mask(const Tensor<T>& x, const Tensor<T>& y, std::size_t i, std::size_t j)
{
    if (i >= y.dim(0) || j >= x.dim(0)) {
        throw std::out_of_range("reconstruct_mask: cell (" + std::to_string(i) + ", " +
                                std::to_string(j) + ") outside a grid of " + std::to_string(x.dim(0)));
    }
    return ops::mul(ops::sigmoid(ops::select_channel(x, j)), ops::sigmoid(ops::select_channel(y, i)));
}

template class SoloModel<float>;
template class SoloModel<double>;
template ModelWeights<float> init_weights<float>(const ModelConfig&, std::uint64_t, double);
template ModelWeights<double> init_weights<double>(const ModelConfig&, std::uint64_t, double);
template Tensor<float> reconstruct_mask(const Tensor<float>&, const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> reconstruct_mask(const Tensor<double>&, const Tensor<double>&, std::size_t,
                                         std::size_t);

}  // namespace solo
