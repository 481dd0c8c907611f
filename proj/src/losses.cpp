#include "solo/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "solo/ops.hpp"

namespace solo {

namespace {

template <typename T>
T softplus(T x)
{
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x)
{
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

void require_size(std::size_t got, std::size_t want, const char* op)
{
    if (got != want) {
        throw std::invalid_argument(std::string(op) + ": prediction has " + std::to_string(got) +
                                    " elements but target has " + std::to_string(want));
    }
}

}  // namespace

std::string to_string(MaskLossKind k)
{
    switch (k) {
    case MaskLossKind::dice: return "dice";
    case MaskLossKind::focal: return "focal";
    case MaskLossKind::bce: return "bce";
    }
    return "dice";
}

MaskLossKind mask_loss_kind_from_string(const std::string& s)
{
    if (s == "dice") return MaskLossKind::dice;
    if (s == "focal") return MaskLossKind::focal;
    if (s == "bce") return MaskLossKind::bce;
    throw ConfigError("unknown mask loss '" + s + "' (expected dice, focal or bce)");
}

void LossConfig::validate() const
{
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) throw ConfigError("focal_alpha must lie in (0, 1)");
    if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be non-negative");
    if (mask_focal_alpha && !(*mask_focal_alpha > 0.0 && *mask_focal_alpha < 1.0))
        throw ConfigError("mask_focal_alpha must lie in (0, 1)");
    if (mask_focal_gamma && !(*mask_focal_gamma >= 0.0)) throw ConfigError("mask_focal_gamma must be non-negative");
    if (!(bce_mask_weight > 0.0 && bce_pixel_weight > 0.0 && focal_mask_weight > 0.0)) {
        throw ConfigError("mask loss weights must be positive");
    }
}

double LossConfig::mask_weight() const
{
    switch (mask_loss) {
    case MaskLossKind::dice: return lambda;
    case MaskLossKind::bce: return bce_mask_weight;
    case MaskLossKind::focal: return focal_mask_weight;
    }
    return lambda;
}

double dice_coefficient(std::span<const double> p, std::span<const std::uint8_t> q)
{
    require_size(p.size(), q.size(), "dice_coefficient");
    double inter = 0, pp = 0, qq = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += p[i] * q[i];
        pp += p[i] * p[i];
        qq += q[i];
    }
    if (pp + qq == 0.0) return 1.0;
    return 2.0 * inter / (pp + qq);
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& p, std::span<const std::uint8_t> q)
{
    require_size(p.size(), q.size(), "dice_loss");
    const auto x = p.data();
    T inter = 0, pp = 0, qq = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        inter += x[i] * T(q[i]);
        pp += x[i] * x[i];
        qq += T(q[i]);
    }
    const T denom = pp + qq;
    const T loss = denom == T(0) ? T(0) : T(1) - T(2) * inter / denom;
    std::vector<std::uint8_t> target(q.begin(), q.end());
    return record_op<T>({1}, {loss}, {p},
                        [p, target = std::move(target), inter, denom](std::span<const T> g) {
                            std::vector<T> grad(p.size(), T(0));
                            if (denom != T(0)) {
                                const auto x = p.data();
                                const T a = T(-2) / denom;
                                const T b = T(4) * inter / (denom * denom);
                                for (std::size_t i = 0; i < grad.size(); ++i) {
                                    grad[i] = g[0] * (a * T(target[i]) + b * x[i]);
                                }
                            }
                            p.accumulate_grad(grad);
                        });
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const std::uint8_t> targets, double alpha,
                     double gamma, Reduction reduction)
{
    require_size(logits.size(), targets.size(), "focal_loss");
    const auto x = logits.data();
    const T a = static_cast<T>(alpha), gm = static_cast<T>(gamma);
    T total = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T p = sigmoid(x[i]);
        if (targets[i]) {
            total += a * std::pow(T(1) - p, gm) * softplus(-x[i]);
        } else {
            total += (T(1) - a) * std::pow(p, gm) * softplus(x[i]);
        }
    }
    const T scale = reduction == Reduction::mean ? T(1) / static_cast<T>(x.size()) : T(1);
    std::vector<std::uint8_t> t(targets.begin(), targets.end());
    return record_op<T>({1}, {total * scale}, {logits},
                        [logits, t = std::move(t), a, gm, scale](std::span<const T> g) {
                            const auto x = logits.data();
                            std::vector<T> grad(x.size());
                            for (std::size_t i = 0; i < x.size(); ++i) {
                                const T p = sigmoid(x[i]);
                                T d;
                                if (t[i]) {
                                    // log p = -softplus(-x)
                                    d = a * std::pow(T(1) - p, gm) *
                                        (-gm * p * softplus(-x[i]) - (T(1) - p));
                                } else {
                                    d = (T(1) - a) * std::pow(p, gm) *
                                        (p + gm * (T(1) - p) * softplus(x[i]));
                                }
                                grad[i] = g[0] * scale * d;
                            }
                            logits.accumulate_grad(grad);
                        });
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, std::span<const std::uint8_t> targets, double positive_weight)
{
    require_size(logits.size(), targets.size(), "bce_loss");
    const auto x = logits.data();
    const T pw = static_cast<T>(positive_weight);
    T total = 0, weight_sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T w = targets[i] ? pw : T(1);
        total += w * (softplus(x[i]) - (targets[i] ? x[i] : T(0)));
        weight_sum += w;
    }
    std::vector<std::uint8_t> t(targets.begin(), targets.end());
    return record_op<T>({1}, {total / weight_sum}, {logits},
                        [logits, t = std::move(t), pw, weight_sum](std::span<const T> g) {
                            const auto x = logits.data();
                            std::vector<T> grad(x.size());
                            for (std::size_t i = 0; i < x.size(); ++i) {
                                const T w = t[i] ? pw : T(1);
                                grad[i] = g[0] * w * (sigmoid(x[i]) - T(t[i])) / weight_sum;
                            }
                            logits.accumulate_grad(grad);
                        });
}

template <typename T>
Tensor<T> category_loss(std::span<const Tensor<T>> logits, std::span<const LevelTargets* const> targets,
                        std::size_t num_positives, const LossConfig& cfg)
{
    if (logits.size() != targets.size()) {
        throw std::invalid_argument("category_loss: " + std::to_string(logits.size()) +
                                    " logit maps for " + std::to_string(targets.size()) + " targets");
    }
    if (logits.empty()) throw std::invalid_argument("category_loss: no levels");
    Tensor<T> total;
    for (std::size_t n = 0; n < logits.size(); ++n) {
        const auto& lt = *targets[n];
        const auto& lg = logits[n];
        if (lg.rank() != 3 || lg.dim(1) != lt.grid || lg.dim(2) != lt.grid) {
            throw std::invalid_argument("category_loss: logits " + shape_string(lg.shape()) +
                                        " do not match a " + std::to_string(lt.grid) + "x" +
                                        std::to_string(lt.grid) + " grid");
        }
        const std::size_t cells = lt.grid * lt.grid;
        std::vector<std::uint8_t> onehot(lg.size(), 0);
        for (std::size_t cell = 0; cell < cells; ++cell) {
            const int c = lt.category[cell];
            if (c > 0) onehot[static_cast<std::size_t>(c - 1) * cells + cell] = 1;
        }
        auto term = focal_loss(lg, onehot, cfg.focal_alpha, cfg.focal_gamma, Reduction::sum);
        total = n == 0 ? term : ops::add(total, term);
    }
    const T norm = static_cast<T>(std::max<std::size_t>(num_positives, 1));
    return ops::scale(total, T(1) / norm);
}

template <typename T>
Tensor<T> mask_loss(std::span<const PositivePrediction<T>> predictions, const LossConfig& cfg)
{
    if (predictions.empty()) return Tensor<T>::scalar(T(0));
    Tensor<T> total;
    for (std::size_t n = 0; n < predictions.size(); ++n) {
        const auto& pred = predictions[n];
        Tensor<T> term;
        switch (cfg.mask_loss) {
        case MaskLossKind::dice: term = dice_loss(pred.values, pred.target->bits); break;
        case MaskLossKind::bce: term = bce_loss(pred.values, pred.target->bits, cfg.bce_pixel_weight); break;
        case MaskLossKind::focal:
            term = focal_loss(pred.values, pred.target->bits, cfg.mask_focal_alpha.value_or(cfg.focal_alpha),
                              cfg.mask_focal_gamma.value_or(cfg.focal_gamma));
            break;
        }
        total = n == 0 ? term : ops::add(total, term);
    }
    return ops::scale(total, T(1) / static_cast<T>(predictions.size()));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& category, const Tensor<T>& mask, double weight)
{
    return ops::add(category, ops::scale(mask, static_cast<T>(weight)));
}

template <typename T>
LossTerms<T> solo_loss(const SoloModel<T>& model, std::span<const std::vector<LevelOutput<T>>> outputs,
                       std::span<const TrainingTargets> targets, const LossConfig& cfg)
{
    if (outputs.size() != targets.size()) {
        throw std::invalid_argument("solo_loss: outputs and targets differ in batch size");
    }
    const auto& mc = model.config();
    if (mc.variant == HeadVariant::decoupled && cfg.mask_loss != MaskLossKind::dice) {
        throw ConfigError("the decoupled head is trained with the dice mask loss only");
    }
    std::vector<Tensor<T>> cate_logits;
    std::vector<const LevelTargets*> cate_targets;
    std::vector<PositivePrediction<T>> positives;
    std::size_t num_pos = 0;
    for (std::size_t n = 0; n < outputs.size(); ++n) {
        const auto& out = outputs[n];
        const auto& tg = targets[n];
        if (out.size() != tg.levels.size()) {
            throw std::invalid_argument("solo_loss: level count mismatch");
        }
        for (std::size_t l = 0; l < out.size(); ++l) {
            const auto& level_targets = tg.levels[l];
            cate_logits.push_back(out[l].category_logits);
            cate_targets.push_back(&level_targets);
            num_pos += level_targets.positives.size();
            if (level_targets.positives.empty()) continue;
            const std::size_t grid = level_targets.grid;
            if (mc.variant == HeadVariant::vanilla) {
                std::vector<std::size_t> channels;
                for (const auto& pos : level_targets.positives) {
                    channels.push_back(cell_channel(pos.cell.i, pos.cell.j, grid));
                }
                const auto logits = model.vanilla_channels(out[l].mask_features, l, channels);
                for (std::size_t k = 0; k < channels.size(); ++k) {
                    auto ch = ops::select_channel(logits, k);
                    if (cfg.mask_loss == MaskLossKind::dice) ch = ops::sigmoid(ch);
                    positives.push_back({ch, &level_targets.positives[k].target});
                }
            } else {
                const auto& dm = out[l].decoupled;
                for (const auto& pos : level_targets.positives) {
                    positives.push_back({reconstruct_mask(dm.x, dm.y, pos.cell.i, pos.cell.j), &pos.target});
                }
            }
        }
    }
    LossTerms<T> terms;
    terms.num_positives = num_pos;
    terms.category = category_loss<T>(cate_logits, cate_targets, num_pos, cfg);
    terms.mask = mask_loss<T>(positives, cfg);
    terms.total = total_loss(terms.category, terms.mask, cfg.mask_weight());
    return terms;
}

#define SOLO_INSTANTIATE_LOSSES(T)                                                                 \
    template Tensor<T> dice_loss(const Tensor<T>&, std::span<const std::uint8_t>);                 \
    template Tensor<T> focal_loss(const Tensor<T>&, std::span<const std::uint8_t>, double, double, \
                                  Reduction);                                                      \
    template Tensor<T> bce_loss(const Tensor<T>&, std::span<const std::uint8_t>, double);          \
    template Tensor<T> category_loss(std::span<const Tensor<T>>, std::span<const LevelTargets* const>, \
                                     std::size_t, const LossConfig&);                              \
    template Tensor<T> mask_loss(std::span<const PositivePrediction<T>>, const LossConfig&);       \
    template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, double);                     \
    template LossTerms<T> solo_loss(const SoloModel<T>&, std::span<const std::vector<LevelOutput<T>>>, \
                                    std::span<const TrainingTargets>, const LossConfig&);

SOLO_INSTANTIATE_LOSSES(float)
SOLO_INSTANTIATE_LOSSES(double)

#undef SOLO_INSTANTIATE_LOSSES

}  // namespace solo
