#include "solo/inference.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>

#include "solo/ops.hpp"

namespace solo {

std::vector<Detection> decode_candidates(std::span<const Tensor<float>> probs, double conf_threshold)
{
    std::vector<Detection> out;
    for (std::size_t l = 0; l < probs.size(); ++l) {
        const auto& p = probs[l];
        if (p.rank() != 3 || p.dim(1) != p.dim(2)) {
            throw std::invalid_argument("decode_candidates: level " + std::to_string(l) +
                                        " probabilities have shape " + shape_string(p.shape()));
        }
        const std::size_t C = p.dim(0), S = p.dim(1);
        const auto v = p.data();
        const float thr = static_cast<float>(conf_threshold);
        for (std::size_t i = 0; i < S; ++i) {
            for (std::size_t j = 0; j < S; ++j) {
                for (std::size_t c = 0; c < C; ++c) {
                    const float prob = v[(c * S + i) * S + j];
                    if (!(prob > thr)) continue;
                    Detection d;
                    d.category = static_cast<int>(c) + 1;
                    d.class_score = prob;
                    d.level = l;
                    d.i = i;
                    d.j = j;
                    d.k = cell_channel(i, j, S);
                    out.push_back(std::move(d));
                }
            }
        }
    }
    return out;
}

namespace {

auto source_key(const Detection& d) { return std::tie(d.level, d.i, d.j, d.category); }

}  // namespace

std::vector<Detection> top_k(std::vector<Detection> candidates, std::size_t k)
{
    std::sort(candidates.begin(), candidates.end(), [](const Detection& a, const Detection& b) {
        if (a.class_score != b.class_score) return a.class_score > b.class_score;
        return source_key(a) < source_key(b);
    });
    if (candidates.size() > k) candidates.resize(k);
    return candidates;
}

double maskness(const SoftMask& soft)
{
    double sum = 0;
    std::size_t n = 0;
    for (float v : soft.values) {
        if (v > 0.5f) {
            sum += v;
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

BinaryMask binarize(const SoftMask& soft, double threshold)
{
    BinaryMask m(soft.height, soft.width);
    for (std::size_t i = 0; i < soft.values.size(); ++i) m.bits[i] = soft.values[i] > threshold ? 1 : 0;
    return m;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b)
{
    if (!a.same_extent(b)) {
        throw std::invalid_argument("mask_iou: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                    " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
    }
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Detection> nms(const std::vector<Detection>& sorted, double iou_threshold)
{
    std::vector<Detection> kept;
    for (const auto& d : sorted) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.category == d.category && mask_iou(k.mask, d.mask) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

void attach_masks(std::vector<Detection>& candidates, const SoloModel<float>& model,
                  const std::vector<LevelOutput<float>>& outputs, std::size_t out_h, std::size_t out_w)
{
    NoGradGuard guard;
    const auto& cfg = model.config();
    // Unique cells per level, in first-seen order.
    std::map<std::size_t, std::vector<std::size_t>> cells;
    for (const auto& d : candidates) {
        auto& list = cells[d.level];
        if (std::find(list.begin(), list.end(), d.k) == list.end()) list.push_back(d.k);
    }
    std::map<std::pair<std::size_t, std::size_t>, SoftMask> masks;
    for (const auto& [level, ks] : cells) {
        const auto& out = outputs.at(level);
        const std::size_t S = cfg.pyramid.levels.at(level).grid;
        Tensor<float> soft;
        if (cfg.variant == HeadVariant::vanilla) {
            soft = ops::sigmoid(model.vanilla_channels(out.mask_features, level, ks));
        } else {
            const auto hm = out.decoupled.x.dim(1), wm = out.decoupled.x.dim(2);
            std::vector<float> stacked;
            stacked.reserve(ks.size() * hm * wm);
            for (auto k : ks) {
                const auto cell = channel_cell(k, S);
                const auto m = reconstruct_mask(out.decoupled.x, out.decoupled.y, cell.i, cell.j);
                stacked.insert(stacked.end(), m.data().begin(), m.data().end());
            }
            soft = Tensor<float>({ks.size(), hm, wm}, std::move(stacked));
        }
        if (soft.dim(1) != out_h || soft.dim(2) != out_w) soft = ops::bilinear_resize(soft, out_h, out_w);
        const std::size_t plane = out_h * out_w;
        for (std::size_t n = 0; n < ks.size(); ++n) {
            SoftMask m{out_h, out_w, {}};
            m.values.assign(soft.data().begin() + static_cast<std::ptrdiff_t>(n * plane),
                            soft.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * plane));
            masks.emplace(std::pair{level, ks[n]}, std::move(m));
        }
    }
    for (auto& d : candidates) d.soft = masks.at({d.level, d.k});
}

std::vector<std::pair<std::size_t, std::size_t>> foreground_runs(const BinaryMask& mask)
{
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (!mask.bits[i]) continue;
        if (!runs.empty() && runs.back().first + runs.back().second == i) {
            ++runs.back().second;
        } else {
            runs.emplace_back(i, 1);
        }
    }
    return runs;
}

std::vector<Detection> run_inference(const SoloModel<float>& model, const Image& image,
                                     const InferenceConfig& config)
{
    NoGradGuard guard;
    const Tensor<float> input({3, image.height, image.width}, image.pixels);
    const auto outputs = model.forward(input, false);
    std::vector<Tensor<float>> probs;
    for (const auto& o : outputs) probs.push_back(ops::sigmoid(o.category_logits));

    auto dets = top_k(decode_candidates(probs, config.conf_threshold), config.top_k);
    std::size_t out_h = image.height, out_w = image.width;
    if (!config.upsample_to_image) {
        out_h = image.height / model.config().mask_output_stride;
        out_w = image.width / model.config().mask_output_stride;
    }
    attach_masks(dets, model, outputs, out_h, out_w);
    for (auto& d : dets) {
        d.maskness = maskness(d.soft);
        d.score = d.class_score * d.maskness;
        d.mask = binarize(d.soft, config.mask_threshold);
    }
    std::erase_if(dets, [](const Detection& d) { return d.mask.empty(); });
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    auto kept = nms(dets, config.nms_iou);
    if (kept.size() > config.max_detections) kept.resize(config.max_detections);
    return kept;
}

}  // namespace solo
