#include "solo/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "solo/data.hpp"

namespace solo {

std::size_t BinaryMask::area() const
{
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

std::optional<PixelBox> foreground_box(const BinaryMask& mask)
{
    std::optional<PixelBox> box;
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            if (!box) {
                box = PixelBox{x, y, x, y};
                continue;
            }
            box->x0 = std::min(box->x0, x);
            box->x1 = std::max(box->x1, x);
            box->y0 = std::min(box->y0, y);
            box->y1 = std::max(box->y1, y);
        }
    }
    return box;
}

PyramidConfig PyramidConfig::five_level()
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    return {{
        {"P2", 8, 40, 0.0, 96.0},
        {"P3", 8, 36, 48.0, 192.0},
        {"P4", 16, 24, 96.0, 384.0},
        {"P5", 32, 16, 192.0, 768.0},
        {"P6", 32, 12, 384.0, inf},
    }};
}

PyramidConfig PyramidConfig::single_level(std::size_t stride, std::size_t grid)
{
    return {{{"P" + std::to_string(static_cast<int>(std::log2(static_cast<double>(stride)))),
              stride, grid, 0.0, std::numeric_limits<double>::infinity()}}};
}

void PyramidConfig::validate() const
{
    if (levels.empty()) throw ConfigError("pyramid has no levels");
    for (const auto& level : levels) {
        if (level.grid == 0) throw ConfigError("level " + level.name + " has grid number 0");
        if (!(level.scale_lo < level.scale_hi)) {
            throw ConfigError("level " + level.name + " has an empty scale range");
        }
        if (level.stride != 4 && level.stride != 8 && level.stride != 16 && level.stride != 32) {
            throw ConfigError("level " + level.name + " stride " + std::to_string(level.stride) +
                              " is not one of 4, 8, 16, 32");
        }
    }
    auto ranges = levels;
    std::sort(ranges.begin(), ranges.end(),
              [](const GridSpec& a, const GridSpec& b) { return a.scale_lo < b.scale_lo; });
    if (ranges.front().scale_lo > 0.0) throw ConfigError("pyramid scale ranges do not start at 0");
    double reach = ranges.front().scale_hi;
    for (const auto& level : ranges) {
        if (level.scale_lo > reach) {
            throw ConfigError("pyramid scale ranges leave a gap at " + std::to_string(reach));
        }
        reach = std::max(reach, level.scale_hi);
    }
    if (!std::isinf(reach)) throw ConfigError("pyramid scale ranges do not reach infinity");
}

std::pair<double, double> mass_center(const BinaryMask& mask)
{
    double sx = 0, sy = 0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            sx += static_cast<double>(x) + 0.5;
            sy += static_cast<double>(y) + 0.5;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("mass_center: empty mask");
    return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

double instance_scale(const BinaryMask& mask)
{
    const auto n = mask.area();
    if (n == 0) throw std::invalid_argument("instance_scale: empty mask");
    return std::sqrt(static_cast<double>(n));
}

CenterRegion center_region(const BinaryMask& mask, double epsilon)
{
    auto [cx, cy] = mass_center(mask);
    const auto box = foreground_box(mask);
    return {cx, cy, epsilon * static_cast<double>(box->width()) / 2.0,
            epsilon * static_cast<double>(box->height()) / 2.0};
}

std::vector<std::size_t> assign_levels(double scale, const PyramidConfig& pyramid)
{
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
        const auto& level = pyramid.levels[l];
        if (scale >= level.scale_lo && scale < level.scale_hi) out.push_back(l);
    }
    return out;
}

std::set<GridCell> assign_positive_cells(const CenterRegion& region, std::size_t grid,
                                         std::size_t img_w, std::size_t img_h)
{
    const double S = static_cast<double>(grid);
    const double W = static_cast<double>(img_w);
    const double H = static_cast<double>(img_h);
    auto cell_of = [&](double v, double extent) {
        const double idx = std::floor(v * S / extent);
        return static_cast<std::size_t>(std::clamp(idx, 0.0, S - 1.0));
    };
    const std::size_t ci = cell_of(region.cy, H);
    const std::size_t cj = cell_of(region.cx, W);

    const double left = region.cx - region.half_width, right = region.cx + region.half_width;
    const double top = region.cy - region.half_height, bottom = region.cy + region.half_height;

    std::set<GridCell> cells;
    for (std::size_t i = ci == 0 ? 0 : ci - 1; i <= std::min(ci + 1, grid - 1); ++i) {
        const double i0 = static_cast<double>(i) * H, i1 = static_cast<double>(i + 1) * H;
        if (!(i0 < bottom * S && top * S < i1)) continue;
        for (std::size_t j = cj == 0 ? 0 : cj - 1; j <= std::min(cj + 1, grid - 1); ++j) {
            const double j0 = static_cast<double>(j) * W, j1 = static_cast<double>(j + 1) * W;
            if (j0 < right * S && left * S < j1) cells.insert({i, j});
        }
    }
    return cells;
}

BinaryMask downsample_mask(const BinaryMask& mask, std::size_t stride)
{
    if (stride == 0 || mask.height % stride != 0 || mask.width % stride != 0) {
        throw std::invalid_argument("downsample_mask: " + std::to_string(mask.height) + "x" +
                                    std::to_string(mask.width) + " not divisible by stride " +
                                    std::to_string(stride));
    }
    BinaryMask out(mask.height / stride, mask.width / stride);
    const std::size_t block = stride * stride;
    for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width; ++x) {
            std::size_t count = 0;
            for (std::size_t dy = 0; dy < stride; ++dy) {
                for (std::size_t dx = 0; dx < stride; ++dx) {
                    count += mask.at(y * stride + dy, x * stride + dx);
                }
            }
            out.set(y, x, 2 * count >= block);
        }
    }
    return out;
}

std::size_t TrainingTargets::num_positives() const
{
    std::size_t n = 0;
    for (const auto& level : levels) n += level.positives.size();
    return n;
}

TrainingTargets build_targets(const std::vector<InstanceAnnotation>& annotations,
                              const PyramidConfig& pyramid, std::size_t img_h, std::size_t img_w,
                              const TargetOptions& options)
{
    if (img_h % options.mask_stride != 0 || img_w % options.mask_stride != 0) {
        throw std::invalid_argument("build_targets: image size not divisible by mask stride");
    }
    TrainingTargets targets;
    targets.mask_height = img_h / options.mask_stride;
    targets.mask_width = img_w / options.mask_stride;

    struct Claim {
        std::size_t instance;
        double scale;
    };
    std::vector<std::map<GridCell, Claim>> owners(pyramid.levels.size());
    std::vector<double> scales(annotations.size());
    for (std::size_t n = 0; n < annotations.size(); ++n) {
        const auto& mask = annotations[n].mask;
        if (mask.height != img_h || mask.width != img_w) {
            throw std::invalid_argument("build_targets: annotation mask extent differs from image");
        }
        scales[n] = instance_scale(mask);
        const auto region = center_region(mask, options.epsilon);
        for (auto l : assign_levels(scales[n], pyramid)) {
            for (const auto& cell :
                 assign_positive_cells(region, pyramid.levels[l].grid, img_w, img_h)) {
                auto [it, inserted] = owners[l].try_emplace(cell, Claim{n, scales[n]});
                if (!inserted && scales[n] < it->second.scale) it->second = Claim{n, scales[n]};
            }
        }
    }

    std::map<std::size_t, BinaryMask> mask_targets;
    auto target_for = [&](std::size_t n) -> const BinaryMask& {
        auto it = mask_targets.find(n);
        if (it != mask_targets.end()) return it->second;
        auto small = downsample_mask(annotations[n].mask, options.mask_stride);
        if (options.contours) small = extract_contour(small);
        return mask_targets.emplace(n, std::move(small)).first->second;
    };

    for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
        LevelTargets level;
        level.grid = pyramid.levels[l].grid;
        level.category.assign(level.grid * level.grid, 0);
        for (const auto& [cell, claim] : owners[l]) {  // row-major by GridCell ordering
            const int category = annotations[claim.instance].category;
            level.category[cell.i * level.grid + cell.j] = category;
            level.positives.push_back({cell, category, claim.instance, target_for(claim.instance)});
        }
        targets.levels.push_back(std::move(level));
    }
    return targets;
}

}  // namespace solo
