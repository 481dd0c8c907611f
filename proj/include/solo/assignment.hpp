#pragma once

#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "solo/types.hpp"

namespace solo {

/// One prediction level: which feature stride it reads, its S x S grid and
/// the half-open range [scale_lo, scale_hi) of instance scales it owns.
struct GridSpec {
    std::string name;
    std::size_t stride = 8;
    std::size_t grid = 12;
    double scale_lo = 0.0;
    double scale_hi = std::numeric_limits<double>::infinity();
};

struct PyramidConfig {
    std::vector<GridSpec> levels;

    /// Five levels P2..P6: strides 8,8,16,32,32; grids 40,36,24,16,12;
    /// scales <96, 48-192, 96-384, 192-768, >=384.
    static PyramidConfig five_level();
    /// A single level that owns every scale.
    static PyramidConfig single_level(std::size_t stride, std::size_t grid);

    /// Throws ConfigError unless every level is well formed and the ranges
    /// jointly cover (0, inf).
    void validate() const;
};

struct CenterRegion {
    double cx = 0, cy = 0;
    double half_width = 0, half_height = 0;
};

struct GridCell {
    std::size_t i = 0;  // row
    std::size_t j = 0;  // column
    friend auto operator<=>(const GridCell&, const GridCell&) = default;
};

/// Channel of cell (i, j) in an S x S grid.
constexpr std::size_t cell_channel(std::size_t i, std::size_t j, std::size_t grid)
{
    return i * grid + j;
}

constexpr GridCell channel_cell(std::size_t k, std::size_t grid) { return {k / grid, k % grid}; }

/// Centroid of foreground pixel centers (x + 0.5, y + 0.5).
std::pair<double, double> mass_center(const BinaryMask& mask);

/// sqrt(foreground pixel count).
double instance_scale(const BinaryMask& mask);

/// Center (c_x, c_y) with half extents epsilon*w/2, epsilon*h/2 where w, h
/// are the foreground bounding-box extents.
CenterRegion center_region(const BinaryMask& mask, double epsilon);

std::vector<std::size_t> assign_levels(double scale, const PyramidConfig& pyramid);

/// Cells whose rectangle [j*W/S, (j+1)*W/S) x [i*H/S, (i+1)*H/S) meets the
/// open center region, restricted to the 3x3 block around the cell holding
/// the region's center.
std::set<GridCell> assign_positive_cells(const CenterRegion& region, std::size_t grid,
                                         std::size_t img_w, std::size_t img_h);

/// Block average at `stride`, thresholded with means >= 0.5 counted as
/// foreground.
BinaryMask downsample_mask(const BinaryMask& mask, std::size_t stride);

struct PositiveSample {
    GridCell cell;
    int category = 0;
    std::size_t instance = 0;  // index into the annotation list
    BinaryMask target;         // at mask resolution
};

struct LevelTargets {
    std::size_t grid = 0;
    std::vector<int> category;  // S*S, 0 = background
    std::vector<PositiveSample> positives;

    bool is_positive(std::size_t i, std::size_t j) const { return category[i * grid + j] != 0; }
};

struct TrainingTargets {
    std::vector<LevelTargets> levels;
    std::size_t mask_height = 0;
    std::size_t mask_width = 0;

    std::size_t num_positives() const;
};

struct TargetOptions {
    double epsilon = 0.2;
    std::size_t mask_stride = 4;
    /// Replace each positive's mask target by its 4-neighbour contour.
    bool contours = false;
};

/// Per-level positives, categories and mask targets for one image. When two
/// instances claim a cell the smaller instance_scale wins (first on ties).
TrainingTargets build_targets(const std::vector<InstanceAnnotation>& annotations,
                              const PyramidConfig& pyramid, std::size_t img_h, std::size_t img_w,
                              const TargetOptions& options = {});

}  // namespace solo
