#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "solo/types.hpp"

namespace solo {

/// Planar RGB image, [3, H, W], values in [0, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;

    friend bool operator==(const Image&, const Image&) = default;
};

struct DatasetSample {
    Image image;
    std::vector<InstanceAnnotation> annotations;
    std::int64_t image_id = 0;
    std::string file_name;
};

/// Shape kinds double as category ids.
enum class ShapeKind : int { rectangle = 1, ellipse = 2, triangle = 3 };

const std::vector<std::string>& synthetic_category_names();

struct SynthConfig {
    std::size_t image_size = 96;
    std::size_t min_instances = 1;
    std::size_t max_instances = 3;
    double min_size = 20.0;  // shape extent in px
    double max_size = 44.0;
    /// Largest allowed IoU between any two full (unoccluded) shape masks.
    double max_pairwise_iou = 0.0;
    std::size_t min_visible_area = 24;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Deterministic in (cfg, n). Later shapes occlude earlier ones; annotation
/// masks hold the visible part. Pixels are quantized to 8 bits so a PNG round
/// trip is lossless.
std::vector<DatasetSample> generate_synthetic(const SynthConfig& cfg, std::size_t n);

/// Pixel (x, y) is set iff (x + 0.5, y + 0.5) is strictly inside the polygon
/// under the even-odd rule.
BinaryMask rasterize_polygon(const Polygon& points, std::size_t h, std::size_t w);

/// Union of the rasterized polygons.
BinaryMask rasterize_polygons(const std::vector<Polygon>& polygons, std::size_t h, std::size_t w);

double polygon_area(const Polygon& points);

/// Foreground pixels with at least one 4-neighbour in the background or
/// outside the image.
BinaryMask extract_contour(const BinaryMask& mask);

/// Parses a COCO-style instance document with polygon segmentations. Crowd
/// annotations are skipped and category ids remapped to 1..C in id order.
/// Throws DataError for RLE segmentations, malformed documents, or missing
/// image files.
std::vector<DatasetSample> load_coco_annotations(const std::string& json_text,
                                                 const std::filesystem::path& images_dir);

/// COCO-style document for `samples`; file names are taken from the samples.
std::string export_coco_annotations(const std::vector<DatasetSample>& samples,
                                    const std::vector<std::string>& category_names);

/// Writes `<dir>/images/*.png` and `<dir>/annotations.json`.
void save_dataset(const std::filesystem::path& dir, const std::vector<DatasetSample>& samples,
                  const std::vector<std::string>& category_names);

std::vector<DatasetSample> load_dataset(const std::filesystem::path& dir);

/// Bilinear image resize and nearest-neighbour mask resize to size x size.
DatasetSample resize_sample(const DatasetSample& sample, std::size_t size);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace solo
