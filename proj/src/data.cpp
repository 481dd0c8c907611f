#include "solo/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "solo/ops.hpp"

namespace solo {

const std::vector<std::string>& synthetic_category_names()
{
    static const std::vector<std::string> names{"rectangle", "ellipse", "triangle"};
    return names;
}

void SynthConfig::validate() const
{
    if (image_size == 0) throw ConfigError("synth: image_size must be positive");
    if (min_instances == 0 || min_instances > max_instances) {
        throw ConfigError("synth: instance count range is empty or starts at 0");
    }
    if (!(min_size > 0.0) || min_size > max_size) throw ConfigError("synth: size range is empty");
    if (max_size > static_cast<double>(image_size)) {
        throw ConfigError("synth: max_size " + std::to_string(max_size) + " exceeds image size " +
                          std::to_string(image_size));
    }
    if (!(max_pairwise_iou >= 0.0 && max_pairwise_iou < 1.0)) {
        throw ConfigError("synth: max_pairwise_iou must lie in [0, 1)");
    }
    if (min_visible_area == 0) throw ConfigError("synth: min_visible_area must be positive");
}

BinaryMask rasterize_polygon(const Polygon& points, std::size_t h, std::size_t w)
{
    if (points.size() < 3) {
        throw std::invalid_argument("rasterize_polygon: need at least 3 points, got " +
                                    std::to_string(points.size()));
    }
    BinaryMask mask(h, w);
    std::vector<double> crossings;
    for (std::size_t y = 0; y < h; ++y) {
        const double yc = static_cast<double>(y) + 0.5;
        crossings.clear();
        for (std::size_t e = 0; e < points.size(); ++e) {
            const Point& p = points[e];
            const Point& q = points[(e + 1) % points.size()];
            if ((p.y > yc) == (q.y > yc)) continue;
            crossings.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
        }
        if (crossings.empty()) continue;
        std::sort(crossings.begin(), crossings.end());
        std::size_t passed = 0;
        for (std::size_t x = 0; x < w; ++x) {
            const double xc = static_cast<double>(x) + 0.5;
            while (passed < crossings.size() && crossings[passed] < xc) ++passed;
            const bool on_edge = passed < crossings.size() && crossings[passed] == xc;
            if (passed % 2 == 1 && !on_edge) mask.set(y, x);
        }
    }
    return mask;
}

BinaryMask rasterize_polygons(const std::vector<Polygon>& polygons, std::size_t h, std::size_t w)
{
    BinaryMask out(h, w);
    for (const auto& poly : polygons) {
        const auto m = rasterize_polygon(poly, h, w);
        for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] |= m.bits[i];
    }
    return out;
}

double polygon_area(const Polygon& points)
{
    double twice = 0;
    for (std::size_t e = 0; e < points.size(); ++e) {
        const Point& p = points[e];
        const Point& q = points[(e + 1) % points.size()];
        twice += p.x * q.y - q.x * p.y;
    }
    return std::abs(twice) / 2.0;
}

BinaryMask extract_contour(const BinaryMask& mask)
{
    BinaryMask out(mask.height, mask.width);
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            const bool border = y == 0 || x == 0 || y + 1 == mask.height || x + 1 == mask.width ||
                                !mask.at(y - 1, x) || !mask.at(y + 1, x) || !mask.at(y, x - 1) ||
                                !mask.at(y, x + 1);
            if (border) out.set(y, x);
        }
    }
    return out;
}

namespace {

Polygon shape_outline(ShapeKind kind, double cx, double cy, double size, double aspect,
                      double angle, std::mt19937_64& rng)
{
    const double c = std::cos(angle), s = std::sin(angle);
    auto place = [&](double u, double v) { return Point{cx + c * u - s * v, cy + s * u + c * v}; };
    Polygon poly;
    switch (kind) {
    case ShapeKind::rectangle: {
        const double hw = size / 2.0, hh = size * aspect / 2.0;
        poly = {place(-hw, -hh), place(hw, -hh), place(hw, hh), place(-hw, hh)};
        break;
    }
    case ShapeKind::ellipse: {
        const double a = size / 2.0, b = size * aspect / 2.0;
        constexpr int vertices = 48;
        for (int k = 0; k < vertices; ++k) {
            const double t = 2.0 * std::numbers::pi * k / vertices;
            poly.push_back(place(a * std::cos(t), b * std::sin(t)));
        }
        break;
    }
    case ShapeKind::triangle: {
        std::uniform_real_distribution<double> jitter(-0.25, 0.25);
        std::uniform_real_distribution<double> reach(0.85, 1.0);
        for (int k = 0; k < 3; ++k) {
            const double t = 2.0 * std::numbers::pi * k / 3.0 + jitter(rng);
            const double r = size / 2.0 * reach(rng);
            poly.push_back(place(r * std::cos(t), r * std::sin(t)));
        }
        break;
    }
    }
    return poly;
}

double iou(const BinaryMask& a, const BinaryMask& b)
{
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

float quantize(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f; }

// One polygon per horizontal foreground run; their union rasterizes back to
// exactly the mask.
std::vector<Polygon> run_polygons(const BinaryMask& mask)
{
    std::vector<Polygon> out;
    for (std::size_t y = 0; y < mask.height; ++y) {
        std::size_t x = 0;
        while (x < mask.width) {
            if (!mask.at(y, x)) {
                ++x;
                continue;
            }
            const std::size_t start = x;
            while (x < mask.width && mask.at(y, x)) ++x;
            const double x0 = static_cast<double>(start), x1 = static_cast<double>(x);
            const double y0 = static_cast<double>(y), y1 = y0 + 1.0;
            out.push_back({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
        }
    }
    return out;
}

struct PlacedShape {
    ShapeKind kind;
    Polygon outline;
    BinaryMask full;
};

}  // namespace

std::vector<DatasetSample> generate_synthetic(const SynthConfig& cfg, std::size_t n)
{
    cfg.validate();
    if (n == 0) throw ConfigError("generate_synthetic: n must be at least 1");
    std::mt19937_64 rng(cfg.seed);
    const std::size_t side = cfg.image_size;
    const double sidef = static_cast<double>(side);
    std::uniform_int_distribution<std::size_t> count_dist(cfg.min_instances, cfg.max_instances);
    std::uniform_int_distribution<int> kind_dist(1, 3);
    std::uniform_real_distribution<double> size_dist(cfg.min_size, cfg.max_size);
    std::uniform_real_distribution<double> aspect_dist(0.55, 1.0);
    std::uniform_real_distribution<double> angle_dist(0.0, std::numbers::pi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> bg_noise(0.0, 0.08);
    std::normal_distribution<double> fg_noise(0.0, 0.04);

    std::vector<DatasetSample> samples;
    samples.reserve(n);
    while (samples.size() < n) {
        const std::size_t count = count_dist(rng);
        std::vector<PlacedShape> shapes;
        int attempts = 0;
        while (shapes.size() < count && attempts < 200) {
            ++attempts;
            const auto kind = static_cast<ShapeKind>(kind_dist(rng));
            const double size = size_dist(rng);
            const double aspect = aspect_dist(rng);
            const double angle = angle_dist(rng);
            const double margin = size / 2.0;
            std::uniform_real_distribution<double> center(margin, sidef - margin);
            const double cx = center(rng), cy = center(rng);
            auto outline = shape_outline(kind, cx, cy, size, aspect, angle, rng);
            auto full = rasterize_polygon(outline, side, side);
            if (full.area() < cfg.min_visible_area) continue;
            bool ok = true;
            for (const auto& other : shapes) {
                if (iou(full, other.full) > cfg.max_pairwise_iou) {
                    ok = false;
                    break;
                }
            }
            if (ok) shapes.push_back({kind, std::move(outline), std::move(full)});
        }
        if (shapes.size() < count) continue;

        // Occlusion: later shapes are painted over earlier ones.
        std::vector<BinaryMask> visible;
        bool occluded_away = false;
        for (std::size_t a = 0; a < shapes.size(); ++a) {
            BinaryMask v = shapes[a].full;
            for (std::size_t b = a + 1; b < shapes.size(); ++b) {
                for (std::size_t i = 0; i < v.bits.size(); ++i) v.bits[i] &= !shapes[b].full.bits[i];
            }
            if (v.area() < cfg.min_visible_area) occluded_away = true;
            visible.push_back(std::move(v));
        }
        if (occluded_away) continue;

        DatasetSample sample;
        sample.image_id = static_cast<std::int64_t>(samples.size()) + 1;
        sample.file_name = std::to_string(sample.image_id) + ".png";
        Image& img = sample.image;
        img.height = img.width = side;
        img.pixels.resize(3 * side * side);
        double bg[3];
        for (auto& c : bg) c = 0.15 + 0.7 * unit(rng);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < side * side; ++p) {
                img.pixels[c * side * side + p] = quantize(bg[c] + bg_noise(rng));
            }
        }
        for (std::size_t a = 0; a < shapes.size(); ++a) {
            double fill[3];
            do {
                for (auto& c : fill) c = unit(rng);
            } while (std::max({std::abs(fill[0] - bg[0]), std::abs(fill[1] - bg[1]),
                               std::abs(fill[2] - bg[2])}) < 0.35);
            const auto& full = shapes[a].full;
            for (std::size_t p = 0; p < side * side; ++p) {
                if (!full.bits[p]) continue;
                for (std::size_t c = 0; c < 3; ++c) {
                    img.pixels[c * side * side + p] = quantize(fill[c] + fg_noise(rng));
                }
            }
            InstanceAnnotation ann;
            ann.category = static_cast<int>(shapes[a].kind);
            ann.mask = visible[a];
            if (visible[a] == full) {
                ann.polygons = {shapes[a].outline};
            } else {
                ann.polygons = run_polygons(visible[a]);
            }
            sample.annotations.push_back(std::move(ann));
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

DatasetSample resize_sample(const DatasetSample& sample, std::size_t size)
{
    if (sample.image.height == size && sample.image.width == size) return sample;
    DatasetSample out = sample;
    const Tensor<float> img({3, sample.image.height, sample.image.width}, sample.image.pixels);
    NoGradGuard guard;
    const auto resized = ops::bilinear_resize(img, size, size);
    out.image.height = out.image.width = size;
    out.image.pixels.assign(resized.data().begin(), resized.data().end());
    for (auto& ann : out.annotations) {
        BinaryMask m(size, size);
        for (std::size_t y = 0; y < size; ++y) {
            const std::size_t sy = std::min(ann.mask.height - 1, y * ann.mask.height / size);
            for (std::size_t x = 0; x < size; ++x) {
                const std::size_t sx = std::min(ann.mask.width - 1, x * ann.mask.width / size);
                m.set(y, x, ann.mask.at(sy, sx));
            }
        }
        ann.mask = std::move(m);
        const double fx = static_cast<double>(size) / static_cast<double>(sample.image.width);
        const double fy = static_cast<double>(size) / static_cast<double>(sample.image.height);
        for (auto& poly : ann.polygons) {
            for (auto& p : poly) p = {p.x * fx, p.y * fy};
        }
    }
    std::erase_if(out.annotations, [](const InstanceAnnotation& a) { return a.mask.empty(); });
    return out;
}

}  // namespace solo
