#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "solo/data.hpp"

namespace solo {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object() || !obj.contains(key)) {
        throw DataError(where + ": missing field '" + key + "'");
    }
    return obj.at(key);
}

std::vector<Polygon> parse_segmentation(const json& seg, std::int64_t ann_id)
{
    const std::string where = "annotation " + std::to_string(ann_id);
    if (seg.is_object()) {
        throw DataError(where + ": unsupported encoding (RLE segmentation)");
    }
    if (!seg.is_array()) throw DataError(where + ": segmentation is not a polygon list");
    std::vector<Polygon> polygons;
    for (const auto& flat : seg) {
        if (!flat.is_array() || flat.size() % 2 != 0) {
            throw DataError(where + ": polygon must be a flat list of x,y pairs");
        }
        Polygon poly;
        for (std::size_t k = 0; k + 1 < flat.size(); k += 2) {
            poly.push_back({flat[k].get<double>(), flat[k + 1].get<double>()});
        }
        if (poly.size() >= 3) polygons.push_back(std::move(poly));
    }
    return polygons;
}

}  // namespace

std::vector<DatasetSample> load_coco_annotations(const std::string& json_text,
                                                 const std::filesystem::path& images_dir)
{
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("annotation document is not valid JSON: ") + e.what());
    }
    const auto& images = require(doc, "images", "document");
    const auto& annotations = require(doc, "annotations", "document");
    const auto& categories = require(doc, "categories", "document");
    if (!images.is_array() || !annotations.is_array() || !categories.is_array()) {
        throw DataError("document: images, annotations and categories must be arrays");
    }

    std::vector<std::int64_t> category_ids;
    for (const auto& c : categories) category_ids.push_back(require(c, "id", "category").get<std::int64_t>());
    std::sort(category_ids.begin(), category_ids.end());
    std::map<std::int64_t, int> remap;
    for (std::size_t n = 0; n < category_ids.size(); ++n) remap[category_ids[n]] = static_cast<int>(n + 1);

    std::vector<DatasetSample> samples;
    std::map<std::int64_t, std::size_t> by_id;
    for (const auto& im : images) {
        DatasetSample sample;
        sample.image_id = require(im, "id", "image").get<std::int64_t>();
        sample.file_name = require(im, "file_name", "image").get<std::string>();
        const auto path = images_dir / sample.file_name;
        if (!std::filesystem::exists(path)) {
            throw DataError("missing image file: " + path.string());
        }
        sample.image = read_png(path);
        if (im.contains("width") && im.contains("height")) {
            const auto w = im.at("width").get<std::size_t>(), h = im.at("height").get<std::size_t>();
            if (w != sample.image.width || h != sample.image.height) {
                throw DataError(path.string() + ": size differs from the document's width/height");
            }
        }
        by_id[sample.image_id] = samples.size();
        samples.push_back(std::move(sample));
    }

    for (const auto& ann : annotations) {
        const auto ann_id = ann.value("id", std::int64_t{0});
        const std::string where = "annotation " + std::to_string(ann_id);
        if (ann.value("iscrowd", 0) != 0) continue;
        const auto image_id = require(ann, "image_id", where).get<std::int64_t>();
        auto it = by_id.find(image_id);
        if (it == by_id.end()) throw DataError(where + ": unknown image_id " + std::to_string(image_id));
        const auto cat = require(ann, "category_id", where).get<std::int64_t>();
        auto cit = remap.find(cat);
        if (cit == remap.end()) throw DataError(where + ": unknown category_id " + std::to_string(cat));
        auto& sample = samples[it->second];

        InstanceAnnotation inst;
        inst.category = cit->second;
        inst.polygons = parse_segmentation(require(ann, "segmentation", where), ann_id);
        inst.mask = rasterize_polygons(inst.polygons, sample.image.height, sample.image.width);
        if (inst.mask.empty()) continue;  // degenerate outline, nothing to learn from
        sample.annotations.push_back(std::move(inst));
    }
    return samples;
}

std::string export_coco_annotations(const std::vector<DatasetSample>& samples,
                                    const std::vector<std::string>& category_names)
{
    json doc;
    doc["images"] = json::array();
    doc["annotations"] = json::array();
    doc["categories"] = json::array();
    for (std::size_t c = 0; c < category_names.size(); ++c) {
        doc["categories"].push_back({{"id", c + 1}, {"name", category_names[c]}});
    }
    std::int64_t ann_id = 1;
    for (const auto& s : samples) {
        doc["images"].push_back({{"id", s.image_id},
                                 {"file_name", s.file_name},
                                 {"width", s.image.width},
                                 {"height", s.image.height}});
        for (const auto& a : s.annotations) {
            json seg = json::array();
            double area = 0;
            for (const auto& poly : a.polygons) {
                json flat = json::array();
                for (const auto& p : poly) {
                    flat.push_back(p.x);
                    flat.push_back(p.y);
                }
                seg.push_back(std::move(flat));
                area += polygon_area(poly);
            }
            json bbox = json::array({0, 0, 0, 0});
            if (auto box = foreground_box(a.mask)) {
                bbox = json::array({box->x0, box->y0, box->width(), box->height()});
            }
            doc["annotations"].push_back({{"id", ann_id++},
                                          {"image_id", s.image_id},
                                          {"category_id", a.category},
                                          {"segmentation", std::move(seg)},
                                          {"area", area},
                                          {"bbox", std::move(bbox)},
                                          {"iscrowd", 0}});
        }
    }
    return doc.dump(1);
}

void save_dataset(const std::filesystem::path& dir, const std::vector<DatasetSample>& samples,
                  const std::vector<std::string>& category_names)
{
    std::filesystem::create_directories(dir / "images");
    for (const auto& s : samples) write_png(dir / "images" / s.file_name, s.image);
    std::ofstream out(dir / "annotations.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "annotations.json").string());
    out << export_coco_annotations(samples, category_names) << '\n';
}

std::vector<DatasetSample> load_dataset(const std::filesystem::path& dir)
{
    const auto path = dir / "annotations.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing annotation file: " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    return load_coco_annotations(text.str(), dir / "images");
}

}  // namespace solo
