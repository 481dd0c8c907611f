#include "solo/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace solo {

namespace {

constexpr double kSmall = 32.0 * 32.0;
constexpr double kMedium = 96.0 * 96.0;

struct AreaRange {
    double lo = 0;
    double hi = std::numeric_limits<double>::infinity();
    bool contains(double a) const { return a >= lo && a < hi; }
};

struct Scored {
    double score;
    bool tp;
};

// COCO-style matching: GTs outside the area range are ignored; a detection
// matched to an ignored GT, or unmatched and itself outside the range, does
// not count either way. Ties in IoU keep the earlier GT.
void match_image(const std::vector<const Detection*>& dets, const std::vector<const InstanceAnnotation*>& gts,
                 double thr, const AreaRange& range, std::vector<Scored>& out, std::size_t& num_gt)
{
    std::vector<const InstanceAnnotation*> ordered;
    std::vector<bool> ignored;
    for (bool want_ignored : {false, true}) {
        for (const auto* g : gts) {
            const bool ig = !range.contains(static_cast<double>(g->mask.area()));
            if (ig != want_ignored) continue;
            ordered.push_back(g);
            ignored.push_back(ig);
        }
    }
    num_gt += static_cast<std::size_t>(std::count(ignored.begin(), ignored.end(), false));
    std::vector<bool> taken(ordered.size(), false);
    for (const auto* d : dets) {
        std::ptrdiff_t best = -1;
        double best_iou = thr;
        for (std::size_t g = 0; g < ordered.size(); ++g) {
            if (taken[g]) continue;
            if (best >= 0 && !ignored[static_cast<std::size_t>(best)] && ignored[g]) break;
            const double iou = mask_iou(d->mask, ordered[g]->mask);
            if (iou < best_iou || (best >= 0 && iou == best_iou)) continue;
            best_iou = iou;
            best = static_cast<std::ptrdiff_t>(g);
        }
        if (best >= 0) {
            taken[static_cast<std::size_t>(best)] = true;
            if (!ignored[static_cast<std::size_t>(best)]) out.push_back({d->score, true});
        } else if (range.contains(static_cast<double>(d->mask.area()))) {
            out.push_back({d->score, false});
        }
    }
}

// AP of one category at one threshold over the whole dataset, or nullopt when
// the category has no GT inside the range.
std::optional<double> category_ap(const std::vector<std::vector<Detection>>& predictions,
                                  const std::vector<std::vector<InstanceAnnotation>>& gts, int category,
                                  double thr, const AreaRange& range)
{
    std::vector<Scored> all;
    std::size_t num_gt = 0;
    for (std::size_t n = 0; n < gts.size(); ++n) {
        std::vector<const Detection*> dets;
        if (n < predictions.size()) {
            for (const auto& d : predictions[n])
                if (d.category == category) dets.push_back(&d);
        }
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection* a, const Detection* b) { return a->score > b->score; });
        std::vector<const InstanceAnnotation*> g;
        for (const auto& a : gts[n])
            if (a.category == category) g.push_back(&a);
        match_image(dets, g, thr, range, all, num_gt);
    }
    if (num_gt == 0) return std::nullopt;
    std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
    std::vector<bool> flags;
    for (const auto& s : all) flags.push_back(s.tp);
    return average_precision(flags, num_gt);
}

std::set<int> gt_categories(const std::vector<std::vector<InstanceAnnotation>>& gts)
{
    std::set<int> cats;
    for (const auto& image : gts)
        for (const auto& a : image) cats.insert(a.category);
    return cats;
}

double iou_threshold(int t) { return static_cast<double>(50 + 5 * t) / 100.0; }

// Mean over categories and the ten thresholds.
std::optional<double> mean_ap(const std::vector<std::vector<Detection>>& predictions,
                              const std::vector<std::vector<InstanceAnnotation>>& gts, const AreaRange& range,
                              std::map<int, double>* per_category = nullptr)
{
    double total = 0;
    std::size_t count = 0;
    for (int c : gt_categories(gts)) {
        double cat_total = 0;
        bool present = false;
        for (int t = 0; t < 10; ++t) {
            auto ap = category_ap(predictions, gts, c, iou_threshold(t), range);
            if (!ap) break;
            present = true;
            cat_total += *ap;
        }
        if (!present) continue;
        if (per_category) (*per_category)[c] = cat_total / 10.0;
        total += cat_total / 10.0;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return total / static_cast<double>(count);
}

}  // namespace

MatchResult match_detections(const std::vector<const BinaryMask*>& detections,
                             const std::vector<const BinaryMask*>& gts, double iou_threshold)
{
    MatchResult r;
    std::vector<bool> taken(gts.size(), false);
    for (const auto* d : detections) {
        std::ptrdiff_t best = -1;
        double best_iou = 0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double iou = mask_iou(*d, *gts[g]);
            if (iou >= iou_threshold && (best < 0 || iou > best_iou)) {
                best = static_cast<std::ptrdiff_t>(g);
                best_iou = iou;
            }
        }
        if (best >= 0) taken[static_cast<std::size_t>(best)] = true;
        r.true_positive.push_back(best >= 0);
    }
    r.unmatched_gt = static_cast<std::size_t>(std::count(taken.begin(), taken.end(), false));
    return r;
}

double average_precision(const std::vector<bool>& sorted_flags, std::size_t num_gt)
{
    if (num_gt == 0 || sorted_flags.empty()) return 0.0;
    const std::size_t n = sorted_flags.size();
    std::vector<double> recall(n), precision(n);
    std::size_t tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        tp += sorted_flags[k] ? 1 : 0;
        recall[k] = static_cast<double>(tp) / static_cast<double>(num_gt);
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    for (std::size_t k = n - 1; k-- > 0;) precision[k] = std::max(precision[k], precision[k + 1]);
    double sum = 0;
    std::size_t k = 0;
    for (int r = 0; r <= 100; ++r) {
        const double level = static_cast<double>(r) / 100.0;
        while (k < n && recall[k] < level - 1e-12) ++k;
        if (k == n) break;
        sum += precision[k];
    }
    return sum / 101.0;
}

EvalResult evaluate(const std::vector<std::vector<Detection>>& predictions,
                    const std::vector<std::vector<InstanceAnnotation>>& gts)
{
    EvalResult r;
    r.num_images = gts.size();
    for (const auto& image : gts) r.num_gt += image.size();
    for (const auto& image : predictions) r.num_detections += image.size();

    const AreaRange all;
    r.ap = mean_ap(predictions, gts, all, &r.per_category).value_or(0.0);
    auto at = [&](double thr) {
        double total = 0;
        std::size_t count = 0;
        for (int c : gt_categories(gts)) {
            if (auto ap = category_ap(predictions, gts, c, thr, all)) {
                total += *ap;
                ++count;
            }
        }
        return count == 0 ? 0.0 : total / static_cast<double>(count);
    };
    r.ap50 = at(0.5);
    r.ap75 = at(0.75);
    r.ap25 = at(0.25);
    r.ap_small = mean_ap(predictions, gts, {0, kSmall});
    r.ap_medium = mean_ap(predictions, gts, {kSmall, kMedium});
    r.ap_large = mean_ap(predictions, gts, {kMedium, std::numeric_limits<double>::infinity()});
    return r;
}

double evaluate_at_iou(const std::vector<std::vector<Detection>>& predictions,
                       const std::vector<std::vector<InstanceAnnotation>>& gts, double iou_threshold)
{
    double total = 0;
    std::size_t count = 0;
    for (int c : gt_categories(gts)) {
        if (auto ap = category_ap(predictions, gts, c, iou_threshold, AreaRange{})) {
            total += *ap;
            ++count;
        }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::vector<Detection> error_analysis(std::vector<Detection> detections, const std::vector<InstanceAnnotation>& gts)
{
    for (auto& d : detections) {
        const InstanceAnnotation* best = nullptr;
        double best_iou = 0;
        for (const auto& g : gts) {
            const double iou = mask_iou(d.mask, g.mask);
            if (iou > best_iou) {
                best_iou = iou;
                best = &g;
            }
        }
        if (best) d.mask = best->mask;
    }
    return detections;
}

std::string to_json(const EvalResult& r, const std::vector<std::string>& category_names)
{
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json per = json::object();
    for (const auto& [c, ap] : r.per_category) {
        const auto idx = static_cast<std::size_t>(c - 1);
        per[idx < category_names.size() ? category_names[idx] : std::to_string(c)] = ap;
    }
    json doc{{"AP", r.ap},
             {"AP50", r.ap50},
             {"AP75", r.ap75},
             {"AP25", r.ap25},
             {"APs", opt(r.ap_small)},
             {"APm", opt(r.ap_medium)},
             {"APl", opt(r.ap_large)},
             {"per_category", per},
             {"num_images", r.num_images},
             {"num_gt", r.num_gt},
             {"num_detections", r.num_detections}};
    return doc.dump(2);
}

std::string to_key_value(const EvalResult& r)
{
    std::ostringstream out;
    auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("n/a"); };
    out << "AP: " << r.ap << '\n'
        << "AP50: " << r.ap50 << '\n'
        << "AP75: " << r.ap75 << '\n'
        << "AP25: " << r.ap25 << '\n'
        << "APs: " << opt(r.ap_small) << '\n'
        << "APm: " << opt(r.ap_medium) << '\n'
        << "APl: " << opt(r.ap_large) << '\n';
    for (const auto& [c, ap] : r.per_category) out << "AP[" << c << "]: " << ap << '\n';
    return out.str();
}

}  // namespace solo
