#include "solo/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace solo {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

using nlohmann::json;

void TrainConfig::validate() const
{
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(base_lr > 0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
    if (!(lr_drop_factor >= 1)) throw ConfigError("lr_drop_factor must be at least 1");
    for (std::size_t n = 0; n < lr_drop_fractions.size(); ++n) {
        const double f = lr_drop_fractions[n];
        if (!(f > 0 && f < 1)) throw ConfigError("lr_drop_fractions must lie in (0, 1)");
        if (n > 0 && !(f > lr_drop_fractions[n - 1]))
            throw ConfigError("lr_drop_fractions must be strictly increasing");
    }
    if (!(grad_clip_norm >= 0)) throw ConfigError("grad_clip_norm must be non-negative");
    if (!(epsilon > 0 && epsilon <= 1)) throw ConfigError("epsilon must be in (0, 1]");
    if (image_size == 0 || image_size % 32 != 0) throw ConfigError("image_size must be a positive multiple of 32");
    loss.validate();
    model.validate();
    if (model.variant == HeadVariant::decoupled && loss.mask_loss != MaskLossKind::dice)
        throw ConfigError("the decoupled head is trained with the dice mask loss only");
    if (contours && loss.mask_loss != MaskLossKind::focal)
        throw ConfigError("contour mode is trained with the focal mask loss");
}

namespace {

json pyramid_json(const PyramidConfig& p, json& doc)
{
    json names = json::array(), strides = json::array(), grids = json::array(), lo = json::array(),
         hi = json::array();
    for (const auto& l : p.levels) {
        names.push_back(l.name);
        strides.push_back(l.stride);
        grids.push_back(l.grid);
        lo.push_back(l.scale_lo);
        hi.push_back(std::isinf(l.scale_hi) ? json(nullptr) : json(l.scale_hi));
    }
    doc["level_names"] = names;
    doc["level_strides"] = strides;
    doc["level_grids"] = grids;
    doc["level_scale_lo"] = lo;
    doc["level_scale_hi"] = hi;
    return doc;
}

json config_json(const TrainConfig& c)
{
    json doc{{"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"base_lr", c.base_lr},
             {"momentum", c.momentum},
             {"weight_decay", c.weight_decay},
             {"lr_drop_fractions", c.lr_drop_fractions},
             {"lr_drop_factor", c.lr_drop_factor},
             {"warmup_iters", c.warmup_iters},
             {"grad_clip_norm", c.grad_clip_norm},
             {"seed", c.seed},
             {"mask_loss", to_string(c.loss.mask_loss)},
             {"lambda", c.loss.lambda},
             {"focal_alpha", c.loss.focal_alpha},
             {"focal_gamma", c.loss.focal_gamma},
             {"bce_mask_weight", c.loss.bce_mask_weight},
             {"bce_pixel_weight", c.loss.bce_pixel_weight},
             {"focal_mask_weight", c.loss.focal_mask_weight},
             {"num_classes", c.model.num_classes},
             {"head_depth", c.model.head_depth},
             {"head_channels", c.model.head_channels},
             {"variant", to_string(c.model.variant)},
             {"coordconv_layers", c.model.coordconv_layers},
             {"mask_output_stride", c.model.mask_output_stride},
             {"backbone_channels", c.model.backbone_channels},
             {"fpn_channels", c.model.fpn_channels},
             {"epsilon", c.epsilon},
             {"contours", c.contours},
             {"train_data", c.train_data},
             {"val_data", c.val_data},
             {"image_size", c.image_size},
             {"val_every", c.val_every}};
    if (c.loss.mask_focal_alpha) doc["mask_focal_alpha"] = *c.loss.mask_focal_alpha;
    if (c.loss.mask_focal_gamma) doc["mask_focal_gamma"] = *c.loss.mask_focal_gamma;
    pyramid_json(c.model.pyramid, doc);
    return doc;
}

TrainConfig config_from(const json& doc)
{
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    TrainConfig c;
    using Setter = std::function<void(const json&)>;
    const std::map<std::string, Setter> setters{
        {"epochs", [&](const json& v) { c.epochs = v.get<std::size_t>(); }},
        {"batch_size", [&](const json& v) { c.batch_size = v.get<std::size_t>(); }},
        {"base_lr", [&](const json& v) { c.base_lr = v.get<double>(); }},
        {"momentum", [&](const json& v) { c.momentum = v.get<double>(); }},
        {"weight_decay", [&](const json& v) { c.weight_decay = v.get<double>(); }},
        {"lr_drop_fractions", [&](const json& v) { c.lr_drop_fractions = v.get<std::vector<double>>(); }},
        {"lr_drop_factor", [&](const json& v) { c.lr_drop_factor = v.get<double>(); }},
        {"warmup_iters", [&](const json& v) { c.warmup_iters = v.get<std::size_t>(); }},
        {"grad_clip_norm", [&](const json& v) { c.grad_clip_norm = v.get<double>(); }},
        {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
        {"mask_loss", [&](const json& v) { c.loss.mask_loss = mask_loss_kind_from_string(v.get<std::string>()); }},
        {"lambda", [&](const json& v) { c.loss.lambda = v.get<double>(); }},
        {"focal_alpha", [&](const json& v) { c.loss.focal_alpha = v.get<double>(); }},
        {"focal_gamma", [&](const json& v) { c.loss.focal_gamma = v.get<double>(); }},
        {"bce_mask_weight", [&](const json& v) { c.loss.bce_mask_weight = v.get<double>(); }},
        {"bce_pixel_weight", [&](const json& v) { c.loss.bce_pixel_weight = v.get<double>(); }},
        {"focal_mask_weight", [&](const json& v) { c.loss.focal_mask_weight = v.get<double>(); }},
        {"mask_focal_alpha", [&](const json& v) { c.loss.mask_focal_alpha = v.get<double>(); }},
        {"mask_focal_gamma", [&](const json& v) { c.loss.mask_focal_gamma = v.get<double>(); }},
        {"num_classes", [&](const json& v) { c.model.num_classes = v.get<std::size_t>(); }},
        {"head_depth", [&](const json& v) { c.model.head_depth = v.get<std::size_t>(); }},
        {"head_channels", [&](const json& v) { c.model.head_channels = v.get<std::size_t>(); }},
        {"variant", [&](const json& v) { c.model.variant = head_variant_from_string(v.get<std::string>()); }},
        {"coordconv_layers", [&](const json& v) { c.model.coordconv_layers = v.get<std::size_t>(); }},
        {"mask_output_stride", [&](const json& v) { c.model.mask_output_stride = v.get<std::size_t>(); }},
        {"backbone_channels", [&](const json& v) { c.model.backbone_channels = v.get<std::vector<std::size_t>>(); }},
        {"fpn_channels", [&](const json& v) { c.model.fpn_channels = v.get<std::size_t>(); }},
        {"epsilon", [&](const json& v) { c.epsilon = v.get<double>(); }},
        {"contours", [&](const json& v) { c.contours = v.get<bool>(); }},
        {"train_data", [&](const json& v) { c.train_data = v.get<std::string>(); }},
        {"val_data", [&](const json& v) { c.val_data = v.get<std::string>(); }},
        {"image_size", [&](const json& v) { c.image_size = v.get<std::size_t>(); }},
        {"val_every", [&](const json& v) { c.val_every = v.get<std::size_t>(); }},
    };
    static const std::vector<std::string> pyramid_keys{"pyramid",       "single_level_stride", "single_level_grid",
                                                       "level_names",   "level_strides",       "level_grids",
                                                       "level_scale_lo", "level_scale_hi"};
    for (const auto& [key, value] : doc.items()) {
        if (std::find(pyramid_keys.begin(), pyramid_keys.end(), key) != pyramid_keys.end()) continue;
        auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("unknown config key \"" + key + "\"");
        try {
            it->second(value);
        } catch (const json::exception& e) {
            throw ConfigError("config key \"" + key + "\": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw ConfigError("config key \"" + key + "\": " + e.what());
        }
    }

    try {
        if (doc.contains("pyramid")) {
            const auto kind = doc["pyramid"].get<std::string>();
            if (kind == "five_level") {
                c.model.pyramid = PyramidConfig::five_level();
            } else if (kind == "single_level") {
                c.model.pyramid = PyramidConfig::single_level(doc.value("single_level_stride", std::size_t{8}),
                                                              doc.value("single_level_grid", std::size_t{12}));
            } else {
                throw ConfigError("pyramid must be \"five_level\" or \"single_level\", got \"" + kind + "\"");
            }
        }
        if (doc.contains("level_grids")) {
            const auto grids = doc["level_grids"].get<std::vector<std::size_t>>();
            const auto strides = doc.at("level_strides").get<std::vector<std::size_t>>();
            const auto lo = doc.at("level_scale_lo").get<std::vector<double>>();
            const auto& hi = doc.at("level_scale_hi");
            const std::size_t n = grids.size();
            if (strides.size() != n || lo.size() != n || hi.size() != n)
                throw ConfigError("level_* arrays must have equal lengths");
            std::vector<std::string> names;
            if (doc.contains("level_names")) names = doc["level_names"].get<std::vector<std::string>>();
            PyramidConfig p;
            for (std::size_t l = 0; l < n; ++l) {
                GridSpec g;
                g.name = l < names.size() ? names[l] : "L" + std::to_string(l);
                g.stride = strides[l];
                g.grid = grids[l];
                g.scale_lo = lo[l];
                g.scale_hi = hi[l].is_null() ? std::numeric_limits<double>::infinity() : hi[l].get<double>();
                p.levels.push_back(g);
            }
            c.model.pyramid = p;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("pyramid keys: ") + e.what());
    }
    return c;
}

template <typename V>
void put_le(std::string& out, V value)
{
    char buf[sizeof(V)];
    std::memcpy(buf, &value, sizeof(V));
    out.append(buf, sizeof(V));
}

template <typename V>
V get_le(const std::string& in, std::size_t offset)
{
    V value;
    std::memcpy(&value, in.data() + offset, sizeof(V));
    return value;
}

constexpr char kMagic[8] = {'S', 'O', 'L', 'O', 'C', 'K', 'P', 'T'};

}  // namespace

TrainConfig train_config_from_json(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from(doc);
}

std::string to_json(const TrainConfig& config) { return config_json(config).dump(2); }

double lr_at(std::size_t epoch, const TrainConfig& config)
{
    double lr = config.base_lr;
    for (double f : config.lr_drop_fractions) {
        const auto drop_epoch = static_cast<std::size_t>(std::llround(f * static_cast<double>(config.epochs)));
        if (epoch >= drop_epoch) lr /= config.lr_drop_factor;
    }
    return lr;
}

void sgd_step(ModelWeights<float>& weights, SgdState& state, double lr, double momentum, double weight_decay)
{
    for (const auto& [name, w] : weights) {
        if (!w.has_grad()) throw std::invalid_argument("sgd_step: parameter " + name + " has no gradient");
    }
    const float flr = static_cast<float>(lr), fm = static_cast<float>(momentum),
                fwd = static_cast<float>(weight_decay);
    for (auto& [name, w] : weights) {
        auto values = w.mutable_data();
        const auto grad = w.grad();
        auto& v = state[name];
        if (v.size() != values.size()) v.assign(values.size(), 0.0f);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const float decay = fwd * values[i];
            v[i] = fm * v[i] + grad[i] + decay;
            const float step = flr * v[i];
            values[i] = values[i] - step;
        }
    }
}

std::string serialize_checkpoint(const Checkpoint& ck)
{
    json manifest = json::array();
    std::string payload;
    for (const auto& [name, t] : ck.weights) {
        json entry{{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}};
        for (float v : t.data()) put_le(payload, v);
        manifest.push_back(entry);
    }
    for (auto& entry : manifest) {
        const auto& name = entry["name"].get_ref<const std::string&>();
        auto it = ck.momentum.find(name);
        if (it == ck.momentum.end()) {
            entry["momentum_offset"] = nullptr;
            continue;
        }
        if (it->second.size() != ck.weights.at(name).size())
            throw std::invalid_argument("momentum buffer for " + name + " has the wrong size");
        entry["momentum_offset"] = payload.size();
        for (float v : it->second) put_le(payload, v);
    }
    const json meta{{"config", config_json(ck.config)}, {"epoch", ck.epoch}, {"parameters", manifest}};
    const std::string text = meta.dump();
    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    out += payload;
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const ModelConfig* expected)
{
    using K = CheckpointError::Kind;
    const std::size_t magic_len = sizeof(kMagic);
    if (bytes.size() < magic_len) {
        if (bytes.compare(0, bytes.size(), kMagic, bytes.size()) == 0)
            throw CheckpointError(K::truncated, "checkpoint truncated inside the magic");
        throw CheckpointError(K::bad_magic, "not a checkpoint (bad magic)");
    }
    if (bytes.compare(0, magic_len, kMagic, magic_len) != 0)
        throw CheckpointError(K::bad_magic, "not a checkpoint (bad magic)");
    if (bytes.size() < magic_len + 4) throw CheckpointError(K::truncated, "checkpoint truncated before the version");
    const auto version = get_le<std::uint32_t>(bytes, magic_len);
    if (version != kCheckpointVersion)
        throw CheckpointError(K::unsupported_version, "unsupported checkpoint version " + std::to_string(version));
    if (bytes.size() < magic_len + 12)
        throw CheckpointError(K::truncated, "checkpoint truncated before the metadata length");
    const auto meta_len = get_le<std::uint64_t>(bytes, magic_len + 4);
    const std::size_t meta_start = magic_len + 12;
    if (meta_len > bytes.size() - meta_start) throw CheckpointError(K::truncated, "checkpoint metadata truncated");
    const std::size_t payload_start = meta_start + meta_len;

    Checkpoint ck;
    std::vector<std::tuple<std::string, Shape, std::size_t, std::optional<std::size_t>>> entries;
    try {
        const json meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(meta_start),
                                      bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
        ck.config = config_from(meta.at("config"));
        ck.epoch = meta.at("epoch").get<std::size_t>();
        for (const auto& e : meta.at("parameters")) {
            std::optional<std::size_t> mom;
            if (!e.at("momentum_offset").is_null()) mom = e["momentum_offset"].get<std::size_t>();
            entries.emplace_back(e.at("name").get<std::string>(), e.at("shape").get<Shape>(),
                                 e.at("offset").get<std::size_t>(), mom);
        }
    } catch (const json::exception& e) {
        throw CheckpointError(K::corrupt_header, std::string("corrupt checkpoint metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(K::corrupt_header, std::string("corrupt checkpoint config: ") + e.what());
    }

    const auto shapes = parameter_shapes(expected ? *expected : ck.config.model);
    for (const auto& [name, shape, offset, mom] : entries) {
        auto it = shapes.find(name);
        if (it == shapes.end()) throw CheckpointError(K::shape_mismatch, "checkpoint has unexpected tensor " + name);
        if (it->second != shape) {
            throw CheckpointError(K::shape_mismatch, "tensor " + name + " has shape " + shape_string(shape) +
                                                         ", config expects " + shape_string(it->second));
        }
    }
    for (const auto& [name, shape] : shapes) {
        if (std::none_of(entries.begin(), entries.end(), [&](const auto& e) { return std::get<0>(e) == name; }))
            throw CheckpointError(K::shape_mismatch, "checkpoint lacks tensor " + name);
    }

    const std::size_t payload_size = bytes.size() - payload_start;
    std::size_t expected_size = 0;
    auto read_floats = [&](const std::string& name, std::size_t offset, std::size_t count) {
        if (offset > payload_size || count * 4 > payload_size - offset)
            throw CheckpointError(K::truncated, "checkpoint payload truncated in tensor " + name);
        std::vector<float> v(count);
        std::memcpy(v.data(), bytes.data() + payload_start + offset, count * 4);
        expected_size = std::max(expected_size, offset + count * 4);
        return v;
    };
    for (const auto& [name, shape, offset, mom] : entries) {
        const std::size_t count = numel(shape);
        ck.weights.emplace(name, Tensor<float>(shape, read_floats(name, offset, count), true));
        if (mom) ck.momentum.emplace(name, read_floats(name, *mom, count));
    }
    if (expected_size != payload_size)
        throw CheckpointError(K::corrupt_header, "checkpoint has " + std::to_string(payload_size - expected_size) +
                                                     " unexpected trailing bytes");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint)
{
    const auto bytes = serialize_checkpoint(checkpoint);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("failed writing " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str(), expected);
}

std::string to_json_line(const EpochMetrics& m)
{
    json j{{"epoch", m.epoch},
           {"lr", m.lr},
           {"loss", m.loss},
           {"category_loss", m.category_loss},
           {"mask_loss", m.mask_loss},
           {"batches", m.batches}};
    if (m.val_ap) j["val_ap"] = *m.val_ap;
    if (m.val_ap50) j["val_ap50"] = *m.val_ap50;
    return j.dump();
}

EvalResult evaluate_model(const SoloModel<float>& model, const std::vector<DatasetSample>& samples,
                          const EvalOptions& options)
{
    InferenceConfig ic = options.inference;
    if (options.contours) ic.upsample_to_image = false;
    std::vector<std::vector<Detection>> preds;
    std::vector<std::vector<InstanceAnnotation>> gts;
    for (const auto& s : samples) {
        gts.push_back(s.annotations);
        if (options.contours) {
            for (auto& a : gts.back())
                a.mask = extract_contour(downsample_mask(a.mask, model.config().mask_output_stride));
        }
        auto dets = run_inference(model, s.image, ic);
        if (options.error_analysis) dets = error_analysis(std::move(dets), gts.back());
        preds.push_back(std::move(dets));
    }
    return evaluate(preds, gts);
}

std::vector<DatasetSample> prepare_samples(std::vector<DatasetSample> samples, std::size_t size)
{
    for (auto& s : samples) s = resize_sample(s, size);
    return samples;
}

namespace {

std::vector<DatasetSample> load_split(const std::vector<DatasetSample>* given, const std::string& path,
                                      std::size_t size, const char* what)
{
    if (given) return prepare_samples(*given, size);
    if (path.empty()) throw ConfigError(std::string("no ") + what + " dataset given");
    return prepare_samples(load_dataset(path), size);
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainOptions& options)
{
    config.validate();
    const auto train_set = load_split(options.train_samples, config.train_data, config.image_size, "training");
    if (train_set.empty()) throw DataError("training dataset is empty");
    std::vector<DatasetSample> val_set;
    const bool validating =
        config.val_every > 0 && (options.val_samples != nullptr || !config.val_data.empty());
    if (validating) val_set = load_split(options.val_samples, config.val_data, config.image_size, "validation");

    TargetOptions topt;
    topt.epsilon = config.epsilon;
    topt.mask_stride = config.model.mask_output_stride;
    topt.contours = config.contours;
    std::vector<TrainingTargets> targets;
    targets.reserve(train_set.size());
    for (const auto& s : train_set) {
        for (const auto& a : s.annotations) {
            if (a.category < 1 || static_cast<std::size_t>(a.category) > config.model.num_classes) {
                throw DataError("sample " + std::to_string(s.image_id) + " has category " +
                                std::to_string(a.category) + " outside 1.." +
                                std::to_string(config.model.num_classes));
            }
        }
        targets.push_back(build_targets(s.annotations, config.model.pyramid, config.image_size, config.image_size, topt));
    }

    TrainResult result;
    Checkpoint& state = result.checkpoint;
    if (options.resume) {
        state = *options.resume;
        state.weights = convert_weights<float>(options.resume->weights);
        state.config = config;
    } else {
        state.config = config;
        state.weights = init_weights<float>(config.model, config.seed);
    }
    SoloModel<float> model(config.model, state.weights);
    auto& weights = model.weights();

    const std::size_t n = train_set.size();
    const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
    std::size_t iteration = state.epoch * batches;
    std::ofstream metrics_out;
    if (!options.metrics_path.empty()) {
        metrics_out.open(options.metrics_path, options.resume ? std::ios::app : std::ios::trunc);
        if (!metrics_out) throw DataError("cannot write metrics to " + options.metrics_path.string());
    }

    for (std::size_t epoch = state.epoch; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(config.seed * 1000003ULL + epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr_at(epoch, config);
        for (std::size_t b = 0; b < batches; ++b) {
            for (auto& [name, w] : weights) w.zero_grad();
            std::vector<std::vector<LevelOutput<float>>> outputs;
            std::vector<TrainingTargets> batch_targets;
            for (std::size_t k = b * config.batch_size; k < std::min(n, (b + 1) * config.batch_size); ++k) {
                const auto& s = train_set[order[k]];
                outputs.push_back(model.forward(Tensor<float>({3, s.image.height, s.image.width}, s.image.pixels), false));
                batch_targets.push_back(targets[order[k]]);
            }
            const auto terms = solo_loss<float>(model, outputs, batch_targets, config.loss);
            const double loss = terms.total.item();
            if (!std::isfinite(loss)) {
                clear_tape<float>();
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b));
            }
            backward(terms.total);
            // Output convolutions of levels without positives in this batch
            // get no mask gradient.
            for (auto& [name, w] : weights) {
                if (!w.has_grad() && name.rfind("head.mask.out", 0) == 0)
                    w.accumulate_grad(std::vector<float>(w.size(), 0.0f));
            }
            if (config.grad_clip_norm > 0) {
                double sq = 0;
                for (const auto& [name, w] : weights)
                    if (w.has_grad())
                        for (float g : w.grad()) sq += double(g) * double(g);
                const double norm = std::sqrt(sq);
                if (!std::isfinite(norm))
                    throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(b));
                if (norm > config.grad_clip_norm) {
                    const float s = static_cast<float>(config.grad_clip_norm / norm);
                    for (auto& [name, w] : weights) {
                        if (!w.has_grad()) continue;
                        std::vector<float> scaled(w.grad().begin(), w.grad().end());
                        for (auto& g : scaled) g *= s;
                        w.zero_grad();
                        w.accumulate_grad(scaled);
                    }
                }
            }
            double lr = m.lr;
            if (iteration < config.warmup_iters) {
                const double t = static_cast<double>(iteration) / static_cast<double>(config.warmup_iters);
                lr *= (1.0 + 2.0 * t) / 3.0;
            }
            sgd_step(weights, state.momentum, lr, config.momentum, config.weight_decay);
            ++iteration;
            m.loss += loss;
            m.category_loss += terms.category.item();
            m.mask_loss += terms.mask.item();
            ++m.batches;
        }
        m.loss /= double(m.batches);
        m.category_loss /= double(m.batches);
        m.mask_loss /= double(m.batches);
        for (auto& [name, w] : weights) w.zero_grad();
        state.epoch = epoch + 1;
        state.weights = weights;

        if (validating && (state.epoch % config.val_every == 0 || state.epoch == config.epochs)) {
            EvalOptions eo;
            eo.contours = config.contours;
            const auto r = evaluate_model(model, val_set, eo);
            m.val_ap = r.ap;
            m.val_ap50 = r.ap50;
        }
        result.metrics.push_back(m);
        if (metrics_out) metrics_out << to_json_line(m) << '\n' << std::flush;
        if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, state);
        if (options.on_epoch) options.on_epoch(m);
        if (options.stop_after && state.epoch >= *options.stop_after) break;
    }
    state.weights = weights;
    return result;
}

}  // namespace solo
