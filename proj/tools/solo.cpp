// Command-line front end: gen-data, train, eval, infer.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "solo/data.hpp"
#include "solo/evaluation.hpp"
#include "solo/harness.hpp"
#include "solo/inference.hpp"

using namespace solo;
using nlohmann::json;

namespace {

enum Exit { ok = 0, config_error = 1, data_error = 2, numeric_error = 3 };

std::string read_text(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

// `key=value` overrides; the value is parsed as JSON, falling back to a string.
std::string apply_overrides(const std::string& config_text, const std::vector<std::string>& sets)
{
    json doc;
    try {
        doc = config_text.empty() ? json::object() : json::parse(config_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + s + "\"");
        const auto key = s.substr(0, eq), value = s.substr(eq + 1);
        try {
            doc[key] = json::parse(value);
        } catch (const json::parse_error&) {
            doc[key] = value;
        }
    }
    return doc.dump();
}

SoloModel<float> load_model(const std::string& path)
{
    const auto ck = load_checkpoint(path);
    return SoloModel<float>(ck.config.model, ck.weights);
}

// Tints each detection's mask with a per-category color at 50% opacity.
Image overlay(const Image& image, const std::vector<Detection>& dets)
{
    static const float colors[][3] = {{0.9f, 0.2f, 0.2f}, {0.2f, 0.8f, 0.2f}, {0.2f, 0.4f, 0.95f},
                                      {0.9f, 0.8f, 0.1f}, {0.8f, 0.2f, 0.8f}, {0.1f, 0.8f, 0.8f}};
    Image out = image;
    const std::size_t plane = image.height * image.width;
    for (const auto& d : dets) {
        if (d.mask.height != image.height || d.mask.width != image.width) continue;
        const auto* c = colors[static_cast<std::size_t>(d.category - 1) % 6];
        for (std::size_t p = 0; p < plane; ++p) {
            if (!d.mask.bits[p]) continue;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                float& v = out.pixels[ch * plane + p];
                v = 0.5f * v + 0.5f * c[ch];
            }
        }
    }
    return out;
}

int run(int argc, char** argv)
{
    CLI::App app{"SOLO instance segmentation: data generation, training, evaluation, inference"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic shapes dataset");
    std::string gen_out, gen_config;
    std::size_t gen_count = 100;
    SynthConfig synth;
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_option("--count", gen_count, "Number of images");
    gen->add_option("--config", gen_config, "JSON file with SynthConfig fields");
    gen->add_option("--seed", synth.seed, "Generator seed");
    gen->add_option("--image-size", synth.image_size, "Square image side in px");
    gen->add_option("--min-instances", synth.min_instances);
    gen->add_option("--max-instances", synth.max_instances);
    gen->add_option("--min-size", synth.min_size, "Smallest shape extent in px");
    gen->add_option("--max-size", synth.max_size, "Largest shape extent in px");
    gen->add_option("--max-iou", synth.max_pairwise_iou, "Largest pairwise IoU of full shapes");

    // train
    auto* tr = app.add_subcommand("train", "Train a model from a config file");
    std::string tr_config, tr_out, tr_metrics, tr_resume;
    std::vector<std::string> tr_sets;
    tr->add_option("--config", tr_config, "Flat JSON config")->required();
    tr->add_option("--set", tr_sets, "Override a config key (key=value)");
    tr->add_option("--out", tr_out, "Checkpoint path")->required();
    tr->add_option("--metrics", tr_metrics, "Per-epoch metrics (JSON lines)");
    tr->add_option("--resume", tr_resume, "Checkpoint to continue from");

    // eval
    auto* ev = app.add_subcommand("eval", "Mask AP of a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_out;
    bool ev_error = false, ev_contours = false, ev_kv = false;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--out", ev_out, "Write the JSON report here instead of stdout");
    ev->add_flag("--error-analysis", ev_error, "Replace predicted masks with the most overlapping GT masks");
    ev->add_flag("--contours", ev_contours, "Score contour predictions at mask resolution");
    ev->add_flag("--key-value", ev_kv, "Print key: value lines instead of JSON");

    // infer
    auto* inf = app.add_subcommand("infer", "Detections for one or more PNG images");
    std::string inf_ckpt, inf_out, inf_overlay;
    std::vector<std::string> inf_images;
    InferenceConfig icfg;
    inf->add_option("--checkpoint", inf_ckpt)->required();
    inf->add_option("images", inf_images, "PNG files")->required();
    inf->add_option("--out", inf_out, "Detections JSON (stdout when omitted)");
    inf->add_option("--overlay", inf_overlay, "Directory for <name>.overlay.png renderings");
    inf->add_option("--conf", icfg.conf_threshold, "Class score threshold");
    inf->add_option("--nms-iou", icfg.nms_iou, "Mask IoU above which NMS suppresses");
    inf->add_option("--max-detections", icfg.max_detections);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    if (gen->parsed()) {
        if (!gen_config.empty()) {
            const auto doc = json::parse(read_text(gen_config));
            for (const auto& [key, value] : doc.items()) {
                if (key == "image_size") synth.image_size = value.get<std::size_t>();
                else if (key == "min_instances") synth.min_instances = value.get<std::size_t>();
                else if (key == "max_instances") synth.max_instances = value.get<std::size_t>();
                else if (key == "min_size") synth.min_size = value.get<double>();
                else if (key == "max_size") synth.max_size = value.get<double>();
                else if (key == "max_pairwise_iou") synth.max_pairwise_iou = value.get<double>();
                else if (key == "min_visible_area") synth.min_visible_area = value.get<std::size_t>();
                else if (key == "seed") synth.seed = value.get<std::uint64_t>();
                else throw ConfigError("unknown synthetic config key \"" + key + "\"");
            }
        }
        if (gen_count == 0) throw ConfigError("--count must be at least 1");
        synth.validate();
        const auto samples = generate_synthetic(synth, gen_count);
        save_dataset(gen_out, samples, synthetic_category_names());
        std::cerr << "wrote " << samples.size() << " images to " << gen_out << '\n';
        return ok;
    }

    if (tr->parsed()) {
        const auto cfg = train_config_from_json(apply_overrides(read_text(tr_config), tr_sets));
        TrainOptions opt;
        opt.checkpoint_path = tr_out;
        opt.metrics_path = tr_metrics;
        Checkpoint resume;
        if (!tr_resume.empty()) {
            resume = load_checkpoint(tr_resume, &cfg.model);
            opt.resume = &resume;
        }
        opt.on_epoch = [&](const EpochMetrics& m) { std::cerr << to_json_line(m) << '\n'; };
        train(cfg, opt);
        return ok;
    }

    if (ev->parsed()) {
        const auto ck = load_checkpoint(ev_ckpt);
        const SoloModel<float> model(ck.config.model, ck.weights);
        const auto samples = prepare_samples(load_dataset(ev_data), ck.config.image_size);
        EvalOptions eo;
        eo.error_analysis = ev_error;
        eo.contours = ev_contours;
        const auto r = evaluate_model(model, samples, eo);
        const auto text = ev_kv ? to_key_value(r) : to_json(r, synthetic_category_names()) + "\n";
        if (ev_out.empty()) std::cout << text;
        else write_text(ev_out, text);
        return ok;
    }

    if (inf->parsed()) {
        const auto model = load_model(inf_ckpt);
        json doc = json::array();
        for (const auto& path : inf_images) {
            const auto image = read_png(path);
            if (image.height % 32 != 0 || image.width % 32 != 0) {
                throw DataError(path + ": image sides must be multiples of 32, got " + std::to_string(image.width) +
                                "x" + std::to_string(image.height));
            }
            const auto dets = run_inference(model, image, icfg);
            json list = json::array();
            for (const auto& d : dets) {
                json runs = json::array();
                for (const auto& [start, len] : foreground_runs(d.mask)) runs.push_back({start, len});
                list.push_back({{"category", d.category},
                                {"score", d.score},
                                {"maskness", d.maskness},
                                {"mask", runs},
                                {"size", {d.mask.height, d.mask.width}}});
            }
            doc.push_back({{"image", path}, {"size", {image.height, image.width}}, {"detections", list}});
            if (!inf_overlay.empty()) {
                std::filesystem::create_directories(inf_overlay);
                const auto name = std::filesystem::path(path).stem().string() + ".overlay.png";
                write_png(std::filesystem::path(inf_overlay) / name, overlay(image, dets));
            }
        }
        if (inf_out.empty()) std::cout << doc.dump(2) << '\n';
        else write_text(inf_out, doc.dump(2) + "\n");
        return ok;
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return numeric_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return data_error;
    }
}
