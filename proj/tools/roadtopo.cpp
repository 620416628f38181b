// roadtopo CLI: synthetic benchmark generation, skeletonization, pseudo-label
// selection and refinement, loss evaluation, metrics, round-0 training, the
// full adaptation protocol, and a config-driven end-to-end pipeline.
//
// Exit codes: 0 success, 2 usage/config error, 3 format or I/O error,
// 4 numerical failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "roadtopo/adapt.hpp"
#include "roadtopo/io.hpp"
#include "roadtopo/loss.hpp"
#include "roadtopo/metrics.hpp"
#include "roadtopo/model.hpp"
#include "roadtopo/pseudo.hpp"
#include "roadtopo/raster.hpp"
#include "roadtopo/skeleton.hpp"
#include "roadtopo/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roadtopo;

namespace {

std::string tile_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "tile_%04d", index);
    return buf;
}

// Every command that writes files drops a manifest beside them: the config,
// the seed, and an FNV-1a 64 content hash per output, with paths relative to
// the manifest so reruns in different roots stay comparable.
void write_manifest(const fs::path& manifest_path, const std::string& tool, const json& config,
                    std::uint64_t seed, const std::vector<fs::path>& outputs) {
    json m;
    m["tool"] = tool;
    m["config"] = config;
    m["seed"] = seed;
    m["outputs"] = json::array();
    for (const fs::path& p : outputs) {
        m["outputs"].push_back(json{
            {"path", fs::relative(p, manifest_path.parent_path()).generic_string()},
            {"fnv1a64", hex64(hash_file(p))},
        });
    }
    write_file_atomic(manifest_path, m.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<Tile> load_tiles(const fs::path& dir) {
    std::vector<Tile> tiles;
    for (int i = 0;; ++i) {
        const fs::path image = dir / (tile_stem(i) + "_image.f32r");
        if (!fs::exists(image)) break;
        Tile t;
        t.image = read_raster(image);
        t.gt_mask = read_mask(dir / (tile_stem(i) + "_mask.pgm"));
        require_same_dims(t.image.dims, t.gt_mask.dims, (tile_stem(i) + " mask").c_str());
        const fs::path skel = dir / (tile_stem(i) + "_skel.pgm");
        if (fs::exists(skel)) {
            t.gt_skeleton = read_mask(skel);
            require_same_dims(t.image.dims, t.gt_skeleton.dims,
                              (tile_stem(i) + " skeleton").c_str());
        } else {
            t.gt_skeleton = skeletonize(t.gt_mask);
        }
        tiles.push_back(std::move(t));
    }
    if (tiles.empty()) throw IoError("no tiles found in " + dir.string());
    return tiles;
}

json metrics_to_json(const MetricReport& r) {
    return json{{"iou", r.iou}, {"f1", r.f1}, {"apls", r.apls}};
}

json report_to_json(const LossReport& r) {
    return json{{"seg_src", r.seg_src},         {"seg_tgt", r.seg_tgt},
                {"skel_src", r.skel_src},       {"skel_tgt", r.skel_tgt},
                {"conformity", r.conformity},   {"adversarial", r.adversarial},
                {"discriminator", r.discriminator}, {"composite", r.composite},
                {"total", r.total}};
}

// --- config helpers (shared by pipeline and the override-bearing commands) --

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw UsageError(path + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) throw UsageError(path + "." + it.key() + ": unknown config key");
    }
}

double get_num(const json& j, const std::string& path, const char* key, double def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number()) throw UsageError(path + "." + key + ": expected a number");
    return j[key].get<double>();
}

std::int64_t get_int(const json& j, const std::string& path, const char* key, std::int64_t def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number_integer()) throw UsageError(path + "." + key + ": expected an integer");
    return j[key].get<std::int64_t>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_boolean()) throw UsageError(path + "." + key + ": expected a boolean");
    return j[key].get<bool>();
}

DomainParams domain_from_json(DomainParams base, const json& j, const std::string& path) {
    check_keys(j, path,
               {"road_width_px", "width_jitter", "n_roads", "curvature", "blur_sigma",
                "brightness", "clutter_density", "noise_sigma", "tile_size"});
    base.road_width_px = get_num(j, path, "road_width_px", base.road_width_px);
    base.width_jitter = get_num(j, path, "width_jitter", base.width_jitter);
    base.n_roads = static_cast<int>(get_int(j, path, "n_roads", base.n_roads));
    base.curvature = get_num(j, path, "curvature", base.curvature);
    base.blur_sigma = get_num(j, path, "blur_sigma", base.blur_sigma);
    base.brightness = get_num(j, path, "brightness", base.brightness);
    base.clutter_density = get_num(j, path, "clutter_density", base.clutter_density);
    base.noise_sigma = get_num(j, path, "noise_sigma", base.noise_sigma);
    if (j.contains("tile_size")) {
        const json& ts = j["tile_size"];
        if (!ts.is_array() || ts.size() != 2 || !ts[0].is_number_integer() ||
            !ts[1].is_number_integer()) {
            throw UsageError(path + ".tile_size: expected [height, width]");
        }
        base.tile_size = {ts[0].get<int>(), ts[1].get<int>()};
    }
    try {
        require_valid(base);
    } catch (const UsageError& e) {
        throw UsageError(path + ": " + e.what());
    }
    return base;
}

AdaptConfig adapt_from_json(const json& j, const std::string& path, std::uint64_t seed) {
    check_keys(j, path,
               {"t_high", "t_low", "t_high_skel", "t_low_skel", "beta", "lambda_adv", "rounds",
                "epochs", "lr_selftrain", "lr_adv", "batch_size", "use_cbr", "use_conformity",
                "use_adversarial"});
    AdaptConfig c;
    c.seed = seed;
    c.road_thresholds.t_high = get_num(j, path, "t_high", c.road_thresholds.t_high);
    c.road_thresholds.t_low = get_num(j, path, "t_low", c.road_thresholds.t_low);
    c.skel_thresholds.t_high = get_num(j, path, "t_high_skel", c.skel_thresholds.t_high);
    c.skel_thresholds.t_low = get_num(j, path, "t_low_skel", c.skel_thresholds.t_low);
    c.weights.beta = get_num(j, path, "beta", c.weights.beta);
    c.weights.lambda_adv = get_num(j, path, "lambda_adv", c.weights.lambda_adv);
    c.rounds = static_cast<int>(get_int(j, path, "rounds", c.rounds));
    c.epochs_per_round = static_cast<int>(get_int(j, path, "epochs", c.epochs_per_round));
    c.lr_selftrain = get_num(j, path, "lr_selftrain", c.lr_selftrain);
    c.lr_adv = get_num(j, path, "lr_adv", c.lr_adv);
    c.batch_size = static_cast<int>(get_int(j, path, "batch_size", c.batch_size));
    c.use_cbr = get_bool(j, path, "use_cbr", c.use_cbr);
    c.use_conformity = get_bool(j, path, "use_conformity", c.use_conformity);
    c.use_adversarial = get_bool(j, path, "use_adversarial", c.use_adversarial);
    if (!(c.road_thresholds.t_low < c.road_thresholds.t_high)) {
        throw UsageError(path + ".t_low must be < " + path + ".t_high, got " +
                         std::to_string(c.road_thresholds.t_low) + " vs " +
                         std::to_string(c.road_thresholds.t_high));
    }
    if (!(c.skel_thresholds.t_low < c.skel_thresholds.t_high)) {
        throw UsageError(path + ".t_low_skel must be < " + path + ".t_high_skel, got " +
                         std::to_string(c.skel_thresholds.t_low) + " vs " +
                         std::to_string(c.skel_thresholds.t_high));
    }
    try {
        require_valid(c);
    } catch (const UsageError& e) {
        throw UsageError(path + ": " + e.what());
    }
    return c;
}

// --- subcommand payloads ----------------------------------------------------

struct SynthOpts {
    std::string preset;
    std::uint64_t seed = 1;
    int tiles = 20;
    std::string out;
};

int cmd_synth(const SynthOpts& o) {
    DomainParams params = o.preset == "src" ? source_preset(o.seed) : target_preset(o.seed);
    const std::vector<Tile> tiles = generate_domain(params, o.tiles);
    const fs::path dir(o.out);
    ensure_dir(dir);
    std::vector<fs::path> outputs;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const std::string stem = tile_stem(static_cast<int>(i));
        const fs::path image = dir / (stem + "_image.f32r");
        const fs::path mask = dir / (stem + "_mask.pgm");
        const fs::path skel = dir / (stem + "_skel.pgm");
        write_raster(image, tiles[i].image);
        write_mask(mask, tiles[i].gt_mask);
        write_mask(skel, tiles[i].gt_skeleton);
        outputs.push_back(image);
        outputs.push_back(mask);
        outputs.push_back(skel);
    }
    write_manifest(dir / "manifest.json", "synth",
                   json{{"preset", o.preset}, {"tiles", o.tiles}}, o.seed, outputs);
    std::cout << json{{"tiles", tiles.size()}, {"dir", dir.generic_string()}}.dump() << "\n";
    return 0;
}

struct FileToFileOpts {
    std::string in;
    std::string out;
};

int cmd_skeletonize(const FileToFileOpts& o) {
    const BinaryMask mask = read_mask(o.in);
    write_mask(o.out, skeletonize(mask));
    write_manifest(fs::path(o.out).string() + ".manifest.json", "skeletonize",
                   json{{"in", o.in}}, 0, {o.out});
    return 0;
}

int cmd_graph(const FileToFileOpts& o) {
    const BinaryMask mask = read_mask(o.in);
    write_graph(o.out, extract_graph(mask));
    write_manifest(fs::path(o.out).string() + ".manifest.json", "graph", json{{"in", o.in}}, 0,
                   {o.out});
    return 0;
}

struct PseudoOpts {
    std::string prob;
    std::string labels;  // cbr only
    double t_high = kRoadThresholds.t_high;
    double t_low = kRoadThresholds.t_low;
    std::string rule = "partition";
    std::string out;
};

int cmd_pseudo_select(const PseudoOpts& o) {
    const ProbMap prob = read_raster(o.prob);
    const ThresholdPair th{o.t_high, o.t_low};
    const SelectionRule rule =
        o.rule == "literal-argmax" ? SelectionRule::LiteralArgmax : SelectionRule::Partition;
    write_tristate(o.out, select_pseudo_labels(prob, th, rule));
    write_manifest(fs::path(o.out).string() + ".manifest.json", "pseudo-select",
                   json{{"prob", o.prob}, {"t_high", o.t_high}, {"t_low", o.t_low},
                        {"rule", o.rule}},
                   0, {o.out});
    return 0;
}

int cmd_cbr(const PseudoOpts& o) {
    const ProbMap prob = read_raster(o.prob);
    const TriStateMask labels = read_tristate(o.labels);
    const ThresholdPair th{o.t_high, o.t_low};
    write_tristate(o.out, cbr_refine(prob, labels, th));
    write_manifest(fs::path(o.out).string() + ".manifest.json", "cbr",
                   json{{"prob", o.prob}, {"labels", o.labels}, {"t_high", o.t_high},
                        {"t_low", o.t_low}},
                   0, {o.out});
    return 0;
}

struct MetricsOpts {
    std::string pred;
    std::string gt;
    double snap_radius = 4.0;
    std::string out;
};

int cmd_metrics(const MetricsOpts& o) {
    const BinaryMask pred = read_mask(o.pred);
    const BinaryMask gt = read_mask(o.gt);
    const json result = metrics_to_json(evaluate_masks(pred, gt, o.snap_radius));
    std::cout << result.dump() << "\n";
    if (!o.out.empty()) {
        write_file_atomic(o.out, result.dump(2) + "\n");
        write_manifest(fs::path(o.out).string() + ".manifest.json", "metrics",
                       json{{"pred", o.pred}, {"gt", o.gt}, {"snap_radius", o.snap_radius}}, 0,
                       {o.out});
    }
    return 0;
}

struct LossesOpts {
    std::string src_p_road, src_p_skel, src_mask, src_skel;
    std::string tgt_p_road, tgt_p_skel, tgt_road, tgt_skel;
    std::string disc;
    double beta = 0.1;
    double lambda_adv = 0.01;
    std::string out;
};

// Evaluates the loss system on file inputs: source terms from binary labels
// (all-ones masks), target terms from tri-state pseudo-labels, adversarial/
// discriminator terms from a discriminator output map over the target tile.
int cmd_losses(const LossesOpts& o) {
    LossReport r;
    const LossWeights weights{o.beta, o.lambda_adv};
    const ProbMap src_road = read_raster(o.src_p_road);
    const ProbMap src_skel = read_raster(o.src_p_skel);
    const BinaryMask src_mask = read_mask(o.src_mask);
    const BinaryMask src_skel_mask = read_mask(o.src_skel);
    const BinaryMask ones = BinaryMask::ones(src_road.dims);
    r.seg_src = masked_bce(src_road, src_mask, ones).loss;
    r.skel_src = masked_bce(src_skel, src_skel_mask, ones).loss;
    r.conformity = conformity_loss(src_road, src_skel, src_skel_mask).loss;

    if (!o.tgt_p_road.empty()) {
        const ProbMap tgt_road = read_raster(o.tgt_p_road);
        const ProbMap tgt_skel = read_raster(o.tgt_p_skel);
        const TriStateMask tri_road = read_tristate(o.tgt_road);
        const TriStateMask tri_skel = read_tristate(o.tgt_skel);
        r.seg_tgt = masked_bce(tgt_road, tri_road.label_mask(), tri_road.selection_mask()).loss;
        r.skel_tgt = masked_bce(tgt_skel, tri_skel.label_mask(), tri_skel.selection_mask()).loss;
        r.conformity += conformity_loss(tgt_road, tgt_skel, tri_skel.label_mask()).loss;
        if (!o.disc.empty()) {
            const ProbMap d = read_raster(o.disc);
            r.adversarial = adversarial_loss(d).loss;
            r.discriminator = discriminator_loss(d, 0).loss;
        }
    }
    r = total_loss(r, weights);
    const json out = report_to_json(r);
    std::cout << out.dump() << "\n";
    if (!o.out.empty()) {
        write_file_atomic(o.out, out.dump(2) + "\n");
        write_manifest(fs::path(o.out).string() + ".manifest.json", "losses",
                       json{{"beta", o.beta}, {"lambda_adv", o.lambda_adv}}, 0, {o.out});
    }
    return 0;
}

struct TrainOpts {
    std::string src;
    int epochs = 2;
    double lr = 2e-4;
    int batch_size = 2;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_train(const TrainOpts& o) {
    const std::vector<Tile> source = load_tiles(o.src);
    AdaptConfig cfg;
    cfg.epochs_per_round = o.epochs;
    cfg.lr_selftrain = o.lr;
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;
    require_valid(cfg);

    Rng init_rng = Rng::forked(cfg.seed, 1);
    ToyModel model = init_model(init_rng);
    std::vector<double> losses;
    model = train_round0(std::move(model), source, cfg, &losses);

    const fs::path out(o.out);
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    write_model(out, model);
    std::string log;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        log += json{{"epoch", i}, {"loss", losses[i]}}.dump() + "\n";
    }
    const fs::path log_path = out.string() + ".train.jsonl";
    write_file_atomic(log_path, log);

    FeatureStats stats;
    {
        std::vector<FeatureGrid> grids;
        for (const Tile& t : source) grids.push_back(compute_features(t.image));
        stats = compute_feature_stats(grids);
    }
    const MetricReport on_source = evaluate_model(model, stats, source);
    write_manifest(out.string() + ".manifest.json", "train",
                   json{{"src", o.src}, {"epochs", o.epochs}, {"lr", o.lr},
                        {"batch_size", o.batch_size}},
                   o.seed, {out, fs::path(out.string() + ".json"), log_path});
    std::cout << json{{"epochs", losses.size()},
                      {"final_loss", losses.empty() ? 0.0 : losses.back()},
                      {"source", metrics_to_json(on_source)}}
                     .dump()
              << "\n";
    return 0;
}

struct AdaptOpts {
    std::string src;
    std::string tgt;
    std::string model;  // optional round-0 model; trained here when absent
    double t_high = kRoadThresholds.t_high;
    double t_low = kRoadThresholds.t_low;
    double t_high_skel = kSkeletonThresholds.t_high;
    double t_low_skel = kSkeletonThresholds.t_low;
    double beta = 0.1;
    double lambda_adv = 0.01;
    int rounds = 2;
    int epochs = 2;
    double lr = 2e-4;
    double lr_adv = 1e-4;
    int batch_size = 2;
    bool no_cbr = false;
    bool no_conformity = false;
    bool no_adv = false;
    std::uint64_t seed = 1;
    std::string out;
};

AdaptConfig to_config(const AdaptOpts& o) {
    AdaptConfig cfg;
    cfg.road_thresholds = {o.t_high, o.t_low};
    cfg.skel_thresholds = {o.t_high_skel, o.t_low_skel};
    cfg.weights = {o.beta, o.lambda_adv};
    cfg.rounds = o.rounds;
    cfg.epochs_per_round = o.epochs;
    cfg.lr_selftrain = o.lr;
    cfg.lr_adv = o.lr_adv;
    cfg.batch_size = o.batch_size;
    cfg.use_cbr = !o.no_cbr;
    cfg.use_conformity = !o.no_conformity;
    cfg.use_adversarial = !o.no_adv;
    cfg.seed = o.seed;
    require_valid(cfg);
    return cfg;
}

json adapt_result_lines(const AdaptResult& result, std::string& jsonl) {
    json rounds = json::array();
    for (const RoundRecord& r : result.rounds) {
        const json line{{"round", r.round},
                        {"target", metrics_to_json(r.target)},
                        {"mean_loss", r.mean_loss},
                        {"road_pixels_selected", r.road_pixels_selected}};
        jsonl += line.dump() + "\n";
        rounds.push_back(line);
    }
    return rounds;
}

int cmd_adapt(const AdaptOpts& o) {
    const AdaptConfig cfg = to_config(o);
    const std::vector<Tile> source = load_tiles(o.src);
    const std::vector<Tile> target = load_tiles(o.tgt);

    ToyModel model;
    if (!o.model.empty()) {
        model = read_model(o.model);
    } else {
        Rng init_rng = Rng::forked(cfg.seed, 1);
        model = train_round0(init_model(init_rng), source, cfg);
    }
    const AdaptResult result = adapt_rounds(std::move(model), source, target, cfg);
    for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";

    const fs::path dir(o.out);
    ensure_dir(dir);
    const fs::path model_path = dir / "model.bin";
    write_model(model_path, result.model);
    std::string jsonl;
    const json rounds = adapt_result_lines(result, jsonl);
    const fs::path metrics_path = dir / "metrics.jsonl";
    write_file_atomic(metrics_path, jsonl);

    const json config{{"t_high", o.t_high},        {"t_low", o.t_low},
                      {"t_high_skel", o.t_high_skel}, {"t_low_skel", o.t_low_skel},
                      {"beta", o.beta},            {"lambda_adv", o.lambda_adv},
                      {"rounds", o.rounds},        {"epochs", o.epochs},
                      {"lr", o.lr},                {"lr_adv", o.lr_adv},
                      {"batch_size", o.batch_size}, {"use_cbr", !o.no_cbr},
                      {"use_conformity", !o.no_conformity}, {"use_adversarial", !o.no_adv}};
    write_manifest(dir / "manifest.json", "adapt", config, o.seed,
                   {model_path, fs::path(model_path.string() + ".json"), metrics_path});
    std::cout << json{{"rounds", rounds}, {"warnings", result.warnings}}.dump() << "\n";
    return 0;
}

struct PipelineOpts {
    std::string config;
};

int cmd_pipeline(const PipelineOpts& o) {
    json cfg;
    try {
        cfg = json::parse(read_file(o.config));
    } catch (const json::exception& e) {
        throw UsageError(o.config + ": invalid JSON: " + std::string(e.what()));
    }
    check_keys(cfg, "config",
               {"seed", "out", "tiles", "source", "target", "adapt", "snap_radius"});
    if (!cfg.contains("out") || !cfg["out"].is_string()) {
        throw UsageError("config.out: expected an output directory string");
    }
    const std::uint64_t seed = static_cast<std::uint64_t>(get_int(cfg, "config", "seed", 1));
    const double snap_radius = get_num(cfg, "config", "snap_radius", 4.0);

    int n_src = 30, n_tgt = 50;
    if (cfg.contains("tiles")) {
        check_keys(cfg["tiles"], "config.tiles", {"source", "target"});
        n_src = static_cast<int>(get_int(cfg["tiles"], "config.tiles", "source", n_src));
        n_tgt = static_cast<int>(get_int(cfg["tiles"], "config.tiles", "target", n_tgt));
    }
    DomainParams src_params = domain_from_json(source_preset(seed),
                                               cfg.value("source", json::object()), "config.source");
    DomainParams tgt_params = domain_from_json(target_preset(seed + 1),
                                               cfg.value("target", json::object()), "config.target");
    const AdaptConfig adapt_cfg =
        adapt_from_json(cfg.value("adapt", json::object()), "config.adapt", seed);

    const std::vector<Tile> source = generate_domain(src_params, n_src);
    const std::vector<Tile> target = generate_domain(tgt_params, n_tgt);

    std::vector<double> round0_losses;
    const AdaptResult result = run_protocol(source, target, adapt_cfg, &round0_losses);
    for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";

    const fs::path dir(cfg["out"].get<std::string>());
    ensure_dir(dir);
    const fs::path model_path = dir / "model.bin";
    write_model(model_path, result.model);
    std::string jsonl;
    const json rounds = adapt_result_lines(result, jsonl);
    const fs::path metrics_path = dir / "metrics.jsonl";
    write_file_atomic(metrics_path, jsonl);

    FeatureStats stats_tgt;
    {
        std::vector<FeatureGrid> grids;
        for (const Tile& t : target) grids.push_back(compute_features(t.image));
        stats_tgt = compute_feature_stats(grids);
    }
    const MetricReport final_metrics =
        evaluate_model(result.model, stats_tgt, target, snap_radius);
    json report;
    report["config"] = cfg;
    report["round0_losses"] = round0_losses;
    report["rounds"] = rounds;
    report["final_target_metrics"] = metrics_to_json(final_metrics);
    report["warnings"] = result.warnings;
    const fs::path report_path = dir / "report.json";
    write_file_atomic(report_path, report.dump(2) + "\n");

    write_manifest(dir / "manifest.json", "pipeline", cfg, seed,
                   {model_path, fs::path(model_path.string() + ".json"), metrics_path,
                    report_path});
    std::cout << json{{"final_target_metrics", metrics_to_json(final_metrics)}}.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"topology-aware self-training domain adaptation toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    SynthOpts synth_opts;
    auto* synth = app.add_subcommand("synth", "generate a synthetic domain");
    synth->add_option("--preset", synth_opts.preset, "domain preset")
        ->required()
        ->check(CLI::IsMember({"src", "tgt"}));
    synth->add_option("--seed", synth_opts.seed, "generator seed");
    synth->add_option("--tiles", synth_opts.tiles, "number of tiles")->check(CLI::PositiveNumber);
    synth->add_option("--out", synth_opts.out, "output directory")->required();
    synth->callback([&] { rc = cmd_synth(synth_opts); });

    FileToFileOpts skel_opts;
    auto* skel = app.add_subcommand("skeletonize", "thin a binary mask");
    skel->add_option("--in", skel_opts.in, "input mask (PGM)")->required();
    skel->add_option("--out", skel_opts.out, "output skeleton (PGM)")->required();
    skel->callback([&] { rc = cmd_skeletonize(skel_opts); });

    FileToFileOpts graph_opts;
    auto* graph = app.add_subcommand("graph", "extract a road graph from a mask");
    graph->add_option("--in", graph_opts.in, "input mask (PGM)")->required();
    graph->add_option("--out", graph_opts.out, "output graph (text)")->required();
    graph->callback([&] { rc = cmd_graph(graph_opts); });

    PseudoOpts select_opts;
    auto* select = app.add_subcommand("pseudo-select", "tri-state pseudo-label selection");
    select->add_option("--prob", select_opts.prob, "probability map (F32R)")->required();
    select->add_option("--t-high", select_opts.t_high, "road threshold");
    select->add_option("--t-low", select_opts.t_low, "band floor");
    select->add_option("--rule", select_opts.rule, "selection rule")
        ->check(CLI::IsMember({"partition", "literal-argmax"}));
    select->add_option("--out", select_opts.out, "output tri-state mask (PGM)")->required();
    select->callback([&] { rc = cmd_pseudo_select(select_opts); });

    PseudoOpts cbr_opts;
    auto* cbr = app.add_subcommand("cbr", "connectivity-based refinement");
    cbr->add_option("--prob", cbr_opts.prob, "probability map (F32R)")->required();
    cbr->add_option("--labels", cbr_opts.labels, "tri-state mask to refine (PGM)")->required();
    cbr->add_option("--t-high", cbr_opts.t_high, "road threshold");
    cbr->add_option("--t-low", cbr_opts.t_low, "band floor");
    cbr->add_option("--out", cbr_opts.out, "refined tri-state mask (PGM)")->required();
    cbr->callback([&] { rc = cmd_cbr(cbr_opts); });

    MetricsOpts metrics_opts;
    auto* metrics = app.add_subcommand("metrics", "IoU/F1/APLS of a prediction");
    metrics->add_option("--pred", metrics_opts.pred, "predicted mask (PGM)")->required();
    metrics->add_option("--gt", metrics_opts.gt, "ground-truth mask (PGM)")->required();
    metrics->add_option("--snap-radius", metrics_opts.snap_radius, "APLS snap radius (px)");
    metrics->add_option("--out", metrics_opts.out, "also write the report here");
    metrics->callback([&] { rc = cmd_metrics(metrics_opts); });

    LossesOpts losses_opts;
    auto* losses = app.add_subcommand("losses", "evaluate the loss system from files");
    losses->add_option("--src-p-road", losses_opts.src_p_road)->required();
    losses->add_option("--src-p-skel", losses_opts.src_p_skel)->required();
    losses->add_option("--src-mask", losses_opts.src_mask)->required();
    losses->add_option("--src-skel", losses_opts.src_skel)->required();
    losses->add_option("--tgt-p-road", losses_opts.tgt_p_road);
    losses->add_option("--tgt-p-skel", losses_opts.tgt_p_skel);
    losses->add_option("--tgt-road", losses_opts.tgt_road, "target road tri-state mask");
    losses->add_option("--tgt-skel", losses_opts.tgt_skel, "target skeleton tri-state mask");
    losses->add_option("--disc", losses_opts.disc, "discriminator output on target (F32R)");
    losses->add_option("--beta", losses_opts.beta, "conformity weight");
    losses->add_option("--lambda-adv", losses_opts.lambda_adv, "adversarial weight");
    losses->add_option("--out", losses_opts.out, "also write the report here");
    losses->callback([&] { rc = cmd_losses(losses_opts); });

    TrainOpts train_opts;
    auto* train = app.add_subcommand("train", "round-0 supervised training on source");
    train->add_option("--src", train_opts.src, "source tile directory")->required();
    train->add_option("--epochs", train_opts.epochs, "training epochs");
    train->add_option("--lr", train_opts.lr, "learning rate");
    train->add_option("--batch-size", train_opts.batch_size, "tiles per step");
    train->add_option("--seed", train_opts.seed, "training seed");
    train->add_option("--out", train_opts.out, "output model path")->required();
    train->callback([&] { rc = cmd_train(train_opts); });

    AdaptOpts adapt_opts;
    auto* adapt = app.add_subcommand("adapt", "full round-based adaptation protocol");
    adapt->add_option("--src", adapt_opts.src, "source tile directory")->required();
    adapt->add_option("--tgt", adapt_opts.tgt, "target tile directory")->required();
    adapt->add_option("--model", adapt_opts.model, "round-0 model (trained here when absent)");
    adapt->add_option("--t-high", adapt_opts.t_high, "road selection threshold");
    adapt->add_option("--t-low", adapt_opts.t_low, "road band floor");
    adapt->add_option("--t-high-skel", adapt_opts.t_high_skel, "skeleton selection threshold");
    adapt->add_option("--t-low-skel", adapt_opts.t_low_skel, "skeleton band floor");
    adapt->add_option("--beta", adapt_opts.beta, "conformity weight");
    adapt->add_option("--lambda-adv", adapt_opts.lambda_adv, "adversarial weight");
    adapt->add_option("--rounds", adapt_opts.rounds, "adaptation rounds");
    adapt->add_option("--epochs", adapt_opts.epochs, "epochs per round");
    adapt->add_option("--lr", adapt_opts.lr, "self-training learning rate");
    adapt->add_option("--lr-adv", adapt_opts.lr_adv, "adversarial learning rate");
    adapt->add_option("--batch-size", adapt_opts.batch_size, "tiles per step (both domains)");
    adapt->add_flag("--no-cbr", adapt_opts.no_cbr, "disable CBR refinement");
    adapt->add_flag("--no-conformity", adapt_opts.no_conformity, "disable the conformity loss");
    adapt->add_flag("--no-adv", adapt_opts.no_adv, "disable adversarial alignment");
    adapt->add_option("--seed", adapt_opts.seed, "protocol seed");
    adapt->add_option("--out", adapt_opts.out, "output directory")->required();
    adapt->callback([&] { rc = cmd_adapt(adapt_opts); });

    PipelineOpts pipeline_opts;
    auto* pipeline = app.add_subcommand("pipeline", "config-driven end-to-end run");
    pipeline->add_option("--config", pipeline_opts.config, "pipeline config (JSON)")->required();
    pipeline->callback([&] { rc = cmd_pipeline(pipeline_opts); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
