#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "augment/annotations.hpp"
#include "augment/heatmap.hpp"
#include "augment/lacs.hpp"
#include "augment/pipeline.hpp"
#include "augment/png_io.hpp"

namespace fs = std::filesystem;

namespace {

struct CliOptions {
    std::optional<std::string> config_path;
    std::optional<std::string> annotations;
    std::optional<std::string> shots;
    std::optional<std::string> spe;
    std::optional<int> alpha;
    std::optional<int> batch;
    std::optional<int> top_n;
    std::optional<std::string> llm_endpoint;
    std::optional<std::string> llm_model;
    std::optional<std::string> lis_endpoint;
    std::optional<std::string> scorer;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<double> hallucination_rate;
    std::optional<std::vector<int>> sweep;
    std::optional<std::vector<int>> topn_values;
    bool mock = false;
};

void add_common_flags(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--config", o.config_path, "JSON config file; flags override its values");
    cmd->add_option("--annotations", o.annotations, "COCO detection JSON");
    cmd->add_option("--shots", o.shots, "newline-delimited annotation-id shot list");
    cmd->add_option("--spe", o.spe, "layout generation method: llm, gmm1, gmm2, gtos")
        ->check(CLI::IsMember({"llm", "gmm1", "gmm2", "gtos"}));
    cmd->add_option("--alpha", o.alpha, "augmentation ratio");
    cmd->add_option("--batch", o.batch, "images synthesized per layout");
    cmd->add_option("--top-n", o.top_n, "samples kept per batch");
    cmd->add_option("--llm-endpoint", o.llm_endpoint, "OpenAI-compatible completion endpoint");
    cmd->add_option("--llm-model", o.llm_model, "completion model name");
    cmd->add_option("--lis-endpoint", o.lis_endpoint, "layout-to-image HTTP endpoint");
    cmd->add_option("--scorer", o.scorer, "image-text scorer id");
    cmd->add_option("--seed", o.seed, "global random seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--hallucination-rate", o.hallucination_rate,
                    "mock renderer out-of-layout injection rate");
    cmd->add_flag("--mock", o.mock, "use the deterministic mock backends");
}

augment::PipelineConfig build_config(const CliOptions& o) {
    augment::PipelineConfig c;
    if (o.config_path) c = augment::load_config(*o.config_path);
    if (o.annotations) c.annotations_path = *o.annotations;
    if (o.shots) c.shot_list_path = *o.shots;
    if (o.spe) c.spe_method = augment::spe_method_from_string(*o.spe);
    if (o.alpha) c.alpha = *o.alpha;
    if (o.batch) c.lis_batch = *o.batch;
    if (o.top_n) c.top_n = *o.top_n;
    if (o.llm_endpoint) c.llm_endpoint = *o.llm_endpoint;
    if (o.llm_model) c.llm_model = *o.llm_model;
    if (o.lis_endpoint) c.lis_endpoint = *o.lis_endpoint;
    if (o.scorer) c.scorer_id = *o.scorer;
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.output_dir = *o.out;
    if (o.hallucination_rate) c.mock_hallucination_rate = *o.hallucination_rate;
    if (o.sweep) c.sweep_alphas = *o.sweep;
    if (o.topn_values) c.topn_values = *o.topn_values;
    if (o.mock) c.use_mock_backends = true;
    if (!o.mock && (o.llm_endpoint || o.lis_endpoint)) c.use_mock_backends = false;
    return c;
}

void print_report(const augment::RunReport& r) {
    std::cout << "ground-truth layouts: " << r.ground_truth_layouts << "\n"
              << "generated layouts:    " << r.generated_layouts << "\n"
              << "generated images:     " << r.generated_images << "\n"
              << "synthesis calls:      " << r.synthesis_calls << " (resumed "
              << r.resumed_layouts << ")\n"
              << "spe fallbacks:        " << r.spe_fallbacks << "\n"
              << "mLACS picked / all:   " << r.mlacs_picked << " / " << r.mlacs_all << "\n"
              << "CS-Crop:              " << r.cs_crop_mean << "\n"
              << "dataset:              " << r.dataset_path.string() << "\n";
}

int cmd_score(const augment::PipelineConfig& config, const std::string& images_dir) {
    const auto set = augment::load_coco(config.annotations_path, config.shot_list_path);
    augment::MockImageTextScorer scorer;
    fs::create_directories(config.output_dir);
    std::ofstream out(config.output_dir / "scores.jsonl");
    double sum = 0.0;
    int n = 0;
    for (const auto& layout : set.layouts) {
        const fs::path img_path = fs::path(images_dir) / layout.file_name;
        if (!fs::exists(img_path)) {
            std::cerr << "skipping missing image " << img_path << "\n";
            continue;
        }
        const auto image = augment::read_png(img_path);
        const auto score = augment::score_sample(scorer, image, layout);
        nlohmann::json line;
        line["sample_ref"] = layout.file_name;
        line["lacs"] = score.lacs;
        line["per_category"] = nlohmann::json::array();
        for (const auto& c : score.per_category)
            line["per_category"].push_back({{"name", c.category.name},
                                            {"cs", c.cs},
                                            {"cs_mask", c.cs_mask},
                                            {"delta", c.delta}});
        out << line.dump() << "\n";
        sum += score.lacs;
        ++n;
    }
    std::cout << "scored " << n << " images, mLACS " << (n ? sum / n : 0.0) << "\n";
    return 0;
}

int cmd_heatmap(const augment::PipelineConfig& config, int resolution) {
    const auto set = augment::load_coco(config.annotations_path, config.shot_list_path);
    fs::create_directories(config.output_dir);
    augment::emit_heatmaps(set.layouts, set.categories, resolution, config.output_dir, "boxes");
    std::cout << "heatmaps written to " << config.output_dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot detection augmentation: layout generation, image synthesis, "
                 "layout-aware scoring, and dataset assembly"};
    app.require_subcommand(1);

    CliOptions opts;
    auto* run_cmd = app.add_subcommand("run", "full pipeline: layouts -> images -> scores -> dataset");
    auto* sweep_cmd = app.add_subcommand("sweep", "pipeline once per augmentation ratio");
    auto* topn_cmd = app.add_subcommand("topn-study", "batch-of-8 synthesis, one dataset per top-n");
    auto* heatmap_cmd = app.add_subcommand("heatmap", "per-category box density grids");
    auto* score_cmd = app.add_subcommand("score", "layout-aware scores for existing images");
    for (auto* cmd : {run_cmd, sweep_cmd, topn_cmd, heatmap_cmd, score_cmd})
        add_common_flags(cmd, opts);

    std::vector<int> sweep_list, topn_list;
    sweep_cmd->add_option("--alphas", sweep_list, "augmentation ratios to sweep");
    topn_cmd->add_option("--values", topn_list, "top-n values to study");
    int resolution = 64;
    heatmap_cmd->add_option("--resolution", resolution, "grid resolution");
    std::string images_dir = ".";
    score_cmd->add_option("--images", images_dir, "directory containing the PNG images");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!sweep_list.empty()) opts.sweep = sweep_list;
        if (!topn_list.empty()) opts.topn_values = topn_list;
        const auto config = build_config(opts);

        if (run_cmd->parsed()) {
            print_report(augment::run(config));
        } else if (sweep_cmd->parsed()) {
            const auto report = augment::sweep_ratios(config);
            for (std::size_t i = 0; i < report.alphas.size(); ++i) {
                std::cout << "== alpha " << report.alphas[i] << " ==\n";
                print_report(report.runs[i]);
            }
        } else if (topn_cmd->parsed()) {
            const auto report = augment::topn_study(config);
            for (std::size_t i = 0; i < report.topn_values.size(); ++i) {
                std::cout << "== top-" << report.topn_values[i] << " ==\n";
                print_report(report.runs[i]);
            }
        } else if (heatmap_cmd->parsed()) {
            return cmd_heatmap(config, resolution);
        } else if (score_cmd->parsed()) {
            return cmd_score(config, images_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
