#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "augment/lacs.hpp"
#include "augment/lis.hpp"
#include "augment/spe_llm.hpp"
#include "augment/types.hpp"

namespace augment {

enum class SpeMethod { llm, gmm_v1, gmm_v2, gtos };

const char* to_string(SpeMethod m);
SpeMethod spe_method_from_string(const std::string& s);

struct PipelineConfig {
    std::filesystem::path annotations_path;
    std::optional<std::filesystem::path> shot_list_path;
    std::filesystem::path output_dir = "out";

    SpeMethod spe_method = SpeMethod::llm;
    int alpha = 4;
    int lis_batch = 5;
    int top_n = 1;

    // layout-to-image defaults
    int steps = 50;
    double guidance_scale = 7.5;
    double grounding_alpha = 0.8;
    double mis_fraction = 0.36;

    // LLM prior extrapolation
    int llm_example_batch = 5;
    int llm_max_retries = 3;
    int llm_max_tokens = 512;
    double llm_temperature = 0.7;
    Canvas llm_canvas = {};
    std::optional<std::filesystem::path> prompt_template_path;

    // GMM prior extrapolation
    int gmm_components = 3;

    std::string llm_endpoint;
    std::string llm_model;
    std::string lis_endpoint;
    std::string scorer_id = "mock";
    std::string scorer_endpoint;

    bool use_mock_backends = true;
    double mock_hallucination_rate = 0.0;

    std::uint64_t seed = 0;
    int heatmap_resolution = 64;

    std::vector<int> sweep_alphas = {1, 2, 4, 8, 16};
    std::vector<int> topn_values = {1, 4, 8};

    void validate() const;
};

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);

/// One record per generated layout: what was synthesized, how each sample
/// scored, and which files were picked. Doubles as the resume journal.
struct ProvenanceRecord {
    std::string layout_id;
    Layout layout;
    std::string layout_origin;  // layout source enum name
    std::uint64_t synthesis_seed = 0;
    std::string lis_backend_id;
    std::string scorer_id;
    int retries = 0;
    bool fallback = false;
    std::vector<SampleScore> scores;
    std::vector<int> picked;  // sample indices, descending score
    std::vector<std::string> picked_files;
    std::string timestamp;
};

struct RunReport {
    int ground_truth_layouts = 0;
    int generated_layouts = 0;
    int generated_images = 0;  // picked images in the emitted dataset
    int synthesis_calls = 0;   // performed this run (0 on a clean resume)
    int resumed_layouts = 0;
    int spe_fallbacks = 0;
    double mlacs_picked = 0.0;
    double mlacs_all = 0.0;
    double cs_crop_mean = 0.0;
    std::filesystem::path dataset_path;
};

struct Backends {
    std::unique_ptr<CompletionBackend> llm;
    std::unique_ptr<SynthesisBackend> lis;
    std::unique_ptr<ImageTextScorer> scorer;
};

/// Builds backends per config (mock or HTTP).
Backends make_backends(const PipelineConfig& config);

/// End-to-end: spatial prior extrapolation -> synthesis -> scoring ->
/// top-n picking -> merged COCO dataset plus reports and heatmaps.
/// Re-running over an existing output directory skips layouts that
/// already have a provenance record.
RunReport run(const PipelineConfig& config);
RunReport run(const PipelineConfig& config, Backends& backends);

struct SweepReport {
    std::vector<int> alphas;
    std::vector<RunReport> runs;  // parallel to alphas
};

/// Runs the pipeline once per alpha; lower-alpha outputs are reused as
/// prefixes of the per-layout generation streams via the shared journal.
SweepReport sweep_ratios(const PipelineConfig& config);

struct TopnReport {
    std::vector<int> topn_values;
    std::vector<RunReport> runs;
    std::string epoch_note;
};

/// Fixed synthesis run (batch of 8), one emitted dataset per top-n value.
TopnReport topn_study(const PipelineConfig& config);

/// Per-category heatmaps over a set of layouts, written as PNG + JSON.
void emit_heatmaps(const std::vector<Layout>& layouts, const CategoryRegistry& registry,
                   int resolution, const std::filesystem::path& dir,
                   const std::string& prefix);

}  // namespace augment
