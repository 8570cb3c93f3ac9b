#include "augment/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "augment/annotations.hpp"
#include "augment/heatmap.hpp"
#include "augment/png_io.hpp"
#include "augment/rng.hpp"
#include "augment/spe_gmm.hpp"

namespace augment {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(SpeMethod m) {
    switch (m) {
        case SpeMethod::llm: return "llm";
        case SpeMethod::gmm_v1: return "gmm1";
        case SpeMethod::gmm_v2: return "gmm2";
        case SpeMethod::gtos: return "gtos";
    }
    return "unknown";
}

SpeMethod spe_method_from_string(const std::string& s) {
    if (s == "llm") return SpeMethod::llm;
    if (s == "gmm1" || s == "gmm_v1") return SpeMethod::gmm_v1;
    if (s == "gmm2" || s == "gmm_v2") return SpeMethod::gmm_v2;
    if (s == "gtos") return SpeMethod::gtos;
    throw std::invalid_argument("unknown spe method: " + s);
}

void PipelineConfig::validate() const {
    if (alpha < 1) throw std::invalid_argument("alpha must be >= 1");
    if (lis_batch < 1) throw std::invalid_argument("lis_batch must be >= 1");
    if (top_n < 1 || top_n > lis_batch)
        throw std::invalid_argument("top_n must be in [1, lis_batch]");
    if (annotations_path.empty()) throw std::invalid_argument("annotations path required");
    for (int n : topn_values)
        if (n < 1) throw std::invalid_argument("top-n study values must be >= 1");
    for (int a : sweep_alphas)
        if (a < 1) throw std::invalid_argument("sweep alphas must be >= 1");
}

namespace {

json layout_to_json(const Layout& l) {
    json j;
    j["image_id"] = l.image_id;
    j["file_name"] = l.file_name;
    j["frame"] = {l.image_frame.width, l.image_frame.height};
    j["caption"] = l.caption;
    j["source"] = to_string(l.source);
    j["objects"] = json::array();
    for (const auto& o : l.objects)
        j["objects"].push_back({{"id", o.category.id},
                                {"name", o.category.name},
                                {"bbox", {o.box.x, o.box.y, o.box.w, o.box.h}}});
    return j;
}

Layout layout_from_json(const json& j) {
    Layout l;
    l.image_id = j.value("image_id", std::int64_t{0});
    l.file_name = j.value("file_name", std::string{});
    l.image_frame = {j.at("frame")[0].get<double>(), j.at("frame")[1].get<double>()};
    l.caption = j.at("caption").get<std::string>();
    l.source = layout_source_from_string(j.at("source").get<std::string>());
    for (const auto& o : j.at("objects")) {
        const auto& b = o.at("bbox");
        l.objects.push_back({CategoryLabel{o.at("id").get<int>(), o.at("name").get<std::string>()},
                             BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                  b[3].get<double>()}});
    }
    return l;
}

json score_to_json(const SampleScore& s) {
    json j;
    j["sample_ref"] = s.sample_ref;
    j["lacs"] = s.lacs;
    j["per_category"] = json::array();
    for (const auto& c : s.per_category)
        j["per_category"].push_back({{"name", c.category.name},
                                     {"id", c.category.id},
                                     {"cs", c.cs},
                                     {"cs_mask", c.cs_mask},
                                     {"delta", c.delta}});
    return j;
}

SampleScore score_from_json(const json& j) {
    SampleScore s;
    s.sample_ref = j.at("sample_ref").get<int>();
    s.lacs = j.at("lacs").get<double>();
    for (const auto& c : j.at("per_category")) {
        CategoryScore cs;
        cs.category = {c.at("id").get<int>(), c.at("name").get<std::string>()};
        cs.cs = c.at("cs").get<double>();
        cs.cs_mask = c.at("cs_mask").get<double>();
        cs.delta = c.at("delta").get<double>();
        s.per_category.push_back(std::move(cs));
    }
    return s;
}

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    std::ostringstream os;
    os << std::put_time(std::gmtime(&t), "%FT%TZ");
    return os.str();
}

json record_to_json(const ProvenanceRecord& r, const std::vector<std::string>& sample_files,
                    const std::vector<double>& cs_crops) {
    json j;
    j["layout_id"] = r.layout_id;
    j["layout"] = layout_to_json(r.layout);
    j["layout_origin"] = r.layout_origin;
    j["synthesis_seed"] = r.synthesis_seed;
    j["lis_backend_id"] = r.lis_backend_id;
    j["scorer_id"] = r.scorer_id;
    j["retries"] = r.retries;
    j["fallback"] = r.fallback;
    j["timestamp"] = r.timestamp;
    j["scores"] = json::array();
    for (const auto& s : r.scores) j["scores"].push_back(score_to_json(s));
    j["picked"] = r.picked;
    j["picked_files"] = r.picked_files;
    j["sample_files"] = sample_files;
    j["cs_crop"] = cs_crops;
    return j;
}

struct StoredRecord {
    ProvenanceRecord record;
    std::vector<std::string> sample_files;
    std::vector<double> cs_crops;  // parallel to samples
};

StoredRecord record_from_json(const json& j) {
    StoredRecord out;
    auto& r = out.record;
    r.layout_id = j.at("layout_id").get<std::string>();
    r.layout = layout_from_json(j.at("layout"));
    r.layout_origin = j.value("layout_origin", std::string{});
    r.synthesis_seed = j.at("synthesis_seed").get<std::uint64_t>();
    r.lis_backend_id = j.value("lis_backend_id", std::string{});
    r.scorer_id = j.value("scorer_id", std::string{});
    r.retries = j.value("retries", 0);
    r.fallback = j.value("fallback", false);
    r.timestamp = j.value("timestamp", std::string{});
    for (const auto& s : j.at("scores")) r.scores.push_back(score_from_json(s));
    r.picked = j.at("picked").get<std::vector<int>>();
    r.picked_files = j.at("picked_files").get<std::vector<std::string>>();
    out.sample_files = j.at("sample_files").get<std::vector<std::string>>();
    out.cs_crops = j.at("cs_crop").get<std::vector<double>>();
    return out;
}

struct GeneratedStream {
    std::vector<Layout> layouts;          // layout-major: gt 0 repeats, gt 1 repeats, ...
    std::vector<int> retries;             // per slot (llm only)
    std::vector<bool> fallbacks;          // per slot
};

GeneratedStream generate_stream(const PipelineConfig& config, const FewShotSet& set,
                                Backends& backends) {
    GeneratedStream out;
    switch (config.spe_method) {
        case SpeMethod::llm: {
            GenerateOptions opts;
            opts.alpha = config.alpha;
            opts.batch_size = config.llm_example_batch;
            opts.max_retries = config.llm_max_retries;
            opts.max_tokens = config.llm_max_tokens;
            opts.temperature = config.llm_temperature;
            opts.rng_seed = mix_seed(config.seed, 0x5370454cULL);
            opts.canvas = config.llm_canvas;
            if (config.prompt_template_path)
                opts.template_text = load_prompt_template(*config.prompt_template_path);
            auto outcome = generate_layouts(set, *backends.llm, opts);
            out.layouts = std::move(outcome.layouts);
            out.retries = std::move(outcome.retries_per_layout);
            for (const auto& l : out.layouts)
                out.fallbacks.push_back(l.source == LayoutSource::oversampled);
            break;
        }
        case SpeMethod::gmm_v1:
        case SpeMethod::gmm_v2: {
            EnsembleOptions opts;
            opts.components = config.gmm_components;
            opts.variant = config.spe_method == SpeMethod::gmm_v1
                               ? CooccurrenceVariant::draft_from_gt
                               : CooccurrenceVariant::fitted_cooccurrence;
            const auto ensemble =
                fit_ensemble(set, opts, mix_seed(config.seed, 0x53504547ULL));
            save_ensemble(ensemble, config.output_dir / "gmm_ensemble.json");
            out.layouts =
                sample_layouts(ensemble, set, config.alpha, mix_seed(config.seed, 0x53415250ULL));
            break;
        }
        case SpeMethod::gtos: {
            out.layouts = oversample_gtos(set, config.alpha, mix_seed(config.seed, 0x47544f53ULL));
            break;
        }
    }
    if (out.retries.empty()) out.retries.assign(out.layouts.size(), 0);
    if (out.fallbacks.empty()) out.fallbacks.assign(out.layouts.size(), false);
    return out;
}

RunReport run_impl(const PipelineConfig& config, Backends& backends, const fs::path& journal_dir) {
    config.validate();
    const fs::path prov_dir = journal_dir / "provenance";
    const fs::path images_dir = journal_dir / "images";
    fs::create_directories(config.output_dir);
    fs::create_directories(prov_dir);
    fs::create_directories(images_dir);

    const FewShotSet set = load_coco(config.annotations_path, config.shot_list_path);

    GeneratedStream stream = generate_stream(config, set, backends);

    RunReport report;
    report.ground_truth_layouts = static_cast<int>(set.layouts.size());
    report.generated_layouts = static_cast<int>(stream.layouts.size());

    std::vector<StoredRecord> records;
    for (std::size_t gi = 0; gi < stream.layouts.size(); ++gi) {
        const std::size_t gt_idx = gi / static_cast<std::size_t>(config.alpha);
        const int repeat = static_cast<int>(gi % static_cast<std::size_t>(config.alpha));
        const std::string layout_id =
            "g" + std::to_string(gt_idx) + "_r" + std::to_string(repeat);
        const fs::path record_path = prov_dir / (layout_id + ".json");

        if (fs::exists(record_path)) {
            std::ifstream in(record_path);
            records.push_back(record_from_json(json::parse(in)));
            ++report.resumed_layouts;
            continue;
        }

        const Layout& layout = stream.layouts[gi];
        SynthesisRequest request;
        request.layout = layout;
        request.prompt = build_lis_prompt(layout);
        request.batch_size = config.lis_batch;
        request.steps = config.steps;
        request.guidance_scale = config.guidance_scale;
        request.grounding_alpha = config.grounding_alpha;
        request.mis_fraction = config.mis_fraction;
        request.seed = mix_seed(config.seed, gt_idx, static_cast<std::uint64_t>(repeat));

        ImageBatch batch = backends.lis->synthesize(request);
        ++report.synthesis_calls;
        validate_batch(batch);

        StoredRecord stored;
        auto& rec = stored.record;
        rec.layout_id = layout_id;
        rec.layout = layout;
        rec.layout_origin = to_string(layout.source);
        rec.synthesis_seed = request.seed;
        rec.lis_backend_id = batch.backend_id;
        rec.scorer_id = backends.scorer->id();
        rec.retries = stream.retries[gi];
        rec.fallback = stream.fallbacks[gi];
        rec.timestamp = now_iso8601();

        const auto registry = set.categories.all();
        for (int s = 0; s < config.lis_batch; ++s) {
            rec.scores.push_back(score_sample(*backends.scorer, batch.images[s], layout, s));
            const std::string file = layout_id + "_" + std::to_string(s) + ".png";
            write_png(batch.images[s], images_dir / file);
            stored.sample_files.push_back(file);
            stored.cs_crops.push_back(
                cs_crop(*backends.scorer, batch.images[s], layout, registry));
        }
        rec.picked = rank_and_pick(rec.scores, config.top_n);
        for (int s : rec.picked) rec.picked_files.push_back(stored.sample_files[s]);

        std::ofstream out(record_path);
        out << record_to_json(rec, stored.sample_files, stored.cs_crops).dump(2) << "\n";
        records.push_back(std::move(stored));
    }

    // Re-pick from stored scores so a resumed run with a different top_n
    // still emits the right dataset.
    std::vector<Layout> emitted_layouts;
    std::vector<std::string> emitted_files;
    for (const auto& l : set.layouts) {
        emitted_layouts.push_back(l);
        emitted_files.push_back(l.file_name);
    }
    double lacs_all_sum = 0.0, lacs_picked_sum = 0.0, cs_crop_sum = 0.0;
    int all_count = 0, picked_count = 0;
    json scores_jsonl = json::array();
    for (auto& stored : records) {
        auto& rec = stored.record;
        const int top_n = std::min<int>(config.top_n, static_cast<int>(rec.scores.size()));
        rec.picked = rank_and_pick(rec.scores, top_n);
        rec.picked_files.clear();
        for (int s : rec.picked) rec.picked_files.push_back(stored.sample_files[s]);

        for (const auto& s : rec.scores) {
            lacs_all_sum += s.lacs;
            ++all_count;
            json line = score_to_json(s);
            line["layout_id"] = rec.layout_id;
            line["picked"] =
                std::find(rec.picked.begin(), rec.picked.end(), s.sample_ref) != rec.picked.end();
            scores_jsonl.push_back(std::move(line));
        }
        for (int s : rec.picked) {
            lacs_picked_sum += rec.scores[s].lacs;
            cs_crop_sum += stored.cs_crops[s];
            ++picked_count;
            emitted_layouts.push_back(rec.layout);
            emitted_files.push_back(stored.sample_files[s]);
        }
    }

    report.generated_images = picked_count;
    report.mlacs_all = all_count ? lacs_all_sum / all_count : 0.0;
    report.mlacs_picked = picked_count ? lacs_picked_sum / picked_count : 0.0;
    report.cs_crop_mean = picked_count ? cs_crop_sum / picked_count : 0.0;
    for (bool f : stream.fallbacks) report.spe_fallbacks += f ? 1 : 0;

    report.dataset_path = config.output_dir / "dataset.json";
    emit_coco(emitted_layouts, emitted_files, report.dataset_path);

    {
        std::ofstream out(config.output_dir / "scores.jsonl");
        for (const auto& line : scores_jsonl) out << line.dump() << "\n";
    }
    {
        json summary;
        summary["mlacs"] = report.mlacs_picked;
        summary["mlacs_all"] = report.mlacs_all;
        summary["cs_crop"] = report.cs_crop_mean;
        summary["n_samples"] = all_count;
        summary["picked_fraction"] =
            all_count ? static_cast<double>(picked_count) / all_count : 0.0;
        summary["spe_method"] = to_string(config.spe_method);
        summary["alpha"] = config.alpha;
        summary["top_n"] = config.top_n;
        summary["shot_list"] =
            config.shot_list_path ? config.shot_list_path->string() : std::string{};
        std::ofstream out(config.output_dir / "summary.json");
        out << summary.dump(2) << "\n";
    }

    const fs::path heatmap_dir = config.output_dir / "heatmaps";
    fs::create_directories(heatmap_dir);
    emit_heatmaps(stream.layouts, set.categories, config.heatmap_resolution, heatmap_dir,
                  "generated");
    emit_heatmaps(set.layouts, set.categories, config.heatmap_resolution, heatmap_dir,
                  "ground_truth");

    return report;
}

}  // namespace

Backends make_backends(const PipelineConfig& config) {
    Backends b;
    if (config.use_mock_backends) {
        b.llm = make_mock_llm_backend(config.llm_canvas);
        b.lis = std::make_unique<MockRenderer>(config.mock_hallucination_rate);
        b.scorer = std::make_unique<MockImageTextScorer>();
    } else {
        if (config.llm_endpoint.empty() || config.lis_endpoint.empty())
            throw std::invalid_argument("real backends require --llm-endpoint and --lis-endpoint");
        b.llm = std::make_unique<HttpCompletionBackend>(config.llm_endpoint, config.llm_model);
        b.lis = std::make_unique<HttpSynthesisBackend>(config.lis_endpoint);
        if (config.scorer_id == "mock") {
            b.scorer = std::make_unique<MockImageTextScorer>();
        } else {
            throw std::invalid_argument(
                "scorer '" + config.scorer_id +
                "' unavailable: only the mock scorer ships in-tree; point scorer_id at mock or "
                "plug an ImageTextScorer into run(config, backends)");
        }
    }
    return b;
}

RunReport run(const PipelineConfig& config) {
    Backends backends = make_backends(config);
    return run(config, backends);
}

RunReport run(const PipelineConfig& config, Backends& backends) {
    return run_impl(config, backends, config.output_dir);
}

SweepReport sweep_ratios(const PipelineConfig& config) {
    if (config.sweep_alphas.empty()) throw std::invalid_argument("sweep list is empty");
    Backends backends = make_backends(config);
    SweepReport report;
    report.alphas = config.sweep_alphas;
    json doc = json::array();
    for (int alpha : config.sweep_alphas) {
        PipelineConfig sub = config;
        sub.alpha = alpha;
        sub.output_dir = config.output_dir / ("alpha_" + std::to_string(alpha));
        // shared journal: lower-alpha repeats are prefixes of higher-alpha streams
        RunReport r = run_impl(sub, backends, config.output_dir);
        json entry;
        entry["alpha"] = alpha;
        entry["generated_layouts"] = r.generated_layouts;
        entry["generated_images"] = r.generated_images;
        entry["mlacs"] = r.mlacs_picked;
        entry["mlacs_all"] = r.mlacs_all;
        doc.push_back(std::move(entry));
        report.runs.push_back(std::move(r));
    }
    fs::create_directories(config.output_dir);
    std::ofstream out(config.output_dir / "sweep_report.json");
    out << doc.dump(2) << "\n";
    return report;
}

TopnReport topn_study(const PipelineConfig& config) {
    if (config.topn_values.empty()) throw std::invalid_argument("top-n study list is empty");
    constexpr int kStudyBatch = 8;
    for (int n : config.topn_values)
        if (n > kStudyBatch)
            throw std::invalid_argument("top_n " + std::to_string(n) + " exceeds study batch of " +
                                        std::to_string(kStudyBatch));
    Backends backends = make_backends(config);
    TopnReport report;
    report.topn_values = config.topn_values;
    report.epoch_note =
        "When training downstream on a top-n dataset, scale back the number of epochs with "
        "respect to the number of samples picked.";
    json doc;
    doc["epoch_note"] = report.epoch_note;
    doc["batch_size"] = kStudyBatch;
    doc["runs"] = json::array();
    for (int n : config.topn_values) {
        PipelineConfig sub = config;
        sub.lis_batch = kStudyBatch;
        sub.top_n = n;
        sub.output_dir = config.output_dir / ("topn_" + std::to_string(n));
        RunReport r = run_impl(sub, backends, config.output_dir);
        json entry;
        entry["top_n"] = n;
        entry["generated_images"] = r.generated_images;
        entry["mlacs"] = r.mlacs_picked;
        doc["runs"].push_back(std::move(entry));
        report.runs.push_back(std::move(r));
    }
    fs::create_directories(config.output_dir);
    std::ofstream out(config.output_dir / "topn_report.json");
    out << doc.dump(2) << "\n";
    return report;
}

void emit_heatmaps(const std::vector<Layout>& layouts, const CategoryRegistry& registry,
                   int resolution, const std::filesystem::path& dir, const std::string& prefix) {
    for (const auto& cat : registry.all()) {
        const auto grid = heatmap(layouts, cat, resolution, resolution);
        if (grid.total() == 0) continue;
        std::string safe_name = cat.name;
        for (auto& c : safe_name)
            if (c == ' ' || c == '/') c = '_';
        const std::string stem = prefix + "_" + safe_name;
        save_heatmap(grid, dir / (stem + ".png"), dir / (stem + ".json"));
    }
}

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    const json j = json::parse(in);

    PipelineConfig c;
    if (j.contains("annotations")) c.annotations_path = j.at("annotations").get<std::string>();
    if (j.contains("shots")) c.shot_list_path = j.at("shots").get<std::string>();
    if (j.contains("out")) c.output_dir = j.at("out").get<std::string>();
    if (j.contains("spe")) c.spe_method = spe_method_from_string(j.at("spe").get<std::string>());
    read_if(j, "alpha", c.alpha);
    read_if(j, "batch", c.lis_batch);
    read_if(j, "top_n", c.top_n);
    read_if(j, "steps", c.steps);
    read_if(j, "guidance", c.guidance_scale);
    read_if(j, "grounding_alpha", c.grounding_alpha);
    read_if(j, "mis", c.mis_fraction);
    read_if(j, "llm_example_batch", c.llm_example_batch);
    read_if(j, "llm_max_retries", c.llm_max_retries);
    read_if(j, "llm_max_tokens", c.llm_max_tokens);
    read_if(j, "llm_temperature", c.llm_temperature);
    read_if(j, "canvas_width", c.llm_canvas.width);
    read_if(j, "canvas_height", c.llm_canvas.height);
    if (j.contains("prompt_template"))
        c.prompt_template_path = j.at("prompt_template").get<std::string>();
    read_if(j, "gmm_components", c.gmm_components);
    read_if(j, "llm_endpoint", c.llm_endpoint);
    read_if(j, "llm_model", c.llm_model);
    read_if(j, "lis_endpoint", c.lis_endpoint);
    read_if(j, "scorer", c.scorer_id);
    read_if(j, "scorer_endpoint", c.scorer_endpoint);
    read_if(j, "mock", c.use_mock_backends);
    read_if(j, "mock_hallucination_rate", c.mock_hallucination_rate);
    read_if(j, "seed", c.seed);
    read_if(j, "heatmap_resolution", c.heatmap_resolution);
    read_if(j, "sweep", c.sweep_alphas);
    read_if(j, "topn_study", c.topn_values);
    return c;
}

void save_config(const PipelineConfig& c, const fs::path& path) {
    json j;
    j["annotations"] = c.annotations_path.string();
    if (c.shot_list_path) j["shots"] = c.shot_list_path->string();
    j["out"] = c.output_dir.string();
    j["spe"] = to_string(c.spe_method);
    j["alpha"] = c.alpha;
    j["batch"] = c.lis_batch;
    j["top_n"] = c.top_n;
    j["steps"] = c.steps;
    j["guidance"] = c.guidance_scale;
    j["grounding_alpha"] = c.grounding_alpha;
    j["mis"] = c.mis_fraction;
    j["llm_example_batch"] = c.llm_example_batch;
    j["llm_max_retries"] = c.llm_max_retries;
    j["llm_max_tokens"] = c.llm_max_tokens;
    j["llm_temperature"] = c.llm_temperature;
    j["canvas_width"] = c.llm_canvas.width;
    j["canvas_height"] = c.llm_canvas.height;
    j["gmm_components"] = c.gmm_components;
    j["llm_endpoint"] = c.llm_endpoint;
    j["llm_model"] = c.llm_model;
    j["lis_endpoint"] = c.lis_endpoint;
    j["scorer"] = c.scorer_id;
    j["mock"] = c.use_mock_backends;
    j["mock_hallucination_rate"] = c.mock_hallucination_rate;
    j["seed"] = c.seed;
    j["heatmap_resolution"] = c.heatmap_resolution;
    j["sweep"] = c.sweep_alphas;
    j["topn_study"] = c.topn_values;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace augment
