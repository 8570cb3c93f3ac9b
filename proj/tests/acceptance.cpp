// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Everything runs against the in-tree mock backends.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "augment/annotations.hpp"
#include "augment/heatmap.hpp"
#include "augment/lacs.hpp"
#include "augment/lis.hpp"
#include "augment/pipeline.hpp"
#include "augment/rng.hpp"
#include "augment/spe_gmm.hpp"
#include "augment/spe_llm.hpp"
#include "fixtures.hpp"

using namespace augment;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

double gaussian(Rng& rng) {
    const double u1 = std::max(uniform01(rng), 1e-300);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Layout random_layout(Rng& rng, double fw = 640, double fh = 480) {
    Layout l;
    l.image_frame = {fw, fh};
    const int n = 1 + static_cast<int>(bounded(rng, 4));
    static const std::vector<std::pair<int, std::string>> cats = {
        {1, "cat"}, {2, "car"}, {3, "dog"}, {4, "person"}};
    for (int i = 0; i < n; ++i) {
        const auto& [id, name] = cats[bounded(rng, cats.size())];
        const double w = 8 + uniform01(rng) * (fw / 2 - 8);
        const double h = 8 + uniform01(rng) * (fh / 2 - 8);
        const double x = uniform01(rng) * (fw - w);
        const double y = uniform01(rng) * (fh - h);
        l.objects.push_back({{id, name}, {x, y, w, h}});
    }
    l.caption = make_caption(l.objects);
    return l;
}

/// Scorer that replays a queue of logit pairs, one pair per call.
class QueueScorer : public ImageTextScorer {
public:
    mutable std::vector<std::pair<double, double>> queue;
    mutable std::size_t next = 0;

    std::vector<double> logits(const Image&, const std::vector<std::string>&) const override {
        const auto [a, b] = queue.at(next++);
        return {a, b};
    }
    std::string id() const override { return "queue"; }
};

// --- criterion bodies -------------------------------------------------------

Check lacs_algebra() {
    Check c;
    c.require(std::abs(softmax_first(2.0, 0.0) - 0.8808) < 1e-4, "softmax(2,0) oracle");
    c.require(std::abs(softmax_first(0.0, 0.0) - 0.5) < 1e-12, "softmax(0,0) oracle");

    Rng rng(101);
    Layout layout;
    layout.image_frame = {64, 48};
    layout.objects = {{{1, "cat"}, {4, 4, 16, 12}},
                      {{2, "car"}, {30, 20, 20, 16}},
                      {{3, "dog"}, {10, 30, 12, 10}}};
    layout.caption = make_caption(layout.objects);
    const Image image(64, 48);
    QueueScorer scorer;

    int pairs = 0;
    while (pairs < 10000) {
        scorer.queue.clear();
        scorer.next = 0;
        for (int k = 0; k < 6; ++k)  // cs + cs_mask per distinct category
            scorer.queue.push_back({(uniform01(rng) - 0.5) * 30, (uniform01(rng) - 0.5) * 30});
        const SampleScore s = score_sample(scorer, image, layout);
        c.require(s.per_category.size() == 3, "three distinct categories");
        double mean = 0.0;
        std::size_t q = 0;
        for (const auto& cat : s.per_category) {
            const double cs = softmax_first(scorer.queue[q].first, scorer.queue[q].second);
            const double cs_mask =
                softmax_first(scorer.queue[q + 1].first, scorer.queue[q + 1].second);
            q += 2;
            c.require(cat.cs > 0.0 && cat.cs < 1.0, "cs in (0,1)");
            c.require(cat.cs_mask > 0.0 && cat.cs_mask < 1.0, "cs_mask in (0,1)");
            c.require(cat.cs == cs && cat.cs_mask == cs_mask, "softmax agreement");
            c.require(cat.delta == cat.cs - cat.cs_mask, "delta exact");
            mean += cat.delta;
        }
        mean /= 3.0;
        c.require(std::abs(s.lacs - mean) < 1e-12, "lacs is the mean of deltas");
        pairs += 6;
        if (!c.ok) break;
    }
    return c;
}

Check hallucination_monotonicity() {
    Check c;
    MockRenderer clean(0.0);
    MockRenderer corrupted(1.0);
    MockImageTextScorer scorer;
    Rng rng(202);
    for (int i = 0; i < 500 && c.ok; ++i) {
        SynthesisRequest req;
        req.layout = random_layout(rng, 320, 240);
        req.prompt = build_lis_prompt(req.layout);
        req.batch_size = 1;
        req.seed = mix_seed(77, i);
        const ImageBatch a = clean.synthesize(req);
        const ImageBatch b = corrupted.synthesize(req);
        c.require(!b.meta[0].hallucinations.empty(), "hallucination injected");
        const double lacs_clean = score_sample(scorer, a.images[0], req.layout).lacs;
        const double lacs_bad = score_sample(scorer, b.images[0], req.layout).lacs;
        c.require(lacs_clean > lacs_bad,
                  "pair " + std::to_string(i) + ": " + std::to_string(lacs_clean) +
                      " !> " + std::to_string(lacs_bad));
    }
    return c;
}

Check parser_robustness() {
    Check c;
    const Canvas canvas{512, 512};
    Rng rng(303);

    // templated responses with fuzzed whitespace and surrounding prose
    static const std::vector<std::string> prefixes = {
        "", "Sure! ", "Here is the layout:\n", "objects coming up\n\n", "  \t"};
    static const std::vector<std::string> suffixes = {
        "", "\n", "\nAnything else?", " -- end of layout", "\n\n(done)"};
    for (int i = 0; i < 1000 && c.ok; ++i) {
        const Layout l = random_layout(rng);
        const auto desc = describe_layout(l, canvas);
        std::string text = desc.serialize();
        // fuzz: random extra whitespace around commas
        if (bounded(rng, 2)) {
            std::string loose;
            for (char ch : text) {
                loose += ch;
                if (ch == ',' && bounded(rng, 2)) loose += "  ";
            }
            text = loose;
        }
        text = prefixes[bounded(rng, prefixes.size())] + text +
               suffixes[bounded(rng, suffixes.size())];
        try {
            const Layout parsed = parse_layout_response(text, canvas, desc.caption);
            c.require(parsed.objects.size() == l.objects.size(), "object count preserved");
        } catch (const std::exception& e) {
            c.require(false, std::string("templated parse failed: ") + e.what());
        }
    }

    // corrupted responses raise the matching typed error
    for (int i = 0; i < 1000 && c.ok; ++i) {
        const Layout l = random_layout(rng);
        auto desc = describe_layout(l, canvas);
        const int kind = i % 3;
        if (kind == 0) {
            desc.entries[bounded(rng, desc.entries.size())].box[0] = canvas.width;  // runs off
            try {
                parse_layout_response(desc.serialize(), canvas, desc.caption);
                c.require(false, "out-of-bounds box accepted");
            } catch (const BoxInvalid&) {
            } catch (const std::exception& e) {
                c.require(false, std::string("wrong error for oob box: ") + e.what());
            }
        } else if (kind == 1) {
            try {
                parse_layout_response(desc.serialize(), canvas, desc.caption + ", a zebra");
                c.require(false, "category mismatch accepted");
            } catch (const CategoryMismatch&) {
            } catch (const std::exception& e) {
                c.require(false, std::string("wrong error for mismatch: ") + e.what());
            }
        } else {
            const std::string full = desc.serialize();
            const auto open = full.find('[');
            const std::size_t cut = open + 1 + bounded(rng, full.size() - open - 2);
            try {
                parse_layout_response(full.substr(0, cut), canvas, desc.caption);
                c.require(false, "truncated list accepted");
            } catch (const ParseFailure&) {
            } catch (const std::exception& e) {
                c.require(false, std::string("wrong error for truncation: ") + e.what());
            }
        }
    }

    // round trip up to integer rounding
    for (int i = 0; i < 1000 && c.ok; ++i) {
        const Layout l = random_layout(rng);
        const auto desc = describe_layout(l, canvas);
        const Layout parsed = parse_layout_response(desc.serialize(), canvas, desc.caption);
        c.require(parsed.objects.size() == l.objects.size(), "round trip count");
        const double sx = canvas.width / l.image_frame.width;
        const double sy = canvas.height / l.image_frame.height;
        for (std::size_t k = 0; k < l.objects.size() && c.ok; ++k) {
            const auto& p = parsed.objects[k];
            const auto& o = l.objects[k];
            c.require(p.category.name == o.category.name, "round trip category order");
            c.require(std::abs(p.box.x - o.box.x * sx) <= 0.5 &&
                          std::abs(p.box.y - o.box.y * sy) <= 0.5 &&
                          std::abs(p.box.w - o.box.w * sx) <= 0.5 &&
                          std::abs(p.box.h - o.box.h * sy) <= 0.5,
                      "round trip box within rounding");
        }
    }
    return c;
}

Check em_correctness() {
    Check c;
    const Eigen::Vector4d m0(0.20, 0.20, 0.15, 0.15);
    const Eigen::Vector4d m1(0.70, 0.70, 0.20, 0.20);  // distance 0.71 >= 0.3
    const double kStd = 0.03, w0 = 0.4;

    int recovered = 0;
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(mix_seed(404, seed));
        std::vector<Eigen::VectorXd> samples;
        for (int i = 0; i < 500; ++i) {
            const Eigen::Vector4d& m = uniform01(rng) < w0 ? m0 : m1;
            Eigen::VectorXd x(4);
            for (int d = 0; d < 4; ++d) x[d] = m[d] + kStd * gaussian(rng);
            samples.push_back(std::move(x));
        }
        FitTrace trace;
        const GaussianMixture g = fit_gmm(samples, 2, FitOptions{}, mix_seed(505, seed), &trace);
        for (std::size_t i = 1; i < trace.log_likelihoods.size(); ++i)
            c.require(trace.log_likelihoods[i] >= trace.log_likelihoods[i - 1] - 1e-8,
                      "log-likelihood decreased at iteration " + std::to_string(i));

        // match fitted components to planted ones by nearest mean
        const int a = (g.means[0] - m0).norm() < (g.means[1] - m0).norm() ? 0 : 1;
        const int b = 1 - a;
        const bool ok = (g.means[a] - m0).norm() < 0.05 && (g.means[b] - m1).norm() < 0.05 &&
                        std::abs(g.weights[a] - w0) < 0.1 &&
                        std::abs(g.weights[b] - (1 - w0)) < 0.1;
        recovered += ok ? 1 : 0;
    }
    c.require(recovered >= 95, "only " + std::to_string(recovered) + "/100 seeds recovered");
    return c;
}

Check sampling_soundness() {
    Check c;
    fixtures::TempDir tmp("acc_gmm");
    fixtures::write_demo_coco(tmp.path() / "coco.json", 10);
    const FewShotSet set = load_coco(tmp.path() / "coco.json");

    EnsembleOptions opts;
    opts.variant = CooccurrenceVariant::draft_from_gt;
    const GmmEnsemble ensemble = fit_ensemble(set, opts, 606);
    const int alpha = 500;  // 10 layouts x 2 boxes x 500 = 10,000 boxes
    const auto layouts = sample_layouts(ensemble, set, alpha, 707);
    c.require(layouts.size() == set.layouts.size() * alpha, "sample cardinality");

    long boxes = 0;
    for (std::size_t i = 0; i < layouts.size() && c.ok; ++i) {
        c.require(layouts[i].valid(), "layout " + std::to_string(i) + " invalid after repair");
        boxes += static_cast<long>(layouts[i].objects.size());
        const auto& seed_layout = set.layouts[i / alpha];
        c.require(layouts[i].category_counts() == seed_layout.category_counts(),
                  "variant-1 counts diverge from seed layout");
    }
    c.require(boxes == 10000, "expected 10,000 boxes, got " + std::to_string(boxes));
    return c;
}

Check pipeline_contracts() {
    Check c;
    fixtures::TempDir tmp("acc_pipe");
    fixtures::write_demo_coco(tmp.path() / "coco.json", 10);
    PipelineConfig config;
    config.annotations_path = tmp.path() / "coco.json";
    config.output_dir = tmp.path() / "run_a";
    config.seed = 11;

    const RunReport a = run(config);  // shipped defaults: alpha 4, batch 5, top-1
    c.require(a.generated_layouts == 40, "40 generated layouts");
    c.require(a.generated_images == 40, "40 generated images");
    c.require(a.synthesis_calls == 40, "one synthesis call per layout");
    {
        std::ifstream in(a.dataset_path);
        const auto doc = nlohmann::json::parse(in);
        c.require(doc["images"].size() == 50, "dataset merges 40 generated with 10 originals");
    }

    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    };
    PipelineConfig config_b = config;
    config_b.output_dir = tmp.path() / "run_b";
    const RunReport b = run(config_b);
    c.require(slurp(a.dataset_path) == slurp(b.dataset_path),
              "identical seeds give byte-identical dataset JSON");

    const RunReport resumed = run(config);
    c.require(resumed.synthesis_calls == 0, "resume performs zero duplicate synthesis calls");
    c.require(resumed.generated_images == 40, "resume re-emits the full dataset");
    return c;
}

Check ranking_invariants() {
    Check c;
    Rng rng(808);
    for (int round = 0; round < 200 && c.ok; ++round) {
        const int n = 2 + static_cast<int>(bounded(rng, 7));
        std::vector<SampleScore> scores(n);
        for (int i = 0; i < n; ++i) {
            scores[i].sample_ref = i;
            scores[i].lacs = (uniform01(rng) - 0.5) * 2;
            if (bounded(rng, 4) == 0 && i > 0) scores[i].lacs = scores[i - 1].lacs;  // ties
        }

        const auto top1 = rank_and_pick(scores, 1);
        int argmax = 0;
        for (int i = 1; i < n; ++i)
            if (scores[i].lacs > scores[argmax].lacs) argmax = i;
        c.require(top1.size() == 1 && top1[0] == argmax, "top-1 is the argmax");

        const int top_n = 1 + static_cast<int>(bounded(rng, n));
        const auto picked = rank_and_pick(scores, top_n);

        std::vector<SampleScore> shifted = scores;
        const double shift = (uniform01(rng) - 0.5) * 10;
        for (auto& s : shifted) s.lacs += shift;
        c.require(rank_and_pick(shifted, top_n) == picked, "constant-shift invariance");
        c.require(rank_and_pick(scores, top_n) == picked, "deterministic tie-breaks");

        std::vector<SampleScore> picked_scores;
        for (int i : picked) picked_scores.push_back(scores[i]);
        c.require(mlacs(picked_scores) >= mlacs(scores) - 1e-12, "mLACS(picked) >= mLACS(all)");
    }
    return c;
}

Check heatmap_exactness() {
    Check c;
    {
        Layout l;
        l.image_frame = {640, 480};
        l.objects = {{{1, "cat"}, {0, 0, 640, 480}}};
        l.caption = make_caption(l.objects);
        const auto grid = heatmap({l}, {1, "cat"}, 24, 24);
        for (int v : grid.counts) c.require(v == 1, "full-frame box must cover each cell once");
    }

    Rng rng(909);
    for (int round = 0; round < 100 && c.ok; ++round) {
        std::vector<Layout> layouts;
        const int n = 1 + static_cast<int>(bounded(rng, 5));
        for (int i = 0; i < n; ++i) layouts.push_back(random_layout(rng));
        const CategoryLabel cat{1, "cat"};
        const int res = 8 + static_cast<int>(bounded(rng, 56));
        const auto grid = heatmap(layouts, cat, res, res);

        long oracle = 0;
        for (const auto& l : layouts) {
            const double sx = res / l.image_frame.width, sy = res / l.image_frame.height;
            for (const auto& o : l.objects) {
                if (o.category.id != cat.id) continue;
                const long x0 = static_cast<long>(std::floor(o.box.x * sx));
                const long y0 = static_cast<long>(std::floor(o.box.y * sy));
                const long x1 = static_cast<long>(std::ceil((o.box.x + o.box.w) * sx));
                const long y1 = static_cast<long>(std::ceil((o.box.y + o.box.h) * sy));
                oracle += (x1 - x0) * (y1 - y0);
            }
        }
        c.require(grid.total() == oracle, "grid sum diverges from the rasterization oracle");
    }
    return c;
}

Check config_fidelity() {
    Check c;
    const PipelineConfig d;
    c.require(d.steps == 50, "diffusion steps default");
    c.require(d.guidance_scale == 7.5, "guidance scale default");
    c.require(d.grounding_alpha == 0.8, "grounding alpha default");
    c.require(d.mis_fraction == 0.36, "masked-image-synthesis fraction default");
    c.require(d.lis_batch == 5, "synthesis batch default");
    c.require(d.alpha == 4, "augmentation ratio default");
    c.require(d.llm_example_batch == 5, "in-context example batch default");
    c.require(d.top_n == 1, "top-1 picking default");
    return c;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_s;  // 0 = no limit
        std::function<Check()> body;
    };
    const std::vector<Criterion> criteria = {
        {"1. score algebra and softmax oracle", 5, lacs_algebra},
        {"2. hallucination strictly lowers the layout-aware score", 60,
         hallucination_monotonicity},
        {"3. layout parser robustness and typed errors", 0, parser_robustness},
        {"4. EM recovers a planted mixture with monotone likelihood", 120, em_correctness},
        {"5. GMM sampling soundness and count drafting", 0, sampling_soundness},
        {"6. pipeline counts, determinism, and resume", 0, pipeline_contracts},
        {"7. ranking invariants", 0, ranking_invariants},
        {"8. heatmap rasterization exactness", 0, heatmap_exactness},
        {"9. default config matches the published recipe", 0, config_fidelity},
    };

    bool all_ok = true;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Check result;
        try {
            result = criterion.body();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("unexpected exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (criterion.budget_s > 0 && elapsed > criterion.budget_s) {
            result.ok = false;
            result.detail = "exceeded " + std::to_string(criterion.budget_s) + "s budget";
        }
        std::printf("[%s] %s (%.2fs)%s%s\n", result.ok ? "PASS" : "FAIL", criterion.name, elapsed,
                     result.detail.empty() ? "" : " -- ", result.detail.c_str());
        all_ok = all_ok && result.ok;
    }
    return all_ok ? 0 : 1;
}
