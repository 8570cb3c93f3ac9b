#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "augment/lacs.hpp"
#include "augment/lis.hpp"
#include "augment/rng.hpp"
#include "augment/spe_gmm.hpp"
#include "augment/spe_llm.hpp"

namespace {

augment::Layout demo_layout() {
    augment::Layout layout;
    layout.image_frame = {640, 480};
    layout.objects = {{{1, "cat"}, {40, 40, 160, 120}}, {{2, "car"}, {320, 220, 200, 150}}};
    layout.caption = augment::make_caption(layout.objects);
    return layout;
}

void bm_mock_render(benchmark::State& state) {
    augment::MockRenderer renderer;
    augment::SynthesisRequest request;
    request.layout = demo_layout();
    request.prompt = augment::build_lis_prompt(request.layout);
    request.batch_size = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(renderer.synthesize(request));
}
BENCHMARK(bm_mock_render)->Arg(1)->Arg(5);

void bm_score_sample(benchmark::State& state) {
    augment::MockRenderer renderer;
    augment::SynthesisRequest request;
    request.layout = demo_layout();
    request.batch_size = 1;
    const auto batch = renderer.synthesize(request);
    augment::MockImageTextScorer scorer;
    for (auto _ : state)
        benchmark::DoNotOptimize(augment::score_sample(scorer, batch.images[0], request.layout));
}
BENCHMARK(bm_score_sample);

void bm_fit_gmm(benchmark::State& state) {
    augment::Rng rng(7);
    std::vector<Eigen::VectorXd> samples;
    for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
        Eigen::VectorXd v(4);
        for (int d = 0; d < 4; ++d) v(d) = 0.25 + 0.5 * augment::uniform01(rng);
        samples.push_back(std::move(v));
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(augment::fit_gmm(samples, 3, {}, 11));
}
BENCHMARK(bm_fit_gmm)->Arg(100)->Arg(1000);

void bm_parse_response(benchmark::State& state) {
    const std::string response =
        "Sure, here is the layout.\nobjects: ['cat', [10, 20, 100, 80], 'car', "
        "[200, 250, 150, 100]]\nDone.";
    for (auto _ : state)
        benchmark::DoNotOptimize(
            augment::parse_layout_response(response, {}, "a cat, a car"));
}
BENCHMARK(bm_parse_response);

}  // namespace

BENCHMARK_MAIN();
