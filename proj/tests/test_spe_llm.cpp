#include <doctest.h>

#include <map>
#include <set>

#include "augment/annotations.hpp"
#include "augment/rng.hpp"
#include "augment/spe_llm.hpp"
#include "fixtures.hpp"

using namespace augment;

namespace {

std::multiset<std::string> phrase_multiset(const std::string& caption) {
    std::multiset<std::string> out;
    std::size_t start = 0;
    while (start < caption.size()) {
        auto comma = caption.find(", ", start);
        if (comma == std::string::npos) {
            out.insert(caption.substr(start));
            break;
        }
        out.insert(caption.substr(start, comma - start));
        start = comma + 2;
    }
    return out;
}

Layout random_layout(Rng& rng, int max_objects = 6) {
    static const std::vector<std::string> names = {"cat",  "car",    "person", "dog",
                                                   "boat", "orange", "bench"};
    Layout l;
    l.image_frame = {640, 480};
    const int n = 1 + static_cast<int>(bounded(rng, static_cast<std::uint64_t>(max_objects)));
    for (int i = 0; i < n; ++i) {
        const auto& name = names[bounded(rng, names.size())];
        const double w = 8 + uniform01(rng) * 300;
        const double h = 8 + uniform01(rng) * 220;
        const double x = uniform01(rng) * (640 - w);
        const double y = uniform01(rng) * (480 - h);
        const int id = static_cast<int>(&name - names.data()) + 1;
        l.objects.push_back({{id, name}, {x, y, w, h}});
    }
    l.caption = make_caption(l.objects);
    return l;
}

}  // namespace

TEST_CASE("describe_layout rescales to the prompt canvas with rounding") {
    Layout l;
    l.image_frame = {640, 480};
    l.objects = {{{1, "cat"}, {64, 48, 128, 96}}};
    l.caption = make_caption(l.objects);

    const auto desc = describe_layout(l, {512, 512});
    REQUIRE(desc.entries.size() == 1);
    // 64*512/640 = 51.2 -> 51; 48*512/480 = 51.2 -> 51; 128*512/640 = 102.4 -> 102
    CHECK(desc.entries[0].box == std::array<int, 4>{51, 51, 102, 102});
    CHECK(desc.caption == "a cat");

    CHECK_THROWS_AS(describe_layout(l, {0, 512}), std::invalid_argument);

    const auto identity = describe_layout(l, {640, 480});
    CHECK(identity.entries[0].box == std::array<int, 4>{64, 48, 128, 96});
}

TEST_CASE("build_prompt shuffles by seed, preserving the multiset") {
    std::vector<LayoutDescription> examples;
    for (int i = 0; i < 5; ++i) {
        LayoutDescription d;
        d.caption = "a cat " + std::to_string(i);
        d.entries = {{"cat", {i, i, 10, 10}}};
        examples.push_back(d);
    }
    const auto p0 = build_prompt(examples, "a cat", 0);
    const auto p1 = build_prompt(examples, "a cat", 1);

    std::multiset<std::string> m0, m1;
    bool different_order = false;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        m0.insert(p0.examples[i].caption);
        m1.insert(p1.examples[i].caption);
        if (p0.examples[i].caption != p1.examples[i].caption) different_order = true;
    }
    CHECK(m0 == m1);
    CHECK(different_order);

    const auto rendered = p0.render();
    for (const auto& e : examples) CHECK(rendered.find(e.caption) != std::string::npos);
    CHECK(rendered.ends_with("objects:"));
    CHECK(rendered.find("512") != std::string::npos);  // canvas bounds in the header

    CHECK_THROWS_AS(build_prompt({}, "a cat", 0), std::invalid_argument);
}

TEST_CASE("single example prompt") {
    LayoutDescription d;
    d.caption = "a cat";
    d.entries = {{"cat", {1, 2, 3, 4}}};
    const auto p = build_prompt({d}, "a cat", 7);
    REQUIRE(p.examples.size() == 1);
    CHECK(p.examples[0].caption == "a cat");
}

TEST_CASE("make_query_caption permutes phrases") {
    Layout l;
    l.image_frame = {640, 480};
    l.objects = {{{1, "cat"}, {0, 0, 10, 10}},
                 {{2, "car"}, {20, 0, 10, 10}},
                 {{3, "person"}, {40, 0, 10, 10}}};
    l.caption = make_caption(l.objects);

    bool saw_permutation = false;
    for (std::uint64_t seed = 0; seed < 16; ++seed) {
        const auto q = make_query_caption(l, seed);
        CHECK(phrase_multiset(q) == phrase_multiset(l.caption));
        if (q != l.caption) saw_permutation = true;
    }
    CHECK(saw_permutation);

    Layout single;
    single.image_frame = {640, 480};
    single.objects = {{{1, "cat"}, {0, 0, 10, 10}}};
    single.caption = make_caption(single.objects);
    CHECK(make_query_caption(single, 3) == "a cat");

    Layout empty;
    empty.image_frame = {640, 480};
    CHECK_THROWS_AS(make_query_caption(empty, 0), std::invalid_argument);
}

TEST_CASE("phrase multiset preserved over fuzzed layouts") {
    Rng rng(41);
    for (int i = 0; i < 1000; ++i) {
        const Layout l = random_layout(rng);
        const auto q = make_query_caption(l, rng());
        CHECK(phrase_multiset(q) == phrase_multiset(l.caption));
    }
}

TEST_CASE("parse happy path") {
    const auto l =
        parse_layout_response("objects: ['cat', [10, 20, 100, 80]]", {512, 512}, "a cat");
    REQUIRE(l.objects.size() == 1);
    CHECK(l.objects[0].box == BBox{10, 20, 100, 80});
    CHECK(l.objects[0].category.name == "cat");
    CHECK(l.source == LayoutSource::llm_generated);
    CHECK(l.image_frame == ImageFrame{512, 512});
}

TEST_CASE("parse typed failures") {
    CHECK_THROWS_AS(parse_layout_response("no list here", {512, 512}, "a cat"), ParseFailure);
    CHECK_THROWS_AS(
        parse_layout_response("objects: ['cat', [500, 500, 100, 80]]", {512, 512}, "a cat"),
        BoxInvalid);
    CHECK_THROWS_AS(
        parse_layout_response("objects: ['cat', [10, 10, 0, 80]]", {512, 512}, "a cat"),
        BoxInvalid);
    CHECK_THROWS_AS(
        parse_layout_response("objects: ['dog', [10, 10, 50, 80]]", {512, 512}, "a cat"),
        CategoryMismatch);
    CHECK_THROWS_AS(
        parse_layout_response("objects: ['cat', [10, 10, 50", {512, 512}, "a cat"),
        ParseFailure);
}

TEST_CASE("parse ignores prefix/suffix prose and handles bare lists") {
    const auto l = parse_layout_response(
        "Sure! Here is a layout.\nobjects: ['cat', [10, 20, 100, 80], 'car', [200, 220, 150, "
        "100]]\nLet me know if you need more.",
        {512, 512}, "a car, a cat");
    CHECK(l.objects.size() == 2);

    // completion continuing straight after "objects:" has no keyword
    const auto bare =
        parse_layout_response(" ['cat', [10, 20, 100, 80]]", {512, 512}, "a cat");
    CHECK(bare.objects.size() == 1);
}

TEST_CASE("grammar round trip up to integer rounding") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const Layout l = random_layout(rng);
        const auto desc = describe_layout(l, {512, 512});
        const auto parsed =
            parse_layout_response(desc.serialize(), {512, 512}, desc.caption);
        REQUIRE(parsed.objects.size() == l.objects.size());
        const double sx = 512.0 / 640.0, sy = 512.0 / 480.0;
        for (std::size_t k = 0; k < l.objects.size(); ++k) {
            CHECK(parsed.objects[k].category.name == l.objects[k].category.name);
            CHECK(std::abs(parsed.objects[k].box.x - l.objects[k].box.x * sx) <= 0.5);
            CHECK(std::abs(parsed.objects[k].box.y - l.objects[k].box.y * sy) <= 0.5);
            CHECK(std::abs(parsed.objects[k].box.w - l.objects[k].box.w * sx) <= 0.5);
            CHECK(std::abs(parsed.objects[k].box.h - l.objects[k].box.h * sy) <= 0.5);
        }
    }
}

TEST_CASE("generate_layouts cardinality and sources with a fixed-echo backend") {
    fixtures::TempDir tmp("spe");
    fixtures::write_demo_coco(tmp.path() / "ann.json", 10);
    const auto set = load_coco(tmp.path() / "ann.json");

    CallableCompletionBackend echo(
        [](const std::string&, std::uint64_t) {
            return std::string(" ['cat', [10, 20, 100, 80], 'car', [200, 220, 150, 100]]");
        },
        "echo");
    GenerateOptions opts;
    opts.alpha = 4;
    const auto outcome = generate_layouts(set, echo, opts);
    CHECK(outcome.layouts.size() == 40);
    CHECK(outcome.fallback_count == 0);
    for (const auto& l : outcome.layouts) {
        CHECK(l.source == LayoutSource::llm_generated);
        CHECK(l.valid());
        CHECK(l.image_frame == ImageFrame{640, 480});  // rescaled to the GT frame
    }
}

TEST_CASE("garbage backend falls back to oversampling, cardinality intact") {
    fixtures::TempDir tmp("spe");
    fixtures::write_demo_coco(tmp.path() / "ann.json", 5);
    const auto set = load_coco(tmp.path() / "ann.json");

    CallableCompletionBackend garbage(
        [](const std::string&, std::uint64_t) { return std::string("@%&*! no boxes"); },
        "garbage");
    GenerateOptions opts;
    opts.alpha = 3;
    const auto outcome = generate_layouts(set, garbage, opts);
    CHECK(outcome.layouts.size() == 15);
    CHECK(outcome.fallback_count == 15);
    for (const auto& l : outcome.layouts) {
        CHECK(l.source == LayoutSource::oversampled);
        CHECK(l.valid());
    }
}

TEST_CASE("generate_layouts is deterministic for a deterministic backend") {
    fixtures::TempDir tmp("spe");
    fixtures::write_demo_coco(tmp.path() / "ann.json", 4);
    const auto set = load_coco(tmp.path() / "ann.json");

    auto backend = make_mock_llm_backend();
    GenerateOptions opts;
    opts.alpha = 2;
    opts.rng_seed = 17;
    const auto a = generate_layouts(set, *backend, opts);
    const auto b = generate_layouts(set, *backend, opts);
    REQUIRE(a.layouts.size() == b.layouts.size());
    for (std::size_t i = 0; i < a.layouts.size(); ++i) {
        REQUIRE(a.layouts[i].objects.size() == b.layouts[i].objects.size());
        for (std::size_t k = 0; k < a.layouts[i].objects.size(); ++k)
            CHECK(a.layouts[i].objects[k].box == b.layouts[i].objects[k].box);
    }
}

TEST_CASE("transport failure aborts with progress context") {
    fixtures::TempDir tmp("spe");
    fixtures::write_demo_coco(tmp.path() / "ann.json", 2);
    const auto set = load_coco(tmp.path() / "ann.json");

    CallableCompletionBackend broken(
        [](const std::string&, std::uint64_t) -> std::string {
            throw std::runtime_error("connection refused");
        },
        "broken");
    GenerateOptions opts;
    CHECK_THROWS_AS(generate_layouts(set, broken, opts), CompletionTransportError);
}

TEST_CASE("directory backend round trip") {
    fixtures::TempDir tmp("canned");
    const std::string prompt = "caption:'a cat', objects:";
    const auto hash = DirectoryCompletionBackend::prompt_hash(prompt);
    std::ofstream(tmp.path() / (hash + ".txt")) << " ['cat', [1, 2, 3, 4]]";

    DirectoryCompletionBackend backend(tmp.path());
    CHECK(backend.complete(prompt, 128, 0.7, 0) == " ['cat', [1, 2, 3, 4]]");
    CHECK_THROWS(backend.complete("unknown prompt", 128, 0.7, 0));
}

TEST_CASE("template file placeholders") {
    fixtures::TempDir tmp("tpl");
    std::ofstream(tmp.path() / "t.txt")
        << "Canvas {CANVAS_W}x{CANVAS_H}.\n{EXAMPLES}\ncaption:'{QUERY_CAPTION}', objects:";
    const auto text = load_prompt_template(tmp.path() / "t.txt");

    LayoutDescription d;
    d.caption = "a cat";
    d.entries = {{"cat", {1, 2, 3, 4}}};
    const auto rendered = build_prompt({d}, "a cat", 0, {256, 128}, text).render();
    CHECK(rendered.find("Canvas 256x128.") != std::string::npos);
    CHECK(rendered.find("caption:'a cat', objects: ['cat', [1, 2, 3, 4]]") != std::string::npos);
    CHECK(rendered.ends_with("caption:'a cat', objects:"));
}
