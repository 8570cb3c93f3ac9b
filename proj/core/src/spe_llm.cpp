#include "augment/spe_llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "augment/annotations.hpp"
#include "augment/rng.hpp"

namespace augment {

using nlohmann::json;

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split_phrases(const std::string& caption) {
    std::vector<std::string> phrases;
    std::size_t start = 0;
    while (start < caption.size()) {
        auto comma = caption.find(", ", start);
        if (comma == std::string::npos) {
            phrases.push_back(caption.substr(start));
            break;
        }
        phrases.push_back(caption.substr(start, comma - start));
        start = comma + 2;
    }
    return phrases;
}

/// "a cat" / "an orange" -> "cat" / "orange"; bare names pass through.
std::string strip_article(const std::string& phrase) {
    if (phrase.rfind("a ", 0) == 0) return phrase.substr(2);
    if (phrase.rfind("an ", 0) == 0) return phrase.substr(3);
    return phrase;
}

std::multiset<std::string> caption_name_multiset(const std::string& caption) {
    std::multiset<std::string> names;
    for (const auto& p : split_phrases(caption)) names.insert(lowercase(strip_article(p)));
    return names;
}

void replace_all(std::string& text, const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
}

}  // namespace

std::string LayoutDescription::serialize() const {
    std::ostringstream os;
    os << "caption:'" << caption << "', objects: [";
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i) os << ", ";
        const auto& e = entries[i];
        os << "'" << e.name << "', [" << e.box[0] << ", " << e.box[1] << ", " << e.box[2] << ", "
           << e.box[3] << "]";
    }
    os << "]";
    return os.str();
}

const std::string& default_prompt_template() {
    static const std::string text =
        "You generate bounding box layouts for image captions.\n"
        "The canvas is {CANVAS_W}x{CANVAS_H} pixels with the origin at the top-left corner.\n"
        "Each box is [x, y, w, h] with integer coordinates. Boxes must stay inside the canvas:\n"
        "x >= 0, y >= 0, w > 0, h > 0, x + w <= {CANVAS_W}, y + h <= {CANVAS_H}.\n"
        "Boxes should be plausibly sized and placed for their object category.\n"
        "For each object mentioned in the caption, output its quoted name followed by its box.\n"
        "\n"
        "{EXAMPLES}\n"
        "caption:'{QUERY_CAPTION}', objects:";
    return text;
}

std::string load_prompt_template(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prompt template " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string PromptTemplate::render() const {
    std::string examples_text;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (i) examples_text += "\n";
        examples_text += examples[i].serialize();
    }
    std::string text = instruction_header;
    replace_all(text, "{EXAMPLES}", examples_text);
    replace_all(text, "{QUERY_CAPTION}", query_caption);
    return text;
}

LayoutDescription describe_layout(const Layout& layout, Canvas canvas) {
    if (canvas.width <= 0 || canvas.height <= 0)
        throw std::invalid_argument("canvas dimensions must be positive");
    const double sx = canvas.width / layout.image_frame.width;
    const double sy = canvas.height / layout.image_frame.height;
    LayoutDescription desc;
    for (const auto& o : layout.objects) {
        LayoutDescription::Entry e;
        e.name = o.category.name;
        e.box = {static_cast<int>(std::lround(o.box.x * sx)),
                 static_cast<int>(std::lround(o.box.y * sy)),
                 static_cast<int>(std::lround(o.box.w * sx)),
                 static_cast<int>(std::lround(o.box.h * sy))};
        desc.entries.push_back(std::move(e));
    }
    desc.caption = make_caption(layout.objects);
    return desc;
}

std::string make_query_caption(const Layout& base_layout, std::uint64_t rng_seed) {
    if (base_layout.objects.empty()) throw std::invalid_argument("layout has no objects");
    auto phrases = split_phrases(base_layout.caption);
    Rng rng(mix_seed(rng_seed, 0x71c4, 0));
    shuffle_seeded(phrases, rng);
    std::string out;
    for (const auto& p : phrases) {
        if (!out.empty()) out += ", ";
        out += p;
    }
    return out;
}

PromptTemplate build_prompt(std::vector<LayoutDescription> examples,
                            const std::string& query_caption, std::uint64_t rng_seed,
                            Canvas canvas, const std::optional<std::string>& template_text) {
    if (examples.empty()) throw std::invalid_argument("at least one in-context example required");
    if (query_caption.empty()) throw std::invalid_argument("query caption must be non-empty");
    Rng rng(mix_seed(rng_seed, 0xe8a7, 0));
    shuffle_seeded(examples, rng);

    PromptTemplate prompt;
    prompt.instruction_header = template_text.value_or(default_prompt_template());
    replace_all(prompt.instruction_header, "{CANVAS_W}", std::to_string(canvas.width));
    replace_all(prompt.instruction_header, "{CANVAS_H}", std::to_string(canvas.height));
    prompt.examples = std::move(examples);
    prompt.query_caption = query_caption;
    return prompt;
}

namespace {

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    bool accept(char c) {
        skip_ws();
        if (!eof() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
};

bool parse_int(Cursor& cur, long& out) {
    cur.skip_ws();
    std::size_t start = cur.pos;
    if (!cur.eof() && (cur.peek() == '-' || cur.peek() == '+')) ++cur.pos;
    std::size_t digits = 0;
    while (!cur.eof() && std::isdigit(static_cast<unsigned char>(cur.peek()))) ++cur.pos, ++digits;
    if (digits == 0) {
        cur.pos = start;
        return false;
    }
    // tolerate a fractional tail like "10.0"; rounds to nearest
    if (!cur.eof() && cur.peek() == '.') {
        std::size_t frac = cur.pos + 1;
        while (frac < cur.text.size() &&
               std::isdigit(static_cast<unsigned char>(cur.text[frac])))
            ++frac;
        out = std::lround(std::stod(cur.text.substr(start, frac - start)));
        cur.pos = frac;
        return true;
    }
    out = std::stol(cur.text.substr(start, cur.pos - start));
    return true;
}

bool parse_quoted(Cursor& cur, std::string& out) {
    cur.skip_ws();
    if (cur.eof() || (cur.peek() != '\'' && cur.peek() != '"')) return false;
    const char quote = cur.peek();
    ++cur.pos;
    std::size_t start = cur.pos;
    while (!cur.eof() && cur.peek() != quote) ++cur.pos;
    if (cur.eof()) return false;
    out = cur.text.substr(start, cur.pos - start);
    ++cur.pos;
    return true;
}

/// Locates the opening '[' of the first objects list: "objects : ["
/// preferred, otherwise the first '[' directly followed by a quoted name.
std::size_t find_list_start(const std::string& text) {
    std::size_t from = 0;
    while ((from = text.find("objects", from)) != std::string::npos) {
        Cursor cur{text, from + 7};
        if (cur.accept(':') && cur.accept('[')) return cur.pos - 1;
        from += 7;
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[') continue;
        Cursor cur{text, i + 1};
        cur.skip_ws();
        if (!cur.eof() && (cur.peek() == '\'' || cur.peek() == '"')) return i;
    }
    return std::string::npos;
}

}  // namespace

Layout parse_layout_response(const std::string& response, Canvas canvas,
                             const std::string& expected_caption) {
    const std::size_t list_start = find_list_start(response);
    if (list_start == std::string::npos)
        throw ParseFailure("no objects list found in response");

    Cursor cur{response, list_start + 1};
    std::vector<LayoutDescription::Entry> entries;
    while (true) {
        cur.skip_ws();
        if (cur.accept(']')) break;
        if (!entries.empty() && !cur.accept(','))
            throw ParseFailure("expected ',' or ']' in objects list");
        std::string name;
        if (!parse_quoted(cur, name))
            throw ParseFailure("expected quoted object name at entry " +
                               std::to_string(entries.size()));
        if (!cur.accept(',') || !cur.accept('['))
            throw ParseFailure("expected ', [' after object name");
        std::array<int, 4> box{};
        for (int k = 0; k < 4; ++k) {
            if (k && !cur.accept(',')) throw ParseFailure("expected ',' between coordinates");
            long v = 0;
            if (!parse_int(cur, v)) throw ParseFailure("expected integer coordinate");
            box[static_cast<std::size_t>(k)] = static_cast<int>(v);
        }
        if (!cur.accept(']')) throw ParseFailure("unterminated box");
        entries.push_back({std::move(name), box});
    }
    if (entries.empty()) throw ParseFailure("objects list is empty");

    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& b = entries[i].box;
        if (b[2] <= 0 || b[3] <= 0) throw BoxInvalid(i, "non-positive size");
        if (b[0] < 0 || b[1] < 0 || b[0] + b[2] > canvas.width || b[1] + b[3] > canvas.height)
            throw BoxInvalid(i, "outside canvas " + std::to_string(canvas.width) + "x" +
                                    std::to_string(canvas.height));
    }

    std::multiset<std::string> parsed_names;
    for (const auto& e : entries) parsed_names.insert(lowercase(e.name));
    if (parsed_names != caption_name_multiset(expected_caption))
        throw CategoryMismatch("parsed categories do not match caption '" + expected_caption +
                               "'");

    Layout layout;
    layout.image_frame = {static_cast<double>(canvas.width), static_cast<double>(canvas.height)};
    layout.source = LayoutSource::llm_generated;
    int next_id = 1;
    std::map<std::string, int> ids;
    for (const auto& e : entries) {
        auto [it, inserted] = ids.emplace(lowercase(e.name), next_id);
        if (inserted) ++next_id;
        layout.objects.push_back({CategoryLabel{it->second, e.name},
                                  BBox{static_cast<double>(e.box[0]),
                                       static_cast<double>(e.box[1]),
                                       static_cast<double>(e.box[2]),
                                       static_cast<double>(e.box[3])}});
    }
    layout.caption = make_caption(layout.objects);
    return layout;
}

namespace {

/// Rescales a canvas-framed parsed layout onto the target frame and remaps
/// category labels through the registry.
Layout adapt_parsed_layout(const Layout& parsed, const Layout& target,
                           const CategoryRegistry& registry) {
    Layout out;
    out.image_frame = target.image_frame;
    out.source = LayoutSource::llm_generated;
    const double sx = target.image_frame.width / parsed.image_frame.width;
    const double sy = target.image_frame.height / parsed.image_frame.height;
    for (const auto& o : parsed.objects) {
        const CategoryLabel* cat = registry.find_name(o.category.name);
        CategoryLabel label = cat ? *cat : o.category;
        BBox box{o.box.x * sx, o.box.y * sy, o.box.w * sx, o.box.h * sy};
        // guard against float edge spill after rescale
        box.x = std::clamp(box.x, 0.0, target.image_frame.width - box.w);
        box.y = std::clamp(box.y, 0.0, target.image_frame.height - box.h);
        out.objects.push_back({std::move(label), box});
    }
    out.caption = make_caption(out.objects);
    return out;
}

}  // namespace

GenerateOutcome generate_layouts(const FewShotSet& set, CompletionBackend& backend,
                                 const GenerateOptions& options) {
    if (options.alpha < 1) throw std::invalid_argument("alpha must be >= 1");
    if (options.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (set.layouts.empty()) throw std::invalid_argument("few-shot set is empty");

    GenerateOutcome outcome;
    const std::size_t n = set.layouts.size();
    const std::size_t bs = static_cast<std::size_t>(options.batch_size);

    for (std::size_t batch_start = 0; batch_start < n; batch_start += bs) {
        const std::size_t batch_end = std::min(n, batch_start + bs);
        std::vector<LayoutDescription> examples;
        for (std::size_t i = batch_start; i < batch_end; ++i)
            examples.push_back(describe_layout(set.layouts[i], options.canvas));

        for (std::size_t i = batch_start; i < batch_end; ++i) {
            for (int r = 0; r < options.alpha; ++r) {
                bool produced = false;
                int attempts_used = 0;
                for (int attempt = 0; attempt <= options.max_retries && !produced; ++attempt) {
                    attempts_used = attempt;
                    const std::uint64_t seed =
                        mix_seed(options.rng_seed, i * 1000003ULL + static_cast<std::uint64_t>(r),
                                 static_cast<std::uint64_t>(attempt));
                    const std::string query = make_query_caption(set.layouts[i], seed);
                    const auto prompt =
                        build_prompt(examples, query, seed, options.canvas,
                                     options.template_text)
                            .render();
                    std::string response;
                    try {
                        response = backend.complete(prompt, options.max_tokens,
                                                    options.temperature, seed);
                    } catch (const std::exception& e) {
                        throw CompletionTransportError("completion backend failed at layout " +
                                           std::to_string(i) + " repeat " + std::to_string(r) +
                                           " (" + std::to_string(outcome.layouts.size()) +
                                           " layouts completed): " + e.what());
                    }
                    try {
                        Layout parsed = parse_layout_response(response, options.canvas, query);
                        outcome.layouts.push_back(
                            adapt_parsed_layout(parsed, set.layouts[i], set.categories));
                        produced = true;
                    } catch (const LayoutResponseError&) {
                        // retryable; a fresh seed reshuffles examples and caption
                    }
                }
                if (!produced) {
                    Rng rng(mix_seed(options.rng_seed,
                                     i * 1000003ULL + static_cast<std::uint64_t>(r), 0xfa11));
                    Layout fallback = uniform01(rng) < 0.5 ? flip_layout_x(set.layouts[i])
                                                           : set.layouts[i];
                    fallback.source = LayoutSource::oversampled;
                    outcome.layouts.push_back(std::move(fallback));
                    ++outcome.fallback_count;
                }
                outcome.retries_per_layout.push_back(attempts_used);
            }
        }
    }
    return outcome;
}

HttpCompletionBackend::HttpCompletionBackend(std::string base_url, std::string model,
                                             std::string api_key_env, int max_retries)
    : base_url_(std::move(base_url)), model_(std::move(model)), max_retries_(max_retries) {
    if (const char* key = std::getenv(api_key_env.c_str())) api_key_ = key;
}

std::string HttpCompletionBackend::complete(const std::string& prompt, int max_tokens,
                                            double temperature, std::uint64_t seed) {
    json body{{"model", model_},
              {"prompt", prompt},
              {"max_tokens", max_tokens},
              {"temperature", temperature},
              {"seed", seed}};
    httplib::Client client(base_url_);
    client.set_read_timeout(300, 0);
    if (!api_key_.empty()) client.set_default_headers({{"Authorization", "Bearer " + api_key_}});

    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        auto res = client.Post("/v1/completions", body.dump(), "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        json resp = json::parse(res->body, nullptr, false);
        if (resp.is_discarded() || !resp.contains("choices") || resp["choices"].empty())
            throw std::runtime_error("completion response missing choices");
        return resp["choices"][0].value("text", std::string{});
    }
    throw std::runtime_error("completion request failed after " +
                             std::to_string(max_retries_ + 1) + " attempts: " + last_error);
}

DirectoryCompletionBackend::DirectoryCompletionBackend(std::filesystem::path dir)
    : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_))
        throw std::invalid_argument("not a directory: " + dir_.string());
}

std::string DirectoryCompletionBackend::prompt_hash(const std::string& prompt) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : prompt) h = (h ^ c) * 1099511628211ULL;
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string DirectoryCompletionBackend::complete(const std::string& prompt, int, double,
                                                 std::uint64_t) {
    const auto path = dir_ / (prompt_hash(prompt) + ".txt");
    std::ifstream in(path);
    if (!in) throw std::runtime_error("no canned response at " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::unique_ptr<CompletionBackend> make_mock_llm_backend(Canvas canvas) {
    auto fn = [canvas](const std::string& prompt, std::uint64_t seed) -> std::string {
        // query caption is the last "caption:'...'" in the prompt
        const auto key = prompt.rfind("caption:'");
        if (key == std::string::npos) return "";
        const auto start = key + 9;
        const auto end = prompt.find('\'', start);
        if (end == std::string::npos) return "";
        const std::string caption = prompt.substr(start, end - start);

        Rng rng(mix_seed(seed, 0x6d6f636bULL, 0));
        std::ostringstream os;
        os << " [";
        bool first = true;
        for (const auto& phrase : split_phrases(caption)) {
            const std::string name = strip_article(phrase);
            const int w = 16 + static_cast<int>(bounded(rng, canvas.width / 2));
            const int h = 16 + static_cast<int>(bounded(rng, canvas.height / 2));
            const int x = static_cast<int>(bounded(rng, canvas.width - w + 1));
            const int y = static_cast<int>(bounded(rng, canvas.height - h + 1));
            if (!first) os << ", ";
            first = false;
            os << "'" << name << "', [" << x << ", " << y << ", " << w << ", " << h << "]";
        }
        os << "]\n";
        return os.str();
    };
    return std::make_unique<CallableCompletionBackend>(fn, "mock-llm", true);
}

}  // namespace augment
