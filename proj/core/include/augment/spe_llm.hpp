#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "augment/types.hpp"

namespace augment {

struct Canvas {
    int width = 512;
    int height = 512;
};

/// Textual form of a layout: the in-context example format and the parse
/// target for completions.
struct LayoutDescription {
    std::string caption;
    struct Entry {
        std::string name;
        std::array<int, 4> box;  // x, y, w, h in canvas coordinates
    };
    std::vector<Entry> entries;

    /// "caption:'a cat', objects: ['cat', [10, 20, 100, 80]]"
    std::string serialize() const;
};

struct PromptTemplate {
    std::string instruction_header;
    std::vector<LayoutDescription> examples;
    std::string query_caption;

    /// Full prompt text, ending right after "objects:" so the model
    /// continues with the box list.
    std::string render() const;
};

// Parse/validation failures are retryable signals for the generation loop.
struct LayoutResponseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseFailure : LayoutResponseError {
    using LayoutResponseError::LayoutResponseError;
};
struct BoxInvalid : LayoutResponseError {
    BoxInvalid(std::size_t index, const std::string& msg)
        : LayoutResponseError("box " + std::to_string(index) + ": " + msg), index(index) {}
    std::size_t index;
};
struct CategoryMismatch : LayoutResponseError {
    using LayoutResponseError::LayoutResponseError;
};

/// Transport-level failure; carries a partial-progress note and is not
/// retried by the generation loop.
struct CompletionTransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual std::string complete(const std::string& prompt, int max_tokens, double temperature,
                                 std::uint64_t seed) = 0;
    virtual std::string id() const = 0;
    virtual bool deterministic() const { return false; }
};

/// Rescales a layout's boxes into canvas coordinates, rounding to the
/// nearest integer; object order is preserved and the caption regenerated.
LayoutDescription describe_layout(const Layout& layout, Canvas canvas = {});

/// Caption with the object phrases permuted by the seed.
std::string make_query_caption(const Layout& base_layout, std::uint64_t rng_seed);

/// Shuffles the examples by seed and assembles the template with the
/// default (or overridden) instruction header.
PromptTemplate build_prompt(std::vector<LayoutDescription> examples,
                            const std::string& query_caption, std::uint64_t rng_seed,
                            Canvas canvas = {},
                            const std::optional<std::string>& template_text = std::nullopt);

/// Default instruction template; placeholders {CANVAS_W}, {CANVAS_H},
/// {EXAMPLES}, {QUERY_CAPTION}.
const std::string& default_prompt_template();
std::string load_prompt_template(const std::filesystem::path& path);

/// Extracts the first objects list from free-form completion text,
/// validates boxes against the canvas and the category multiset against
/// the expected caption, and returns a canvas-framed layout.
Layout parse_layout_response(const std::string& response, Canvas canvas,
                             const std::string& expected_caption);

struct GenerateOptions {
    int alpha = 4;
    int batch_size = 5;  // in-context examples per prompt
    int max_retries = 3;
    int max_tokens = 512;
    double temperature = 0.7;
    std::uint64_t rng_seed = 0;
    Canvas canvas = {};
    std::optional<std::string> template_text;
};

struct GenerateOutcome {
    std::vector<Layout> layouts;          // exactly alpha * |set.layouts|
    std::vector<int> retries_per_layout;  // parallel to layouts
    int fallback_count = 0;               // slots that fell back to oversampling
};

/// Spatial prior extrapolation: per ground-truth layout, alpha
/// auto-completions against the backend; slots whose completions never
/// parse fall back to an oversampled copy so the output cardinality is
/// guaranteed.
GenerateOutcome generate_layouts(const FewShotSet& set, CompletionBackend& backend,
                                 const GenerateOptions& options);

/// OpenAI-style completion endpoint client (POST {base}/v1/completions).
class HttpCompletionBackend : public CompletionBackend {
public:
    HttpCompletionBackend(std::string base_url, std::string model,
                          std::string api_key_env = "LLM_API_KEY", int max_retries = 3);
    std::string complete(const std::string& prompt, int max_tokens, double temperature,
                         std::uint64_t seed) override;
    std::string id() const override { return "http:" + base_url_ + "#" + model_; }

private:
    std::string base_url_;
    std::string model_;
    std::string api_key_;
    int max_retries_;
};

/// Canned-response backend: responses live in a directory as
/// <fnv1a(prompt) hex>.txt; missing files raise.
class DirectoryCompletionBackend : public CompletionBackend {
public:
    explicit DirectoryCompletionBackend(std::filesystem::path dir);
    std::string complete(const std::string& prompt, int max_tokens, double temperature,
                         std::uint64_t seed) override;
    std::string id() const override { return "dir:" + dir_.string(); }
    bool deterministic() const override { return true; }

    static std::string prompt_hash(const std::string& prompt);

private:
    std::filesystem::path dir_;
};

/// In-process backend driven by a callable; the default test double and
/// also the self-contained "mock LLM" used by the pipeline, which answers
/// every prompt with a valid layout for the expected caption.
class CallableCompletionBackend : public CompletionBackend {
public:
    using Fn = std::function<std::string(const std::string& prompt, std::uint64_t seed)>;
    CallableCompletionBackend(Fn fn, std::string id, bool deterministic = true)
        : fn_(std::move(fn)), id_(std::move(id)), deterministic_(deterministic) {}

    std::string complete(const std::string& prompt, int, double, std::uint64_t seed) override {
        return fn_(prompt, seed);
    }
    std::string id() const override { return id_; }
    bool deterministic() const override { return deterministic_; }

private:
    Fn fn_;
    std::string id_;
    bool deterministic_;
};

/// Backend that synthesizes plausible completions locally: parses the
/// query caption out of the prompt and emits randomly placed valid boxes.
std::unique_ptr<CompletionBackend> make_mock_llm_backend(Canvas canvas = {});

}  // namespace augment
