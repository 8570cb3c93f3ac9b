#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "augment/image.hpp"
#include "augment/types.hpp"

namespace augment {

struct SynthesisRequest {
    Layout layout;
    std::string prompt;
    int batch_size = 5;
    int steps = 50;
    double guidance_scale = 7.5;
    double grounding_alpha = 0.8;
    double mis_fraction = 0.36;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (steps < 1) throw std::invalid_argument("steps must be >= 1");
        if (grounding_alpha < 0.0 || grounding_alpha > 1.0)
            throw std::invalid_argument("grounding_alpha must be in [0, 1]");
        if (mis_fraction < 0.0 || mis_fraction > 1.0)
            throw std::invalid_argument("mis_fraction must be in [0, 1]");
    }
};

struct HallucinationRect {
    std::string category;
    int x = 0, y = 0, w = 0, h = 0;
};

/// Side-channel truth about a rendered image; populated by the mock
/// renderer only, empty for real backends.
struct ImageMeta {
    std::vector<HallucinationRect> hallucinations;
};

struct ImageBatch {
    std::vector<Image> images;
    std::vector<ImageMeta> meta;  // parallel to images
    SynthesisRequest request;
    std::string backend_id;
};

struct BackendError : std::runtime_error {
    explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

class SynthesisBackend {
public:
    virtual ~SynthesisBackend() = default;
    virtual ImageBatch synthesize(const SynthesisRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Checks the batch-size and frame-dimension contract on whatever the
/// backend returned; call at every adapter boundary.
void validate_batch(const ImageBatch& batch);

/// Prompt handed to the image backend: "a photo of " + caption, plus an
/// optional style suffix after a comma.
std::string build_lis_prompt(const Layout& layout, const std::string& style_suffix = {});

/// Deterministic color assigned to a category name; shared contract
/// between the mock renderer and the mock scorer.
Rgb category_color(const std::string& name);

inline constexpr Rgb kMockBackground{190, 190, 190};

/// Deterministic test renderer: neutral background, one category-coded
/// patch per layout box, plus (at the given rate) an out-of-layout patch
/// whose rectangle is recorded in the image metadata.
class MockRenderer : public SynthesisBackend {
public:
    explicit MockRenderer(double hallucination_rate = 0.0);

    ImageBatch synthesize(const SynthesisRequest& request) override;
    std::string id() const override { return "mock-renderer"; }

private:
    double hallucination_rate_;
};

/// HTTP client for a layout-to-image service: POST /synthesize with a JSON
/// body, base64 PNG list in the response.
class HttpSynthesisBackend : public SynthesisBackend {
public:
    HttpSynthesisBackend(std::string base_url, std::string api_key_env = "LIS_API_KEY",
                         int max_retries = 3);

    ImageBatch synthesize(const SynthesisRequest& request) override;
    std::string id() const override { return "http:" + base_url_; }

private:
    std::string base_url_;
    std::string api_key_;
    int max_retries_;
};

}  // namespace augment
