#include "augment/lis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <optional>

#include <httplib.h>
#include <json.hpp>

#include "augment/png_io.hpp"
#include "augment/rng.hpp"

namespace augment {

using nlohmann::json;

void validate_batch(const ImageBatch& batch) {
    if (static_cast<int>(batch.images.size()) != batch.request.batch_size)
        throw ProtocolError("backend returned " + std::to_string(batch.images.size()) +
                            " images, expected " + std::to_string(batch.request.batch_size));
    const int fw = static_cast<int>(std::lround(batch.request.layout.image_frame.width));
    const int fh = static_cast<int>(std::lround(batch.request.layout.image_frame.height));
    for (const auto& img : batch.images) {
        if (img.width() != fw || img.height() != fh)
            throw ProtocolError("backend image dimensions " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()) + " do not match layout frame " +
                                std::to_string(fw) + "x" + std::to_string(fh));
    }
    if (batch.meta.size() != batch.images.size())
        throw ProtocolError("image metadata not parallel to images");
}

std::string build_lis_prompt(const Layout& layout, const std::string& style_suffix) {
    std::string prompt = "a photo of " + layout.caption;
    if (!style_suffix.empty()) prompt += ", " + style_suffix;
    return prompt;
}

Rgb category_color(const std::string& name) {
    // FNV-1a over the lowercased name, then spread over a palette that
    // avoids white, the mask color, and the mock background.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : name) h = (h ^ std::tolower(c)) * 1099511628211ULL;
    auto channel = [&](int shift) {
        return static_cast<std::uint8_t>(20 + (h >> shift) % 160);
    };
    return {channel(0), channel(16), channel(32)};
}

namespace {

struct IRect {
    int x, y, w, h;
    bool intersects(const IRect& o) const {
        return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
    }
};

IRect to_irect(const BBox& b) {
    const int x0 = static_cast<int>(std::floor(b.x));
    const int y0 = static_cast<int>(std::floor(b.y));
    const int x1 = static_cast<int>(std::ceil(b.x + b.w));
    const int y1 = static_cast<int>(std::ceil(b.y + b.h));
    return {x0, y0, x1 - x0, y1 - y0};
}

void draw_patch(Image& img, const IRect& r, const std::string& category) {
    const Rgb color = category_color(category);
    img.fill_rect(r.x, r.y, r.w, r.h, color);
    // Label glyph: a 5x5 bit pattern from the name hash, drawn dark in the
    // patch corner so patches of equal color remain distinguishable by eye.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : category) h = (h ^ c) * 1099511628211ULL;
    const int cell = std::max(1, std::min(r.w, r.h) / 8);
    for (int gy = 0; gy < 5; ++gy) {
        for (int gx = 0; gx < 5; ++gx) {
            if ((h >> (gy * 5 + gx)) & 1) {
                img.fill_rect(r.x + (1 + gx) * cell / 2, r.y + (1 + gy) * cell / 2,
                              std::max(1, cell / 2), std::max(1, cell / 2), {30, 30, 30});
            }
        }
    }
}

std::optional<IRect> find_free_rect(int img_w, int img_h, const std::vector<IRect>& occupied,
                                    Rng& rng) {
    int w = std::max(8, img_w / 8);
    int h = std::max(8, img_h / 8);
    while (w >= 4 && h >= 4) {
        for (int attempt = 0; attempt < 256; ++attempt) {
            if (img_w <= w || img_h <= h) break;
            IRect cand{static_cast<int>(bounded(rng, static_cast<std::uint64_t>(img_w - w))),
                       static_cast<int>(bounded(rng, static_cast<std::uint64_t>(img_h - h))), w,
                       h};
            bool clear = true;
            for (const auto& o : occupied)
                if (cand.intersects(o)) { clear = false; break; }
            if (clear) return cand;
        }
        w /= 2;
        h /= 2;
    }
    return std::nullopt;
}

}  // namespace

MockRenderer::MockRenderer(double hallucination_rate) : hallucination_rate_(hallucination_rate) {
    if (hallucination_rate < 0.0 || hallucination_rate > 1.0)
        throw std::invalid_argument("hallucination_rate must be in [0, 1]");
}

ImageBatch MockRenderer::synthesize(const SynthesisRequest& request) {
    request.validate();
    const int fw = static_cast<int>(std::lround(request.layout.image_frame.width));
    const int fh = static_cast<int>(std::lround(request.layout.image_frame.height));

    std::vector<IRect> boxes;
    for (const auto& o : request.layout.objects) boxes.push_back(to_irect(o.box));

    ImageBatch batch;
    batch.request = request;
    batch.backend_id = id();
    for (int i = 0; i < request.batch_size; ++i) {
        Rng rng(mix_seed(request.seed, static_cast<std::uint64_t>(i), 0x4c495321ULL));
        Image img(fw, fh, kMockBackground);
        for (std::size_t b = 0; b < boxes.size(); ++b)
            draw_patch(img, boxes[b], request.layout.objects[b].category.name);

        ImageMeta meta;
        if (!request.layout.objects.empty() && uniform01(rng) < hallucination_rate_) {
            const auto& victim =
                request.layout.objects[bounded(rng, request.layout.objects.size())];
            if (auto rect = find_free_rect(fw, fh, boxes, rng)) {
                draw_patch(img, *rect, victim.category.name);
                meta.hallucinations.push_back(
                    {victim.category.name, rect->x, rect->y, rect->w, rect->h});
            }
        }
        batch.images.push_back(std::move(img));
        batch.meta.push_back(std::move(meta));
    }
    validate_batch(batch);
    return batch;
}

namespace {

std::vector<std::uint8_t> base64_decode(const std::string& in) {
    static constexpr char table[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    int lookup[256];
    std::fill(std::begin(lookup), std::end(lookup), -1);
    for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(table[i])] = i;

    std::vector<std::uint8_t> out;
    int acc = 0, bits = 0;
    for (unsigned char c : in) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = lookup[c];
        if (v < 0) throw ProtocolError("invalid base64 payload");
        acc = (acc << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
        }
    }
    return out;
}

}  // namespace

HttpSynthesisBackend::HttpSynthesisBackend(std::string base_url, std::string api_key_env,
                                           int max_retries)
    : base_url_(std::move(base_url)), max_retries_(max_retries) {
    if (const char* key = std::getenv(api_key_env.c_str())) api_key_ = key;
}

ImageBatch HttpSynthesisBackend::synthesize(const SynthesisRequest& request) {
    request.validate();
    json body;
    body["prompt"] = request.prompt;
    body["boxes"] = json::array();
    for (const auto& o : request.layout.objects)
        body["boxes"].push_back(
            {{"name", o.category.name},
             {"bbox", {o.box.x, o.box.y, o.box.w, o.box.h}}});
    body["width"] = request.layout.image_frame.width;
    body["height"] = request.layout.image_frame.height;
    body["batch"] = request.batch_size;
    body["steps"] = request.steps;
    body["guidance"] = request.guidance_scale;
    body["grounding_alpha"] = request.grounding_alpha;
    body["mis"] = request.mis_fraction;
    body["seed"] = request.seed;

    httplib::Client client(base_url_);
    client.set_read_timeout(600, 0);
    if (!api_key_.empty()) client.set_default_headers({{"Authorization", "Bearer " + api_key_}});

    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        auto res = client.Post("/synthesize", body.dump(), "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        json resp = json::parse(res->body, nullptr, false);
        if (resp.is_discarded() || !resp.contains("images"))
            throw ProtocolError("synthesis response is not a JSON object with 'images'");
        ImageBatch batch;
        batch.request = request;
        batch.backend_id = id();
        for (const auto& b64 : resp["images"]) {
            batch.images.push_back(decode_png(base64_decode(b64.get<std::string>())));
            batch.meta.emplace_back();
        }
        validate_batch(batch);
        return batch;
    }
    throw BackendError("synthesis request failed after " + std::to_string(max_retries_ + 1) +
                       " attempts: " + last_error);
}

}  // namespace augment
