#pragma once

#include <memory>
#include <string>
#include <vector>

#include "augment/image.hpp"
#include "augment/types.hpp"

namespace augment {

/// Image-text similarity over a fixed text list; returns one cosine-style
/// logit per text.
class ImageTextScorer {
public:
    virtual ~ImageTextScorer() = default;
    virtual std::vector<double> logits(const Image& image,
                                       const std::vector<std::string>& texts) const = 0;
    virtual std::string id() const = 0;
};

struct CategoryScore {
    CategoryLabel category;
    double cs = 0.0;       // softmax(category vs "background") on the image
    double cs_mask = 0.0;  // softmax(category vs "white space") on the masked image
    double delta = 0.0;    // cs - cs_mask
};

struct SampleScore {
    int sample_ref = 0;
    std::vector<CategoryScore> per_category;
    double lacs = 0.0;  // mean of per-category deltas
};

/// Softmax of the first logit in a pair.
double softmax_first(double z0, double z1);

/// Copy of the image with every box of the category filled pure white.
Image mask_category(const Image& image, const Layout& layout, const CategoryLabel& category);

double category_cs(const ImageTextScorer& scorer, const Image& image,
                   const CategoryLabel& category);
double category_cs_mask(const ImageTextScorer& scorer, const Image& masked_image,
                        const CategoryLabel& category);

/// Layout-aware score of one sample: per distinct category, the original
/// image is scored against {name, "background"} and the category-masked
/// image against {name, "white space"}; the score is the mean of the
/// differences.
SampleScore score_sample(const ImageTextScorer& scorer, const Image& image, const Layout& layout,
                         int sample_ref = 0);

/// Indices of the top_n samples by descending score; ties break by
/// ascending sample index.
std::vector<int> rank_and_pick(const std::vector<SampleScore>& scores, int top_n);

/// Mean score over a generated set.
double mlacs(const std::vector<SampleScore>& scores);

/// Mean per-box classification score on box crops, each crop scored
/// against all registry category names plus "background".
double cs_crop(const ImageTextScorer& scorer, const Image& image, const Layout& layout,
               const std::vector<CategoryLabel>& registry);

/// Rule-based scorer keyed to the mock renderer's category-coded patches:
/// logits are saturating functions of exact-color pixel fractions.
class MockImageTextScorer : public ImageTextScorer {
public:
    std::vector<double> logits(const Image& image,
                               const std::vector<std::string>& texts) const override;
    std::string id() const override { return "mock-scorer"; }
};

}  // namespace augment
