#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "augment/types.hpp"

namespace augment {

enum class CovarianceMode { full, diagonal };
enum class CooccurrenceVariant { draft_from_gt, fitted_cooccurrence };

struct GaussianMixture {
    int dim = 0;
    std::vector<double> weights;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;

    int components() const { return static_cast<int>(weights.size()); }
    double log_likelihood(const std::vector<Eigen::VectorXd>& samples) const;
    Eigen::VectorXd sample(std::uint64_t seed) const;
};

struct FitOptions {
    int max_iters = 200;
    double tol = 1e-6;
    CovarianceMode mode = CovarianceMode::full;
    double covariance_floor = 1e-4;  // added to diagonal on collapse
};

struct FitTrace {
    std::vector<double> log_likelihoods;  // one per EM iteration
};

/// EM fit with k-means++ seeding; the per-iteration log-likelihood is
/// non-decreasing and covariance collapse is repaired by a diagonal floor.
GaussianMixture fit_gmm(const std::vector<Eigen::VectorXd>& samples, int k,
                        const FitOptions& options, std::uint64_t rng_seed,
                        FitTrace* trace = nullptr);

struct GmmEnsemble {
    // mixtures over (x/W, y/H, w/W, h/H) in [0,1]
    std::map<int, GaussianMixture> per_category;
    std::map<int, std::string> category_names;
    std::optional<GaussianMixture> cooccurrence_model;
    std::vector<int> cooccurrence_category_order;  // axis order of the count vectors
    CooccurrenceVariant variant = CooccurrenceVariant::draft_from_gt;
    int requested_components = 3;
};

struct EnsembleOptions {
    int components = 3;  // clamped per category to its instance count
    CooccurrenceVariant variant = CooccurrenceVariant::draft_from_gt;
    FitOptions fit;
};

/// One mixture per category with at least one instance; the
/// fitted_cooccurrence variant also fits a mixture over per-image
/// category-count vectors.
GmmEnsemble fit_ensemble(const FewShotSet& set, const EnsembleOptions& options,
                         std::uint64_t rng_seed);

struct SampleStats {
    int resamples = 0;  // boxes that needed at least one redraw
    int clamps = 0;     // boxes repaired by clamping after the retry budget
    int gt_fallbacks = 0;  // categories missing from the ensemble
};

/// Draws alpha layouts per ground-truth layout. Variant draft_from_gt
/// copies the seed layout's category counts; fitted_cooccurrence samples
/// counts from the co-occurrence mixture (rounded half-to-even, negatives
/// clamped, all-zero drafts rejected). Invalid boxes are redrawn up to a
/// retry budget and then clamped into the frame.
std::vector<Layout> sample_layouts(const GmmEnsemble& ensemble, const FewShotSet& set, int alpha,
                                   std::uint64_t rng_seed, SampleStats* stats = nullptr);

void save_ensemble(const GmmEnsemble& ensemble, const std::filesystem::path& path);
GmmEnsemble load_ensemble(const std::filesystem::path& path);

}  // namespace augment
