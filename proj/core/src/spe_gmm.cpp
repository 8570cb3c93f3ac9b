#include "augment/spe_gmm.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "augment/rng.hpp"

namespace augment {

using nlohmann::json;

namespace {

double gaussian01(Rng& rng) {
    // Box-Muller on our own uniforms: bit-stable across standard libraries.
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

struct CholeskyCache {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_det_half = 0.0;  // sum of log diagonal of L
};

CholeskyCache decompose(const Eigen::MatrixXd& cov) {
    CholeskyCache c;
    c.llt.compute(cov);
    if (c.llt.info() != Eigen::Success)
        throw std::runtime_error("covariance not positive-definite");
    const auto& L = c.llt.matrixL();
    for (int i = 0; i < cov.rows(); ++i) c.log_det_half += std::log(L(i, i));
    return c;
}

double log_gauss(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                 const CholeskyCache& chol) {
    const int d = static_cast<int>(x.size());
    const Eigen::VectorXd diff = x - mean;
    const Eigen::VectorXd z = chol.llt.matrixL().solve(diff);
    return -0.5 * z.squaredNorm() - chol.log_det_half -
           0.5 * d * std::log(2.0 * std::numbers::pi);
}

/// Adds the floor to the diagonal until the matrix factorizes.
void repair_covariance(Eigen::MatrixXd& cov, CovarianceMode mode, double floor) {
    if (mode == CovarianceMode::diagonal) {
        Eigen::MatrixXd diag = cov.diagonal().asDiagonal();
        cov = diag;
    }
    for (int attempt = 0; attempt < 40; ++attempt) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
        if (es.info() == Eigen::Success && es.eigenvalues().minCoeff() > floor * 0.5) return;
        cov += floor * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    }
}

std::vector<Eigen::VectorXd> kmeanspp_centers(const std::vector<Eigen::VectorXd>& samples, int k,
                                              Rng& rng) {
    std::vector<Eigen::VectorXd> centers;
    centers.push_back(samples[bounded(rng, samples.size())]);
    std::vector<double> d2(samples.size());
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centers) best = std::min(best, (samples[i] - c).squaredNorm());
            d2[i] = best;
            total += best;
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            double target = uniform01(rng) * total, acc = 0.0;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                acc += d2[i];
                if (acc >= target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = bounded(rng, samples.size());
        }
        centers.push_back(samples[chosen]);
    }
    return centers;
}

}  // namespace

double GaussianMixture::log_likelihood(const std::vector<Eigen::VectorXd>& samples) const {
    std::vector<CholeskyCache> chols;
    chols.reserve(covariances.size());
    for (const auto& cov : covariances) chols.push_back(decompose(cov));
    double ll = 0.0;
    for (const auto& x : samples) {
        double max_term = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(weights.size());
        for (std::size_t k = 0; k < weights.size(); ++k) {
            terms[k] = std::log(weights[k]) + log_gauss(x, means[k], chols[k]);
            max_term = std::max(max_term, terms[k]);
        }
        double sum = 0.0;
        for (double t : terms) sum += std::exp(t - max_term);
        ll += max_term + std::log(sum);
    }
    return ll;
}

Eigen::VectorXd GaussianMixture::sample(std::uint64_t seed) const {
    Rng rng(seed);
    double target = uniform01(rng), acc = 0.0;
    std::size_t k = weights.size() - 1;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (target <= acc) {
            k = i;
            break;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(covariances[k]);
    Eigen::VectorXd z(dim);
    for (int i = 0; i < dim; ++i) z(i) = gaussian01(rng);
    return means[k] + llt.matrixL() * z;
}

GaussianMixture fit_gmm(const std::vector<Eigen::VectorXd>& samples, int k,
                        const FitOptions& options, std::uint64_t rng_seed, FitTrace* trace) {
    if (k < 1) throw std::invalid_argument("component count must be >= 1");
    if (static_cast<int>(samples.size()) < k)
        throw std::invalid_argument("need at least " + std::to_string(k) + " samples, got " +
                                    std::to_string(samples.size()));
    const int n = static_cast<int>(samples.size());
    const int d = static_cast<int>(samples[0].size());

    Rng rng(mix_seed(rng_seed, 0x676d6dULL, static_cast<std::uint64_t>(k)));

    GaussianMixture gmm;
    gmm.dim = d;
    gmm.weights.assign(k, 1.0 / k);
    gmm.means = kmeanspp_centers(samples, k, rng);

    Eigen::VectorXd data_mean = Eigen::VectorXd::Zero(d);
    for (const auto& x : samples) data_mean += x;
    data_mean /= n;
    Eigen::MatrixXd data_cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& x : samples) data_cov += (x - data_mean) * (x - data_mean).transpose();
    data_cov /= n;
    repair_covariance(data_cov, options.mode, options.covariance_floor);
    gmm.covariances.assign(k, data_cov);

    Eigen::MatrixXd resp(n, k);
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < options.max_iters; ++iter) {
        // E-step
        std::vector<CholeskyCache> chols;
        for (const auto& cov : gmm.covariances) chols.push_back(decompose(cov));
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
            double max_term = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                resp(i, c) = std::log(gmm.weights[c]) + log_gauss(samples[i], gmm.means[c], chols[c]);
                max_term = std::max(max_term, resp(i, c));
            }
            double sum = 0.0;
            for (int c = 0; c < k; ++c) sum += std::exp(resp(i, c) - max_term);
            const double log_norm = max_term + std::log(sum);
            ll += log_norm;
            for (int c = 0; c < k; ++c) resp(i, c) = std::exp(resp(i, c) - log_norm);
        }
        if (trace) trace->log_likelihoods.push_back(ll);

        const bool converged = iter > 0 && ll - prev_ll < options.tol;
        prev_ll = ll;

        // M-step
        for (int c = 0; c < k; ++c) {
            const double nc = resp.col(c).sum();
            gmm.weights[c] = nc / n;
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
            for (int i = 0; i < n; ++i) mean += resp(i, c) * samples[i];
            mean /= std::max(nc, 1e-300);
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
            for (int i = 0; i < n; ++i) {
                const Eigen::VectorXd diff = samples[i] - mean;
                cov += resp(i, c) * diff * diff.transpose();
            }
            cov /= std::max(nc, 1e-300);
            repair_covariance(cov, options.mode, options.covariance_floor);
            gmm.means[c] = mean;
            gmm.covariances[c] = cov;
        }
        double wsum = 0.0;
        for (double w : gmm.weights) wsum += w;
        for (double& w : gmm.weights) w /= wsum;

        if (converged) break;
    }
    return gmm;
}

namespace {

Eigen::VectorXd normalized_box(const BBox& b, const ImageFrame& f) {
    Eigen::VectorXd v(4);
    v << b.x / f.width, b.y / f.height, b.w / f.width, b.h / f.height;
    return v;
}

}  // namespace

GmmEnsemble fit_ensemble(const FewShotSet& set, const EnsembleOptions& options,
                         std::uint64_t rng_seed) {
    if (set.layouts.empty()) throw std::invalid_argument("few-shot set is empty");

    std::map<int, std::vector<Eigen::VectorXd>> per_category;
    for (const auto& l : set.layouts)
        for (const auto& o : l.objects)
            per_category[o.category.id].push_back(normalized_box(o.box, l.image_frame));

    GmmEnsemble ensemble;
    ensemble.variant = options.variant;
    ensemble.requested_components = options.components;
    for (const auto& [cat_id, samples] : per_category) {
        const int k = std::min<int>(options.components, static_cast<int>(samples.size()));
        ensemble.per_category[cat_id] =
            fit_gmm(samples, k, options.fit, mix_seed(rng_seed, static_cast<std::uint64_t>(cat_id)));
        ensemble.category_names[cat_id] = set.categories.get(cat_id).name;
    }

    if (options.variant == CooccurrenceVariant::fitted_cooccurrence) {
        for (const auto& [cat_id, _] : per_category)
            ensemble.cooccurrence_category_order.push_back(cat_id);
        std::vector<Eigen::VectorXd> counts;
        for (const auto& l : set.layouts) {
            const auto c = l.category_counts();
            Eigen::VectorXd v(static_cast<int>(ensemble.cooccurrence_category_order.size()));
            for (std::size_t i = 0; i < ensemble.cooccurrence_category_order.size(); ++i) {
                auto it = c.find(ensemble.cooccurrence_category_order[i]);
                v(static_cast<int>(i)) = it == c.end() ? 0.0 : it->second;
            }
            counts.push_back(std::move(v));
        }
        const int k = std::min<int>(options.components, static_cast<int>(counts.size()));
        ensemble.cooccurrence_model =
            fit_gmm(counts, k, options.fit, mix_seed(rng_seed, 0xc00cULL));
    }
    return ensemble;
}

namespace {

constexpr double kMinBoxSize = 0.02;  // fraction of frame
constexpr int kBoxRetries = 10;

bool box_vector_valid(const Eigen::VectorXd& v) {
    return v(2) >= kMinBoxSize && v(3) >= kMinBoxSize && v(0) >= 0.0 && v(1) >= 0.0 &&
           v(0) + v(2) <= 1.0 && v(1) + v(3) <= 1.0;
}

Eigen::VectorXd clamp_box_vector(Eigen::VectorXd v) {
    v(2) = std::clamp(v(2), kMinBoxSize, 1.0);
    v(3) = std::clamp(v(3), kMinBoxSize, 1.0);
    v(0) = std::clamp(v(0), 0.0, 1.0 - v(2));
    v(1) = std::clamp(v(1), 0.0, 1.0 - v(3));
    return v;
}

int round_count(double x) {
    if (x < 0.0) return 0;
    return static_cast<int>(std::nearbyint(x));  // half-to-even under FE_TONEAREST
}

}  // namespace

std::vector<Layout> sample_layouts(const GmmEnsemble& ensemble, const FewShotSet& set, int alpha,
                                   std::uint64_t rng_seed, SampleStats* stats) {
    if (alpha < 1) throw std::invalid_argument("alpha must be >= 1");
    if (ensemble.per_category.empty()) throw std::invalid_argument("ensemble is not fitted");

    SampleStats local;
    std::vector<Layout> out;
    out.reserve(set.layouts.size() * static_cast<std::size_t>(alpha));

    for (std::size_t li = 0; li < set.layouts.size(); ++li) {
        const Layout& gt = set.layouts[li];
        for (int r = 0; r < alpha; ++r) {
            Rng rng(mix_seed(rng_seed, li, static_cast<std::uint64_t>(r)));

            std::map<int, int> counts;
            if (ensemble.variant == CooccurrenceVariant::draft_from_gt ||
                !ensemble.cooccurrence_model) {
                counts = gt.category_counts();
            } else {
                for (int draft = 0; draft < 20; ++draft) {
                    counts.clear();
                    const Eigen::VectorXd v = ensemble.cooccurrence_model->sample(rng());
                    int total = 0;
                    for (std::size_t i = 0; i < ensemble.cooccurrence_category_order.size(); ++i) {
                        const int c = round_count(v(static_cast<int>(i)));
                        if (c > 0) counts[ensemble.cooccurrence_category_order[i]] = c;
                        total += c;
                    }
                    if (total > 0) break;
                }
                if (counts.empty()) counts = gt.category_counts();  // all drafts were zero
            }

            Layout layout;
            layout.image_frame = gt.image_frame;
            layout.source = LayoutSource::gmm_generated;
            for (const auto& [cat_id, count] : counts) {
                auto mix_it = ensemble.per_category.find(cat_id);
                for (int inst = 0; inst < count; ++inst) {
                    Eigen::VectorXd v;
                    if (mix_it == ensemble.per_category.end()) {
                        // category never seen at fit time: copy a GT box
                        ++local.gt_fallbacks;
                        v = Eigen::VectorXd::Zero(4);
                        bool found = false;
                        for (const auto& l : set.layouts) {
                            for (const auto& o : l.objects) {
                                if (o.category.id == cat_id) {
                                    v = normalized_box(o.box, l.image_frame);
                                    found = true;
                                    break;
                                }
                            }
                            if (found) break;
                        }
                    } else {
                        v = mix_it->second.sample(rng());
                        int attempts = 0;
                        while (!box_vector_valid(v) && attempts < kBoxRetries) {
                            v = mix_it->second.sample(rng());
                            ++attempts;
                        }
                        if (attempts > 0) ++local.resamples;
                        if (!box_vector_valid(v)) {
                            v = clamp_box_vector(v);
                            ++local.clamps;
                        }
                    }
                    CategoryLabel label{cat_id, ensemble.category_names.count(cat_id)
                                                    ? ensemble.category_names.at(cat_id)
                                                    : set.categories.get(cat_id).name};
                    layout.objects.push_back(
                        {std::move(label),
                         BBox{v(0) * gt.image_frame.width, v(1) * gt.image_frame.height,
                              v(2) * gt.image_frame.width, v(3) * gt.image_frame.height}});
                }
            }
            layout.caption = make_caption(layout.objects);
            out.push_back(std::move(layout));
        }
    }
    if (stats) *stats = local;
    return out;
}

namespace {

json mixture_to_json(const GaussianMixture& g) {
    json j;
    j["dim"] = g.dim;
    j["weights"] = g.weights;
    j["means"] = json::array();
    j["covariances"] = json::array();
    for (const auto& m : g.means)
        j["means"].push_back(std::vector<double>(m.data(), m.data() + m.size()));
    for (const auto& c : g.covariances) {
        json rows = json::array();
        for (int i = 0; i < c.rows(); ++i)
            rows.push_back(std::vector<double>(c.row(i).begin(), c.row(i).end()));
        j["covariances"].push_back(rows);
    }
    return j;
}

GaussianMixture mixture_from_json(const json& j) {
    GaussianMixture g;
    g.dim = j.at("dim").get<int>();
    g.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& m : j.at("means")) {
        Eigen::VectorXd v(g.dim);
        for (int i = 0; i < g.dim; ++i) v(i) = m[static_cast<std::size_t>(i)].get<double>();
        g.means.push_back(std::move(v));
    }
    for (const auto& c : j.at("covariances")) {
        Eigen::MatrixXd mat(g.dim, g.dim);
        for (int i = 0; i < g.dim; ++i)
            for (int k = 0; k < g.dim; ++k)
                mat(i, k) = c[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
        g.covariances.push_back(std::move(mat));
    }
    return g;
}

}  // namespace

void save_ensemble(const GmmEnsemble& ensemble, const std::filesystem::path& path) {
    json doc;
    doc["normalization"] = "xywh_over_frame";
    doc["variant"] = ensemble.variant == CooccurrenceVariant::draft_from_gt
                         ? "draft_from_gt"
                         : "fitted_cooccurrence";
    doc["requested_components"] = ensemble.requested_components;
    doc["per_category"] = json::object();
    for (const auto& [id, g] : ensemble.per_category) {
        json entry = mixture_to_json(g);
        entry["name"] = ensemble.category_names.at(id);
        doc["per_category"][std::to_string(id)] = std::move(entry);
    }
    if (ensemble.cooccurrence_model) {
        doc["cooccurrence"] = mixture_to_json(*ensemble.cooccurrence_model);
        doc["cooccurrence_category_order"] = ensemble.cooccurrence_category_order;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

GmmEnsemble load_ensemble(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const json doc = json::parse(in);

    GmmEnsemble ensemble;
    ensemble.variant = doc.at("variant").get<std::string>() == "draft_from_gt"
                           ? CooccurrenceVariant::draft_from_gt
                           : CooccurrenceVariant::fitted_cooccurrence;
    ensemble.requested_components = doc.value("requested_components", 3);
    for (const auto& [key, entry] : doc.at("per_category").items()) {
        const int id = std::stoi(key);
        ensemble.per_category[id] = mixture_from_json(entry);
        ensemble.category_names[id] = entry.at("name").get<std::string>();
    }
    if (doc.contains("cooccurrence")) {
        ensemble.cooccurrence_model = mixture_from_json(doc.at("cooccurrence"));
        ensemble.cooccurrence_category_order =
            doc.at("cooccurrence_category_order").get<std::vector<int>>();
    }
    return ensemble;
}

}  // namespace augment
