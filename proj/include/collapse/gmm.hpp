#pragma once
// Gaussian mixture models in 1 or 2 dimensions: densities, seeded
// sampling, and EM fitting with a variance floor. Flooring every
// covariance eigenvalue keeps runs alive through EM singularities, so
// distribution collapse shows up as "variance at floor" instead of a
// crash.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "collapse/categorical.hpp"
#include "collapse/rng.hpp"

namespace collapse {

inline constexpr double kDefaultVarianceFloor = 1e-8;

struct GmmComponent {
    double weight = 0.0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

namespace detail {

// Clamp all eigenvalues of a symmetric matrix to >= floor. Returns true
// if clamping changed anything.
inline bool floor_covariance(Eigen::MatrixXd& cov, double floor) {
    if (cov.rows() == 1) {
        if (!(cov(0, 0) >= floor)) {
            cov(0, 0) = floor;
            return true;
        }
        return false;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs(cov);
    Eigen::VectorXd values = eigs.eigenvalues();
    bool changed = false;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (!(values[i] >= floor)) {
            values[i] = floor;
            changed = true;
        }
    }
    if (changed) {
        cov = eigs.eigenvectors() * values.asDiagonal() * eigs.eigenvectors().transpose();
        cov = 0.5 * (cov + cov.transpose().eval());
    }
    return changed;
}

inline double min_eigenvalue(const Eigen::MatrixXd& cov) {
    if (cov.rows() == 1) return cov(0, 0);
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Eigen::MatrixXd& cov) {
    if (cov.rows() == 1) return cov(0, 0);
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().maxCoeff();
}

}  // namespace detail

class GmmModel {
public:
    GmmModel(std::vector<GmmComponent> components, double variance_floor = kDefaultVarianceFloor)
        : components_(std::move(components)), variance_floor_(variance_floor) {
        if (components_.empty()) {
            throw std::invalid_argument("GmmModel: need at least one component");
        }
        dim_ = components_.front().mean.size();
        if (dim_ != 1 && dim_ != 2) {
            throw std::invalid_argument("GmmModel: dimension must be 1 or 2");
        }
        double weight_sum = 0.0;
        for (const auto& c : components_) {
            if (c.mean.size() != dim_ || c.covariance.rows() != dim_ ||
                c.covariance.cols() != dim_) {
                throw std::invalid_argument("GmmModel: inconsistent component shapes");
            }
            if (!(c.weight >= 0.0 && c.weight <= 1.0)) {
                throw std::invalid_argument("GmmModel: weight outside [0, 1]");
            }
            if ((c.covariance - c.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
                throw std::invalid_argument("GmmModel: covariance not symmetric");
            }
            if (detail::min_eigenvalue(c.covariance) < variance_floor_ * (1.0 - 1e-9)) {
                throw std::invalid_argument("GmmModel: covariance eigenvalue below floor");
            }
            weight_sum += c.weight;
        }
        if (std::abs(weight_sum - 1.0) > kProbSumTolerance) {
            throw std::invalid_argument("GmmModel: weights sum to " + std::to_string(weight_sum));
        }
    }

    const std::vector<GmmComponent>& components() const { return components_; }
    Eigen::Index dim() const { return dim_; }
    std::size_t component_count() const { return components_.size(); }
    double variance_floor() const { return variance_floor_; }

    double min_component_variance() const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : components_) {
            best = std::min(best, detail::min_eigenvalue(c.covariance));
        }
        return best;
    }

    double max_component_variance() const {
        double best = 0.0;
        for (const auto& c : components_) {
            best = std::max(best, detail::max_eigenvalue(c.covariance));
        }
        return best;
    }

private:
    std::vector<GmmComponent> components_;
    double variance_floor_;
    Eigen::Index dim_;
};

namespace detail {

struct ComponentDensity {
    double log_weight;
    double log_norm;           // -(d/2) log(2 pi) - (1/2) log det
    Eigen::MatrixXd precision;
    Eigen::VectorXd mean;

    double log_pdf(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd diff = x - mean;
        return log_norm - 0.5 * diff.dot(precision * diff);
    }
};

inline std::vector<ComponentDensity> prepare_densities(const GmmModel& model) {
    std::vector<ComponentDensity> out;
    out.reserve(model.component_count());
    for (const auto& c : model.components()) {
        ComponentDensity d;
        d.log_weight = c.weight > 0.0 ? std::log(c.weight)
                                      : -std::numeric_limits<double>::infinity();
        d.mean = c.mean;
        const double det = c.covariance.determinant();
        d.precision = c.covariance.inverse();
        d.log_norm = -0.5 * (static_cast<double>(c.mean.size()) * std::log(2.0 * M_PI) +
                             std::log(det));
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace detail

// Mixture density at x.
inline double gmm_pdf(const GmmModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.dim()) {
        throw std::invalid_argument("gmm_pdf: point dimension mismatch");
    }
    const auto densities = detail::prepare_densities(model);
    double total = 0.0;
    for (std::size_t j = 0; j < densities.size(); ++j) {
        const double w = model.components()[j].weight;
        if (w == 0.0) continue;
        total += w * std::exp(densities[j].log_pdf(x));
    }
    return total;
}

inline double gmm_pdf(const GmmModel& model, double x) {
    Eigen::VectorXd v(1);
    v[0] = x;
    return gmm_pdf(model, v);
}

// Ancestral sampling: component by weight, then the Gaussian.
inline std::vector<Eigen::VectorXd> sample_gmm(const GmmModel& model, std::size_t n, Rng& rng) {
    if (n == 0) throw std::invalid_argument("sample_gmm: n must be >= 1");
    std::vector<double> weights;
    weights.reserve(model.component_count());
    for (const auto& c : model.components()) weights.push_back(c.weight);
    const auto cdf = cumulative_probs(Categorical(weights));

    std::vector<Eigen::MatrixXd> chol;
    chol.reserve(model.component_count());
    for (const auto& c : model.components()) {
        chol.push_back(Eigen::LLT<Eigen::MatrixXd>(c.covariance).matrixL());
    }

    std::vector<Eigen::VectorXd> points;
    points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = inverse_cdf_index(cdf, rng.uniform());
        Eigen::VectorXd z(model.dim());
        for (Eigen::Index d = 0; d < model.dim(); ++d) z[d] = rng.normal();
        points.push_back(model.components()[j].mean + chol[j] * z);
    }
    return points;
}

// Raised when a component degenerates during EM: it captured fewer than
// two points, or its covariance had to be clamped to the variance floor.
struct SingularityEvent {
    std::size_t component = 0;
    std::size_t em_iteration = 0;
    double effective_count = 0.0;
};

struct EmOptions {
    std::size_t max_iterations = 500;
    double tolerance = 1e-8;  // on mean log-likelihood improvement
    double variance_floor = kDefaultVarianceFloor;
};

struct EmFit {
    GmmModel model;
    std::vector<double> log_likelihood;  // mean per-point, one entry per iteration
    std::vector<SingularityEvent> singularities;
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

inline std::size_t count_distinct(const std::vector<Eigen::VectorXd>& points) {
    std::vector<std::vector<double>> copies;
    copies.reserve(points.size());
    for (const auto& p : points) {
        copies.emplace_back(p.data(), p.data() + p.size());
    }
    std::sort(copies.begin(), copies.end());
    copies.erase(std::unique(copies.begin(), copies.end()), copies.end());
    return copies.size();
}

inline Eigen::MatrixXd pooled_covariance(const std::vector<Eigen::VectorXd>& points,
                                         const Eigen::VectorXd& mean) {
    const auto d = mean.size();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& p : points) {
        const Eigen::VectorXd diff = p - mean;
        cov += diff * diff.transpose();
    }
    return cov / static_cast<double>(points.size());
}

// k-means++ style seeding: first center uniformly at random, every
// subsequent center the point farthest from the chosen set.
inline GmmModel farthest_point_init(const std::vector<Eigen::VectorXd>& points, std::size_t k,
                                    double floor, Rng& rng) {
    std::vector<Eigen::VectorXd> centers;
    centers.push_back(points[rng.uniform_below(points.size())]);
    std::vector<double> dist2(points.size(), std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        std::size_t best = 0;
        double best_dist = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            dist2[i] = std::min(dist2[i], (points[i] - centers.back()).squaredNorm());
            if (dist2[i] > best_dist) {
                best_dist = dist2[i];
                best = i;
            }
        }
        centers.push_back(points[best]);
    }

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(points.front().size());
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    Eigen::MatrixXd cov = pooled_covariance(points, mean);
    floor_covariance(cov, floor);

    std::vector<GmmComponent> components;
    for (std::size_t j = 0; j < k; ++j) {
        components.push_back({1.0 / static_cast<double>(k), centers[j], cov});
    }
    return GmmModel(std::move(components), floor);
}

}  // namespace detail

// EM for a k-component GMM. When `init` is absent the model is seeded by
// farthest-point initialization from `rng`; a provided model warm-starts
// the fit. Components whose effective count drops below 2 are recorded
// as singularity events and their covariance is floored.
inline EmFit fit_gmm_em(const std::vector<Eigen::VectorXd>& points, std::size_t k, Rng& rng,
                        const EmOptions& options = {},
                        const std::optional<GmmModel>& init = std::nullopt) {
    if (k == 0) throw std::invalid_argument("fit_gmm_em: k must be >= 1");
    if (points.size() < k) {
        throw std::invalid_argument("fit_gmm_em: fewer points than components");
    }
    if (detail::count_distinct(points) < k) {
        throw std::invalid_argument("fit_gmm_em: fewer distinct points than components");
    }
    const auto d = points.front().size();
    for (const auto& p : points) {
        if (p.size() != d) throw std::invalid_argument("fit_gmm_em: mixed point dimensions");
    }
    if (init && (init->component_count() != k || init->dim() != d)) {
        throw std::invalid_argument("fit_gmm_em: init model shape mismatch");
    }

    GmmModel model =
        init ? *init : detail::farthest_point_init(points, k, options.variance_floor, rng);

    const auto n = points.size();
    Eigen::MatrixXd resp(n, k);
    EmFit fit{model, {}, {}, 0, false};
    double previous_ll = -std::numeric_limits<double>::infinity();

    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        // E-step with log-sum-exp
        const auto densities = detail::prepare_densities(model);
        double total_ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double max_log = -std::numeric_limits<double>::infinity();
            std::vector<double> logs(k);
            for (std::size_t j = 0; j < k; ++j) {
                logs[j] = densities[j].log_weight + densities[j].log_pdf(points[i]);
                max_log = std::max(max_log, logs[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += std::exp(logs[j] - max_log);
            const double log_mix = max_log + std::log(sum);
            total_ll += log_mix;
            for (std::size_t j = 0; j < k; ++j) {
                resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    std::exp(logs[j] - log_mix);
            }
        }
        const double mean_ll = total_ll / static_cast<double>(n);
        fit.log_likelihood.push_back(mean_ll);
        fit.iterations = iter + 1;

        // M-step
        std::vector<double> counts(k);
        double count_total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            counts[j] = resp.col(static_cast<Eigen::Index>(j)).sum();
            count_total += counts[j];
        }
        std::vector<GmmComponent> next;
        next.reserve(k);
        for (std::size_t j = 0; j < k; ++j) {
            const double nk = counts[j];
            GmmComponent comp;
            comp.weight = nk / count_total;
            if (nk < 1e-12) {
                // dead component: keep its previous location at the floor
                comp.mean = model.components()[j].mean;
                comp.covariance =
                    Eigen::MatrixXd::Identity(d, d) * options.variance_floor;
                fit.singularities.push_back({j, iter, nk});
                next.push_back(std::move(comp));
                continue;
            }
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
            for (std::size_t i = 0; i < n; ++i) {
                mean += resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                        points[i];
            }
            mean /= nk;
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
            for (std::size_t i = 0; i < n; ++i) {
                const Eigen::VectorXd diff = points[i] - mean;
                cov += resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                       (diff * diff.transpose());
            }
            cov /= nk;
            comp.mean = std::move(mean);
            comp.covariance = std::move(cov);
            const bool clamped =
                detail::floor_covariance(comp.covariance, options.variance_floor);
            if (nk < 2.0 || clamped) {
                fit.singularities.push_back({j, iter, nk});
            }
            next.push_back(std::move(comp));
        }
        model = GmmModel(std::move(next), options.variance_floor);

        if (std::abs(mean_ll - previous_ll) < options.tolerance) {
            fit.converged = true;
            break;
        }
        previous_ll = mean_ll;
    }
    fit.model = std::move(model);
    return fit;
}

}  // namespace collapse
