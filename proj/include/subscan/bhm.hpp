/*
 * Copyright 2026 The subscan Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "subscan/sensor.hpp"

namespace subscan {

/// Fixed hinge points and the squared-exponential kernel length scale
/// (gamma, in 1/length^2) that together define the map's feature space.
class HingeGrid {
public:
    HingeGrid(std::vector<Vec3> hinges, double gamma);

    /// nx*ny*nz hinges spanning `box` (endpoints included), index (iz*ny + iy)*nx + ix.
    /// Feature evaluation uses the kernel's separability on this layout.
    static HingeGrid lattice(const Box& box, std::array<int, 3> shape, double gamma);

    std::size_t size() const { return hinges_.size(); }
    double gamma() const { return gamma_; }
    std::span<const Vec3> hinges() const { return hinges_; }
    const std::optional<std::array<int, 3>>& lattice_shape() const { return shape_; }
    const std::optional<Box>& lattice_box() const { return box_; }

    /// Psi(x)_j = exp(-gamma |x - hinge_j|^2), written into `out` (length size()).
    void features(const Vec3& x, std::span<double> out) const;
    Eigen::VectorXd feature_vector(const Vec3& x) const;

    /// Entries of Psi(x) with gamma |x - hinge_j|^2 <= max_exponent, ascending j.
    void local_features(const Vec3& x, double max_exponent, std::vector<std::pair<std::size_t, double>>& out) const;

private:
    std::vector<Vec3> hinges_;
    double gamma_;
    std::optional<std::array<int, 3>> shape_;
    std::optional<Box> box_;
    std::array<std::vector<double>, 3> axes_;
};

/// Diagonal Gaussian over the logistic-regression weights.
struct WeightPosterior {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;  ///< per-weight variances

    std::size_t size() const { return static_cast<std::size_t>(mu.size()); }
};

struct OccupancyEstimate {
    double probability = 0.5;
    double latent_mean = 0.0;
    double latent_variance = 0.0;
};

struct EmOptions {
    double tolerance = 1e-3;  ///< on max |delta xi|
    int max_iterations = 10;
    /// Starting value for every xi_n; when unset xi starts from the prior.
    std::optional<double> initial_xi;
    /// Coordinate-ascent passes over the weight means per EM iteration.
    int mean_sweeps = 4;
};

struct UpdateStats {
    int iterations = 0;
    double final_delta = 0.0;
};

/// Jaakkola-Jordan bound coefficient (sigmoid(xi) - 1/2) / (2 xi); 1/8 at 0.
double jj_lambda(double em_xi);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Zero mean, `prior_variance` everywhere. Throws ConfigError for M < 1 or
/// a non-positive variance.
WeightPosterior init_posterior(std::size_t M, double prior_variance);

/// Features below exp(-kFeatureCutoff) are treated as zero by update().
inline constexpr double kFeatureCutoff = 23.0;

/// One sequential Bayes step: `posterior` is the prior, `reading` the data.
///
/// Jaakkola-Jordan variational EM with a factorized (diagonal) Gaussian.
/// With W = diag(2 lambda(xi_n)), the variational posterior solves
///   P = diag(1/sigma) + Psi^T W Psi,   b = mu/sigma + Psi^T (y - 1/2)
/// under the mean-field constraint: sigma_j = 1/P_jj, and the means are
/// refined by coordinate ascent,
///   mu_j = (b_j - sum_{k != j} P_jk mu_k) / P_jj,
/// `mean_sweeps` passes per iteration, starting from the prior mean. The
/// bound parameters then follow
///   xi_n^2 = sum_j Psi_j(x_n)^2 sigma_j + (Psi(x_n) . mu)^2.
/// xi starts from the prior and iterations stop when max |delta xi| < tolerance.
/// Weights whose features are below the cutoff for every sample keep their
/// prior values exactly.
///
/// Throws std::invalid_argument for an empty reading or mismatched sizes and
/// NumericalError when a non-finite value appears.
WeightPosterior update(const WeightPosterior& posterior, const SensorReading& reading, const HingeGrid& grid,
                       const EmOptions& options = {}, UpdateStats* stats = nullptr);

/// Predictive occupancy with probit-style moderation of the latent mean.
OccupancyEstimate query(const WeightPosterior& posterior, const HingeGrid& grid, const Vec3& x);

/// Element-wise query; evaluated on `threads` workers (0 = hardware concurrency).
std::vector<OccupancyEstimate> query_grid(const WeightPosterior& posterior, const HingeGrid& grid,
                                          std::span<const Vec3> points, unsigned threads = 0);

struct MapConfig {
    double gamma = 5.0;
    std::array<int, 3> hinge_shape{17, 17, 10};
    double prior_variance = 1.0;
    EmOptions em;

    HingeGrid make_grid(const Box& box) const;
};

/// {"gamma", "hinges", "mu", "sigma"} plus "lattice" {"lo","hi","shape"} for lattice grids.
nlohmann::json posterior_snapshot(const WeightPosterior& posterior, const HingeGrid& grid);

struct MapSnapshot {
    HingeGrid grid;
    WeightPosterior posterior;
};

/// Throws ConfigError on a malformed snapshot.
MapSnapshot load_posterior_snapshot(const nlohmann::json& doc);

}  // namespace subscan
