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

#include "subscan/bhm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>

namespace subscan {

HingeGrid::HingeGrid(std::vector<Vec3> hinges, double gamma) : hinges_(std::move(hinges)), gamma_(gamma) {
    if (hinges_.empty()) throw ConfigError("hinge grid needs at least one hinge");
    if (!(gamma_ > 0.0) || !std::isfinite(gamma_)) throw ConfigError("kernel gamma must be positive");
    for (const auto& h : hinges_)
        if (!h.allFinite()) throw ConfigError("hinge point is not finite");
}

HingeGrid HingeGrid::lattice(const Box& box, std::array<int, 3> shape, double gamma) {
    for (int n : shape)
        if (n < 1) throw ConfigError("hinge lattice dimensions must be >= 1");
    std::array<std::vector<double>, 3> axes;
    for (int a = 0; a < 3; ++a) {
        const int n = shape[static_cast<std::size_t>(a)];
        auto& axis = axes[static_cast<std::size_t>(a)];
        for (int i = 0; i < n; ++i) {
            const double t = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
            axis.push_back(box.lo[a] + t * (box.hi[a] - box.lo[a]));
        }
    }
    std::vector<Vec3> hinges;
    hinges.reserve(static_cast<std::size_t>(shape[0] * shape[1] * shape[2]));
    for (double z : axes[2])
        for (double y : axes[1])
            for (double x : axes[0]) hinges.emplace_back(x, y, z);
    HingeGrid g(std::move(hinges), gamma);
    g.shape_ = shape;
    g.box_ = box;
    g.axes_ = std::move(axes);
    return g;
}

void HingeGrid::features(const Vec3& x, std::span<double> out) const {
    if (out.size() != hinges_.size()) throw std::invalid_argument("feature buffer has the wrong length");
    if (!shape_) {
        for (std::size_t j = 0; j < hinges_.size(); ++j) out[j] = std::exp(-gamma_ * (x - hinges_[j]).squaredNorm());
        return;
    }
    std::array<std::array<double, 64>, 3> small{};
    std::array<std::vector<double>, 3> large;
    std::array<const double*, 3> k{};
    for (std::size_t a = 0; a < 3; ++a) {
        const auto& axis = axes_[a];
        double* dst = axis.size() <= 64 ? small[a].data() : (large[a].resize(axis.size()), large[a].data());
        for (std::size_t i = 0; i < axis.size(); ++i) {
            const double d = x[static_cast<int>(a)] - axis[i];
            dst[i] = std::exp(-gamma_ * d * d);
        }
        k[a] = dst;
    }
    const std::size_t nx = axes_[0].size(), ny = axes_[1].size(), nz = axes_[2].size();
    std::size_t j = 0;
    for (std::size_t iz = 0; iz < nz; ++iz) {
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const double kyz = k[2][iz] * k[1][iy];
            for (std::size_t ix = 0; ix < nx; ++ix) out[j++] = kyz * k[0][ix];
        }
    }
}

Eigen::VectorXd HingeGrid::feature_vector(const Vec3& x) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(hinges_.size()));
    features(x, std::span<double>(v.data(), hinges_.size()));
    return v;
}

void HingeGrid::local_features(const Vec3& x, double max_exponent,
                               std::vector<std::pair<std::size_t, double>>& out) const {
    out.clear();
    if (!shape_) {
        for (std::size_t j = 0; j < hinges_.size(); ++j) {
            const double e = gamma_ * (x - hinges_[j]).squaredNorm();
            if (e <= max_exponent) out.emplace_back(j, std::exp(-e));
        }
        return;
    }
    std::array<std::size_t, 3> lo{}, hi{};
    std::array<std::vector<double>, 3> ex;
    for (std::size_t a = 0; a < 3; ++a) {
        const auto& axis = axes_[a];
        lo[a] = axis.size();
        hi[a] = 0;
        ex[a].resize(axis.size());
        for (std::size_t i = 0; i < axis.size(); ++i) {
            const double d = x[static_cast<int>(a)] - axis[i];
            ex[a][i] = gamma_ * d * d;
            if (ex[a][i] <= max_exponent) {
                lo[a] = std::min(lo[a], i);
                hi[a] = i + 1;
            }
        }
        if (lo[a] >= hi[a]) return;
    }
    const std::size_t nx = axes_[0].size(), ny = axes_[1].size();
    for (std::size_t iz = lo[2]; iz < hi[2]; ++iz) {
        for (std::size_t iy = lo[1]; iy < hi[1]; ++iy) {
            const double eyz = ex[2][iz] + ex[1][iy];
            if (eyz > max_exponent) continue;
            for (std::size_t ix = lo[0]; ix < hi[0]; ++ix) {
                const double e = eyz + ex[0][ix];
                if (e <= max_exponent) out.emplace_back((iz * ny + iy) * nx + ix, std::exp(-e));
            }
        }
    }
}

double jj_lambda(double em_xi) {
    const double x = std::abs(em_xi);
    if (x < 1e-6) return 0.125 - x * x / 96.0;
    return std::tanh(0.5 * x) / (4.0 * x);
}

WeightPosterior init_posterior(std::size_t M, double prior_variance) {
    if (M < 1) throw ConfigError("posterior needs at least one weight");
    if (!(prior_variance > 0.0) || !std::isfinite(prior_variance))
        throw ConfigError("prior variance must be positive and finite");
    const auto n = static_cast<Eigen::Index>(M);
    return WeightPosterior{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Constant(n, prior_variance)};
}

WeightPosterior update(const WeightPosterior& posterior, const SensorReading& reading, const HingeGrid& grid,
                       const EmOptions& options, UpdateStats* stats) {
    const std::size_t M = grid.size();
    if (posterior.mu.size() != posterior.sigma.size() || posterior.size() != M)
        throw std::invalid_argument("posterior and hinge grid dimensions differ");
    if (reading.samples.empty()) throw std::invalid_argument("update needs a non-empty reading");
    const std::size_t N = reading.samples.size();

    // Column-compressed features: for hinge j, entries [start[j], start[j+1]).
    std::vector<std::uint32_t> count(M + 1, 0);
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(N);
    for (std::size_t n = 0; n < N; ++n) {
        const Vec3& x = reading.samples[n].point;
        if (!x.allFinite()) throw NumericalError("sample " + std::to_string(n) + " has a non-finite coordinate");
        grid.local_features(x, kFeatureCutoff, rows[n]);
        for (const auto& e : rows[n]) ++count[e.first + 1];
    }
    std::vector<std::size_t> start(M + 1, 0);
    for (std::size_t j = 0; j < M; ++j) start[j + 1] = start[j] + count[j + 1];
    std::vector<std::uint32_t> sample_of(start[M]);
    std::vector<double> psi(start[M]);
    {
        std::vector<std::size_t> fill(start.begin(), start.end() - 1);
        for (std::size_t n = 0; n < N; ++n) {
            for (const auto& [j, v] : rows[n]) {
                sample_of[fill[j]] = static_cast<std::uint32_t>(n);
                psi[fill[j]++] = v;
            }
        }
    }
    rows.clear();
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < M; ++j)
        if (start[j + 1] > start[j]) active.push_back(j);

    std::vector<double> centered(N);
    for (std::size_t n = 0; n < N; ++n) centered[n] = static_cast<double>(reading.samples[n].occupied) - 0.5;

    WeightPosterior out{posterior.mu, posterior.sigma};
    const double* mu0 = posterior.mu.data();
    const double* sigma0 = posterior.sigma.data();
    double* mu = out.mu.data();
    double* sigma = out.sigma.data();

    // b_j = mu0_j / sigma0_j + sum_n (y_n - 1/2) Psi_nj, kept scaled by sigma0_j.
    std::vector<double> pulled(M, 0.0);
    for (std::size_t j : active) {
        double acc = 0.0;
        for (std::size_t e = start[j]; e < start[j + 1]; ++e) acc += centered[sample_of[e]] * psi[e];
        pulled[j] = mu0[j] + sigma0[j] * acc;
    }

    std::vector<double> latent(N, 0.0);  // Psi(x_n) . mu
    auto refresh_latent = [&] {
        std::fill(latent.begin(), latent.end(), 0.0);
        for (std::size_t j : active)
            for (std::size_t e = start[j]; e < start[j + 1]; ++e) latent[sample_of[e]] += psi[e] * mu[j];
    };
    auto bound_params = [&] {
        std::vector<double> xi(N, 0.0);
        for (std::size_t j : active)
            for (std::size_t e = start[j]; e < start[j + 1]; ++e) xi[sample_of[e]] += psi[e] * psi[e] * sigma[j];
        for (std::size_t n = 0; n < N; ++n) xi[n] = std::sqrt(xi[n] + latent[n] * latent[n]);
        return xi;
    };

    refresh_latent();
    std::vector<double> xi = options.initial_xi ? std::vector<double>(N, *options.initial_xi) : bound_params();
    std::vector<double> w(N), shrink(M, 1.0);
    int iter = 0;
    double delta = 0.0;
    while (iter < options.max_iterations) {
        ++iter;
        for (std::size_t n = 0; n < N; ++n) w[n] = 2.0 * jj_lambda(xi[n]);
        for (std::size_t j : active) {
            double acc = 0.0;
            for (std::size_t e = start[j]; e < start[j + 1]; ++e) acc += w[sample_of[e]] * psi[e] * psi[e];
            shrink[j] = 1.0 + sigma0[j] * acc;
            sigma[j] = sigma0[j] / shrink[j];
        }
        for (int sweep = 0; sweep < options.mean_sweeps; ++sweep) {
            for (std::size_t j : active) {
                // Coupling to the other weights through the samples hinge j sees.
                double coupling = 0.0;
                for (std::size_t e = start[j]; e < start[j + 1]; ++e) {
                    const std::size_t n = sample_of[e];
                    coupling += w[n] * psi[e] * (latent[n] - psi[e] * mu[j]);
                }
                const double next = (pulled[j] - sigma0[j] * coupling) / shrink[j];
                const double step = next - mu[j];
                if (step == 0.0) continue;
                for (std::size_t e = start[j]; e < start[j + 1]; ++e) latent[sample_of[e]] += psi[e] * step;
                mu[j] = next;
            }
        }
        if (!out.mu.allFinite() || !out.sigma.allFinite())
            throw NumericalError("non-finite posterior after EM iteration " + std::to_string(iter));

        refresh_latent();
        const std::vector<double> xi_new = bound_params();
        delta = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            if (!std::isfinite(xi_new[n]))
                throw NumericalError("non-finite variational parameter in EM iteration " + std::to_string(iter));
            delta = std::max(delta, std::abs(xi_new[n] - xi[n]));
        }
        xi = xi_new;
        if (delta < options.tolerance) break;
    }
    if (stats) *stats = UpdateStats{iter, delta};
    return out;
}

namespace {

OccupancyEstimate estimate_from(const WeightPosterior& posterior, std::span<const double> psi) {
    double m = 0.0, s2 = 0.0;
    const double* mu = posterior.mu.data();
    const double* sg = posterior.sigma.data();
    for (std::size_t j = 0; j < psi.size(); ++j) {
        m += mu[j] * psi[j];
        s2 += sg[j] * psi[j] * psi[j];
    }
    const double p = sigmoid(m / std::sqrt(1.0 + M_PI * s2 / 8.0));
    return OccupancyEstimate{p, m, s2};
}

}  // namespace

OccupancyEstimate query(const WeightPosterior& posterior, const HingeGrid& grid, const Vec3& x) {
    if (posterior.size() != grid.size()) throw std::invalid_argument("posterior and hinge grid dimensions differ");
    std::vector<double> psi(grid.size());
    grid.features(x, psi);
    return estimate_from(posterior, psi);
}

std::vector<OccupancyEstimate> query_grid(const WeightPosterior& posterior, const HingeGrid& grid,
                                          std::span<const Vec3> points, unsigned threads) {
    if (posterior.size() != grid.size()) throw std::invalid_argument("posterior and hinge grid dimensions differ");
    std::vector<OccupancyEstimate> out(points.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, points.size() / 256)));

    auto work = [&](std::size_t begin, std::size_t end) {
        std::vector<double> psi(grid.size());
        for (std::size_t i = begin; i < end; ++i) {
            grid.features(points[i], psi);
            out[i] = estimate_from(posterior, psi);
        }
    };
    if (threads <= 1) {
        work(0, points.size());
        return out;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (points.size() + threads - 1) / threads;
    for (std::size_t b = 0; b < points.size(); b += chunk) pool.emplace_back(work, b, std::min(points.size(), b + chunk));
    return out;
}

HingeGrid MapConfig::make_grid(const Box& box) const { return HingeGrid::lattice(box, hinge_shape, gamma); }

nlohmann::json posterior_snapshot(const WeightPosterior& posterior, const HingeGrid& grid) {
    nlohmann::json doc;
    doc["gamma"] = grid.gamma();
    auto& jh = doc["hinges"] = nlohmann::json::array();
    for (const auto& h : grid.hinges()) jh.push_back({h.x(), h.y(), h.z()});
    doc["mu"] = std::vector<double>(posterior.mu.data(), posterior.mu.data() + posterior.mu.size());
    doc["sigma"] = std::vector<double>(posterior.sigma.data(), posterior.sigma.data() + posterior.sigma.size());
    if (grid.lattice_shape()) {
        const Box& b = *grid.lattice_box();
        doc["lattice"] = {{"lo", {b.lo.x(), b.lo.y(), b.lo.z()}},
                          {"hi", {b.hi.x(), b.hi.y(), b.hi.z()}},
                          {"shape", *grid.lattice_shape()}};
    }
    return doc;
}

MapSnapshot load_posterior_snapshot(const nlohmann::json& doc) {
    try {
        const double gamma = doc.at("gamma").get<double>();
        const auto mu = doc.at("mu").get<std::vector<double>>();
        const auto sigma = doc.at("sigma").get<std::vector<double>>();
        std::optional<HingeGrid> grid;
        if (doc.contains("lattice")) {
            const auto& l = doc["lattice"];
            const auto lo = l.at("lo").get<std::array<double, 3>>();
            const auto hi = l.at("hi").get<std::array<double, 3>>();
            grid = HingeGrid::lattice(Box{Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2])},
                                      l.at("shape").get<std::array<int, 3>>(), gamma);
        } else {
            std::vector<Vec3> hinges;
            for (const auto& h : doc.at("hinges")) {
                const auto v = h.get<std::array<double, 3>>();
                hinges.emplace_back(v[0], v[1], v[2]);
            }
            grid = HingeGrid(std::move(hinges), gamma);
        }
        if (mu.size() != grid->size() || sigma.size() != grid->size())
            throw ConfigError("posterior snapshot: mu/sigma length does not match the hinge count");
        WeightPosterior post{Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size())),
                             Eigen::Map<const Eigen::VectorXd>(sigma.data(), static_cast<Eigen::Index>(sigma.size()))};
        if ((post.sigma.array() <= 0.0).any()) throw ConfigError("posterior snapshot: variances must be positive");
        return MapSnapshot{std::move(*grid), std::move(post)};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("posterior snapshot: ") + e.what());
    }
}

}  // namespace subscan
