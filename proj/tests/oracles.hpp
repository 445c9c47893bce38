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

// Test-only reference computations. Nothing here calls into the library's
// numerical paths, so the tests compare two independent routes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "subscan/geometry.hpp"

namespace oracle {

using subscan::Vec3;

/// k nearest by exhaustive scan, ties by index.
inline std::vector<std::size_t> brute_knn(const std::vector<Vec3>& pts, const Vec3& x, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) d.emplace_back((pts[i] - x).squaredNorm(), i);
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, d.size()); ++i) out.push_back(d[i].second);
    return out;
}

/// Cyclic Jacobi eigen-solve of a symmetric 3x3 matrix; returns the unit
/// eigenvector of the smallest eigenvalue.
inline Vec3 jacobi_smallest_eigenvector(std::array<std::array<double, 3>, 3> a) {
    std::array<std::array<double, 3>, 3> v{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-300) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    int m = 0;
    for (int i = 1; i < 3; ++i)
        if (a[i][i] < a[m][m]) m = i;
    Vec3 e(v[0][m], v[1][m], v[2][m]);
    return e.normalized();
}

/// Plane normal from an explicit covariance + Jacobi, for a neighbourhood.
inline Vec3 normal_from_neighbours(const std::vector<Vec3>& pts, const std::vector<std::size_t>& idx) {
    double cx = 0, cy = 0, cz = 0;
    for (auto i : idx) {
        cx += pts[i].x();
        cy += pts[i].y();
        cz += pts[i].z();
    }
    const double n = static_cast<double>(idx.size());
    cx /= n;
    cy /= n;
    cz /= n;
    std::array<std::array<double, 3>, 3> c{};
    for (auto i : idx) {
        const double d[3] = {pts[i].x() - cx, pts[i].y() - cy, pts[i].z() - cz};
        for (int r = 0; r < 3; ++r)
            for (int s = 0; s < 3; ++s) c[r][s] += d[r] * d[s];
    }
    return jacobi_smallest_eigenvector(c);
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// MAP of Bayesian logistic regression with a diagonal Gaussian prior, by
/// Newton's method on the full Hessian (the Laplace mean).
inline std::vector<double> laplace_mean(const std::vector<std::vector<double>>& phi, const std::vector<int>& y,
                                        const std::vector<double>& prior_mu, const std::vector<double>& prior_var) {
    const std::size_t M = prior_mu.size();
    std::vector<double> w = prior_mu;
    for (int it = 0; it < 200; ++it) {
        std::vector<double> g(M, 0.0);
        std::vector<std::vector<double>> H(M, std::vector<double>(M, 0.0));
        for (std::size_t j = 0; j < M; ++j) {
            g[j] = -(w[j] - prior_mu[j]) / prior_var[j];
            H[j][j] = 1.0 / prior_var[j];
        }
        for (std::size_t n = 0; n < phi.size(); ++n) {
            double z = 0;
            for (std::size_t j = 0; j < M; ++j) z += w[j] * phi[n][j];
            const double p = logistic(z);
            for (std::size_t j = 0; j < M; ++j) {
                g[j] += (y[n] - p) * phi[n][j];
                for (std::size_t k = 0; k < M; ++k) H[j][k] += p * (1 - p) * phi[n][j] * phi[n][k];
            }
        }
        // Solve H dx = g by Gaussian elimination with partial pivoting.
        std::vector<std::vector<double>> A = H;
        std::vector<double> b = g;
        for (std::size_t c = 0; c < M; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < M; ++r)
                if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
            std::swap(A[c], A[piv]);
            std::swap(b[c], b[piv]);
            for (std::size_t r = c + 1; r < M; ++r) {
                const double f = A[r][c] / A[c][c];
                for (std::size_t k = c; k < M; ++k) A[r][k] -= f * A[c][k];
                b[r] -= f * b[c];
            }
        }
        std::vector<double> dx(M);
        for (std::size_t c = M; c-- > 0;) {
            double s = b[c];
            for (std::size_t k = c + 1; k < M; ++k) s -= A[c][k] * dx[k];
            dx[c] = s / A[c][c];
        }
        double step = 0;
        for (std::size_t j = 0; j < M; ++j) {
            w[j] += dx[j];
            step = std::max(step, std::abs(dx[j]));
        }
        if (step < 1e-13) break;
    }
    return w;
}

/// Area under the PR curve by re-counting the confusion matrix from scratch
/// at every distinct threshold (O(n^2)), anchored at recall 0, trapezoidal.
inline double brute_auprc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
    double P = 0;
    for (auto l : labels) P += l;
    std::vector<std::pair<double, double>> pts;  // (recall, precision)
    for (double t : thresholds) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                if (labels[i]) tp += 1;
                else fp += 1;
            }
        }
        pts.emplace_back(tp / P, tp / (tp + fp));
    }
    double area = pts.front().first * pts.front().second;  // anchor segment from recall 0
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
    return area;
}

/// Inverse standard normal CDF: Acklam's rational approximation followed by
/// one Halley refinement step.
inline double normal_quantile(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    double x;
    if (p < 0.02425) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p > 1 - 0.02425) {
        const double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
    return x - u / (1 + x * u / 2);
}

/// Monte-Carlo E[max(0, f - f_best - xi)] with f ~ N(m, s^2), using n
/// stratified uniforms pushed through the inverse CDF.
template <class Uniform>
double ei_monte_carlo(double m, double s, double f_best, double xi, std::size_t n, Uniform&& uniform) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = (static_cast<double>(i) + uniform()) / static_cast<double>(n);
        const double f = m + s * normal_quantile(std::clamp(u, 1e-300, 1.0 - 1e-16));
        acc += std::max(0.0, f - f_best - xi);
    }
    return acc / static_cast<double>(n);
}

}  // namespace oracle
