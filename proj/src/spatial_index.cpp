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

#include "subscan/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace subscan {

namespace {
constexpr double kPointsPerCell = 4.0;
}

PointIndex::PointIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) return;

    Vec3 lo = points_.front(), hi = points_.front();
    for (const auto& p : points_) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3 ext = hi - lo;
    const double max_ext = std::max(ext.maxCoeff(), 1e-12);

    double volume = 1.0;
    int dims = 0;
    for (int a = 0; a < 3; ++a) {
        if (ext[a] > 1e-9 * max_ext) {
            volume *= ext[a];
            ++dims;
        }
    }
    const double n = static_cast<double>(points_.size());
    cell_ = dims == 0 ? 1.0 : std::pow(volume * kPointsPerCell / n, 1.0 / dims);
    cell_ = std::max(cell_, max_ext * 1e-6);

    origin_ = lo;
    auto cells_along = [&](double e) { return std::max(1L, static_cast<long>(std::floor(e / cell_)) + 1); };
    nx_ = cells_along(ext.x());
    ny_ = cells_along(ext.y());
    nz_ = cells_along(ext.z());

    const std::size_t buckets = static_cast<std::size_t>(nx_ * ny_ * nz_);
    std::vector<std::size_t> bucket_of_point(points_.size());
    bucket_start_.assign(buckets + 1, 0);
    for (std::size_t i = 0; i < points_.size(); ++i) {
        long ix, iy, iz;
        cell_coords(points_[i], ix, iy, iz);
        bucket_of_point[i] = bucket_of(ix, iy, iz);
        ++bucket_start_[bucket_of_point[i] + 1];
    }
    for (std::size_t b = 0; b < buckets; ++b) bucket_start_[b + 1] += bucket_start_[b];
    bucket_items_.resize(points_.size());
    std::vector<std::size_t> fill(bucket_start_.begin(), bucket_start_.end() - 1);
    for (std::size_t i = 0; i < points_.size(); ++i) bucket_items_[fill[bucket_of_point[i]]++] = i;
}

void PointIndex::cell_coords(const Vec3& x, long& ix, long& iy, long& iz) const {
    auto clampc = [&](double v, double o, long n) {
        const double c = std::floor((v - o) / cell_);
        if (!(c >= 0.0)) return 0L;
        return std::min(n - 1, static_cast<long>(c));
    };
    ix = clampc(x.x(), origin_.x(), nx_);
    iy = clampc(x.y(), origin_.y(), ny_);
    iz = clampc(x.z(), origin_.z(), nz_);
}

std::size_t PointIndex::bucket_of(long ix, long iy, long iz) const {
    return static_cast<std::size_t>((iz * ny_ + iy) * nx_ + ix);
}

std::size_t PointIndex::nearest(const Vec3& x) const {
    auto r = knn(x, 1);
    if (r.empty()) throw std::logic_error("PointIndex::nearest on empty index");
    return r.front();
}

std::vector<std::size_t> PointIndex::knn(const Vec3& x, std::size_t k) const {
    k = std::min(k, points_.size());
    if (k == 0) return {};

    long cx, cy, cz;
    cell_coords(x, cx, cy, cz);
    const long n[3] = {nx_, ny_, nz_};
    const long c[3] = {cx, cy, cz};

    // (squared distance, index), kept sorted, at most k entries
    std::vector<std::pair<double, std::size_t>> best;
    best.reserve(k + 1);
    auto offer = [&](std::size_t i) {
        const double d2 = (points_[i] - x).squaredNorm();
        const std::pair<double, std::size_t> item{d2, i};
        if (best.size() == k && !(item < best.back())) return;
        best.insert(std::upper_bound(best.begin(), best.end(), item), item);
        if (best.size() > k) best.pop_back();
    };

    for (long r = 0;; ++r) {
        long lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max(0L, c[a] - r);
            hi[a] = std::min(n[a] - 1, c[a] + r);
        }
        for (long iz = lo[2]; iz <= hi[2]; ++iz) {
            for (long iy = lo[1]; iy <= hi[1]; ++iy) {
                for (long ix = lo[0]; ix <= hi[0]; ++ix) {
                    const bool on_shell = std::abs(ix - cx) == r || std::abs(iy - cy) == r || std::abs(iz - cz) == r;
                    if (!on_shell) continue;
                    const std::size_t b = bucket_of(ix, iy, iz);
                    for (std::size_t j = bucket_start_[b]; j < bucket_start_[b + 1]; ++j) offer(bucket_items_[j]);
                }
            }
        }

        // Lower bound on the distance to any bucket outside the searched block.
        double bound = std::numeric_limits<double>::infinity();
        bool unseen = false;
        for (int a = 0; a < 3; ++a) {
            const double o = origin_[a];
            if (c[a] - r > 0) {
                unseen = true;
                bound = std::min(bound, x[a] - (o + static_cast<double>(c[a] - r) * cell_));
            }
            if (c[a] + r < n[a] - 1) {
                unseen = true;
                bound = std::min(bound, (o + static_cast<double>(c[a] + r + 1) * cell_) - x[a]);
            }
        }
        if (!unseen) break;
        bound = std::max(bound, 0.0);
        if (best.size() == k && best.back().first < bound * bound) break;
    }

    std::vector<std::size_t> out;
    out.reserve(best.size());
    for (const auto& b : best) out.push_back(b.second);
    return out;
}

}  // namespace subscan
