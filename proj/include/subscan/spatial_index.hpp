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

#include <cstddef>
#include <span>
#include <vector>

#include "subscan/geometry.hpp"

namespace subscan {

/// Uniform bucket grid over a fixed point set for nearest / k-nearest lookups.
///
/// Results are exact (the search expands shells until no closer bucket can
/// exist). Ties in distance are broken by the lower point index, so results
/// are deterministic.
class PointIndex {
public:
    PointIndex() = default;
    explicit PointIndex(std::span<const Vec3> points);

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

    /// Index of the closest point. Requires a non-empty index.
    std::size_t nearest(const Vec3& x) const;

    /// Indices of the k closest points, ascending by distance.
    std::vector<std::size_t> knn(const Vec3& x, std::size_t k) const;

private:
    std::size_t bucket_of(long ix, long iy, long iz) const;
    void cell_coords(const Vec3& x, long& ix, long& iy, long& iz) const;

    std::vector<Vec3> points_;
    Vec3 origin_ = Vec3::Zero();
    double cell_ = 1.0;
    long nx_ = 1, ny_ = 1, nz_ = 1;
    std::vector<std::size_t> bucket_start_;
    std::vector<std::size_t> bucket_items_;
};

}  // namespace subscan
