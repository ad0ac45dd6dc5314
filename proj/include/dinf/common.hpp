#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "dinf/error.hpp"

namespace dinf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Training set: points plus stable 64-bit ids. All curvature/score sweeps
// iterate in ascending-id order, so permuting the storage order of a dataset
// changes nothing downstream.
struct Dataset {
    std::vector<std::uint64_t> ids;
    std::vector<Vec> points;

    static Dataset from_points(std::vector<Vec> pts) {
        Dataset d;
        d.points = std::move(pts);
        d.ids.resize(d.points.size());
        for (std::size_t i = 0; i < d.ids.size(); ++i) d.ids[i] = i;
        return d;
    }

    std::size_t size() const { return points.size(); }

    int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }

    // Storage positions sorted by id (the canonical sweep order).
    std::vector<std::size_t> order_by_id() const;
};

}  // namespace dinf
