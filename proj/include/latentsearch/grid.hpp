#pragma once

#include "errors.hpp"
#include "tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace latentsearch {

/// (row, col)
using Cell = std::pair<int, int>;

struct GridOccupancy {
    std::size_t grid_size = 0;
    std::set<Cell> cells;
    std::string method_label;
};

/// Cell of every point after min-max normalizing each axis over the pooled set:
/// row from y, column from x, floor(v * G) clamped to G - 1. An axis with zero
/// extent maps to index 0; all points identical is an error.
inline std::vector<Cell> grid_cells(const std::vector<Point2>& points, std::size_t grid_size)
{
    if (grid_size < 1)
        throw ConfigError("grid size must be >= 1");
    if (points.empty())
        throw DegenerateInputError("no points to place on the grid");
    double min_x = points[0].x, max_x = points[0].x, min_y = points[0].y, max_y = points[0].y;
    for (const auto& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw NumericError("non-finite point passed to the grid");
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double span_x = max_x - min_x;
    const double span_y = max_y - min_y;
    if (!(span_x > 0.0) && !(span_y > 0.0))
        throw DegenerateInputError("all points coincide; the grid extent is empty");

    const auto g = static_cast<double>(grid_size);
    const int last = static_cast<int>(grid_size) - 1;
    auto bin = [&](double v, double lo, double span) {
        if (!(span > 0.0))
            return 0;
        return std::min(static_cast<int>(std::floor((v - lo) / span * g)), last);
    };
    std::vector<Cell> cells;
    cells.reserve(points.size());
    for (const auto& p : points)
        cells.emplace_back(bin(p.y, min_y, span_y), bin(p.x, min_x, span_x));
    return cells;
}

inline std::map<std::string, GridOccupancy> grid_assign(const std::vector<Point2>& points,
                                                        const std::vector<std::string>& labels,
                                                        std::size_t grid_size)
{
    if (points.size() != labels.size())
        throw ShapeError("grid_assign needs one label per point");
    const auto cells = grid_cells(points, grid_size);
    std::map<std::string, GridOccupancy> occupancy;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto& occ = occupancy[labels[i]];
        occ.grid_size = grid_size;
        occ.method_label = labels[i];
        occ.cells.insert(cells[i]);
    }
    return occupancy;
}

/// |A n B| / |A u B| over occupied cells.
inline double jaccard_index(const GridOccupancy& a, const GridOccupancy& b)
{
    if (a.grid_size != b.grid_size)
        throw ShapeError("Jaccard index of occupancies on different grids");
    if (a.cells.empty() && b.cells.empty())
        throw DegenerateInputError("Jaccard index of two empty occupancies");
    std::size_t common = 0;
    for (const Cell& c : a.cells)
        common += b.cells.count(c);
    const std::size_t unite = a.cells.size() + b.cells.size() - common;
    return static_cast<double>(common) / static_cast<double>(unite);
}

inline std::size_t default_grid_size(std::size_t pooled_samples)
{
    return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(pooled_samples))));
}

} // namespace latentsearch
