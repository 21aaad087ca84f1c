#pragma once

#include "errors.hpp"
#include "features.hpp"
#include "grid.hpp"
#include "image.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "run_record.hpp"
#include "stats.hpp"
#include "text_io.hpp"
#include "tsne.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace latentsearch {

struct MethodJaccard {
    std::string method;
    std::vector<double> values; // one per repeat
    double mean = 0.0;
    double half_width_95 = 0.0;
    std::size_t repeats = 0;
};

struct EvaluationRepeat {
    std::uint64_t seed = 0;
    std::map<std::string, GridOccupancy> occupancy;
    /// Cell of each sample, per method, in input order.
    std::map<std::string, std::vector<Cell>> sample_cells;
};

struct JaccardReport {
    std::string baseline_label;
    std::size_t grid_size = 0;
    std::size_t repeats = 0;
    double perplexity = 0.0; // as used, after any clamping
    std::vector<MethodJaccard> methods; // non-baseline methods
    std::vector<EvaluationRepeat> details;
    std::vector<std::string> warnings;

    const MethodJaccard& method(const std::string& label) const
    {
        for (const auto& m : methods)
            if (m.method == label)
                return m;
        throw ConfigError("no Jaccard entry for method '" + label + "'");
    }

    /// Mean number of occupied cells of `label` over repeats.
    double mean_occupancy(const std::string& label) const
    {
        double sum = 0.0;
        for (const auto& d : details)
            sum += static_cast<double>(d.occupancy.at(label).cells.size());
        return sum / static_cast<double>(details.size());
    }
};

/// Projects the pooled samples of every method with t-SNE, bins them on a
/// G x G grid and scores each non-baseline method's occupancy against the
/// baseline's, repeated with fresh t-SNE seeds.
///
/// Identical feature vectors are embedded once and share a point. When the
/// number of distinct vectors is too small for the requested perplexity, the
/// perplexity is lowered to (distinct - 1) / 3 and a warning is recorded.
inline JaccardReport evaluate_methods(const std::map<std::string, std::vector<FeatureVector>>& samples,
                                      const std::string& baseline, const TsneConfig& cfg,
                                      std::size_t grid_size = 0, std::size_t repeats = 30,
                                      std::size_t parallelism = 1)
{
    if (samples.size() < 2)
        throw ConfigError("evaluation needs at least two methods");
    if (!samples.contains(baseline))
        throw ConfigError("baseline method '" + baseline + "' has no samples");
    if (repeats < 2)
        throw ConfigError("evaluation needs at least 2 repeats for a confidence interval");

    std::vector<FeatureVector> unique;
    std::vector<std::size_t> sample_to_unique;
    std::vector<std::string> labels;
    for (const auto& [label, features] : samples) {
        if (features.empty())
            throw ConfigError("method '" + label + "' has no samples");
        for (const auto& f : features) {
            const auto it = std::find(unique.begin(), unique.end(), f);
            sample_to_unique.push_back(static_cast<std::size_t>(it - unique.begin()));
            if (it == unique.end())
                unique.push_back(f);
            labels.push_back(label);
        }
    }

    JaccardReport report;
    report.baseline_label = baseline;
    report.repeats = repeats;
    report.grid_size = grid_size == 0 ? default_grid_size(labels.size()) : grid_size;

    TsneConfig tsne = cfg;
    const double max_perplexity = static_cast<double>(unique.size()) - 1.0;
    if (!(tsne.perplexity <= max_perplexity)) {
        tsne.perplexity = max_perplexity / 3.0;
        report.warnings.push_back("perplexity lowered to " + format_real(tsne.perplexity) + " for "
                                  + std::to_string(unique.size()) + " distinct samples");
    }
    report.perplexity = tsne.perplexity;
    tsne.validate(unique.size());
    const Affinities affinities = calibrate_affinities(unique, tsne.perplexity);
    for (const auto& w : affinities.warnings)
        report.warnings.push_back(w);

    report.details.resize(repeats);
    parallel_for(repeats, parallelism, [&](std::size_t r) {
        TsneConfig run = tsne;
        run.seed = derive_seed(cfg.seed, "evaluation-repeat", r);
        run.kl_every = 0;
        const auto unique_points = tsne_run(affinities, run).points;
        std::vector<Point2> points;
        points.reserve(labels.size());
        for (std::size_t idx : sample_to_unique)
            points.push_back(unique_points[idx]);
        const auto cells = grid_cells(points, report.grid_size);

        EvaluationRepeat& detail = report.details[r];
        detail.seed = run.seed;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto& occ = detail.occupancy[labels[i]];
            occ.grid_size = report.grid_size;
            occ.method_label = labels[i];
            occ.cells.insert(cells[i]);
            detail.sample_cells[labels[i]].push_back(cells[i]);
        }
    });

    for (const auto& [label, features] : samples) {
        if (label == baseline)
            continue;
        MethodJaccard m;
        m.method = label;
        m.repeats = repeats;
        for (const auto& d : report.details)
            m.values.push_back(jaccard_index(d.occupancy.at(label), d.occupancy.at(baseline)));
        const Interval ci = confidence_interval(m.values);
        m.mean = ci.mean;
        m.half_width_95 = ci.half_width;
        report.methods.push_back(std::move(m));
    }
    return report;
}

/// Label with the highest mean final fitness.
inline std::string best_performing(const std::map<std::string, std::vector<double>>& final_fitness)
{
    std::string best;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (const auto& [label, values] : final_fitness) {
        const double m = mean_of(values);
        if (best.empty() || m > best_mean) {
            best = label;
            best_mean = m;
        }
    }
    if (best.empty())
        throw ConfigError("no methods to choose a baseline from");
    return best;
}

inline void write_jaccard_csv(std::ostream& out, const JaccardReport& report)
{
    out << "method,baseline,repeats,grid_size,jaccard_mean,jaccard_ci95\n";
    for (const auto& m : report.methods)
        out << m.method << ',' << report.baseline_label << ',' << m.repeats << ',' << report.grid_size << ','
            << format_real(m.mean) << ',' << format_real(m.half_width_95) << '\n';
}

// Fitness curves on an iteration-percentage axis.

struct CurveSeries {
    std::string label;
    std::size_t runs = 0;
    std::vector<double> mean;                      // 101 entries, 0..100 %
    std::optional<std::vector<double>> half_width; // absent for a single run
};

struct CurveTable {
    std::vector<CurveSeries> series;
};

/// 1-based evaluation shown at `percent` of a trace of length `length`:
/// max(1, ceil(percent * length / 100)).
inline std::size_t evaluation_at_percent(int percent, std::size_t length)
{
    const std::size_t e = (static_cast<std::size_t>(percent) * length + 99) / 100;
    return std::max<std::size_t>(1, e);
}

inline std::vector<double> resample_trace(const std::vector<TracePoint>& trace)
{
    if (trace.empty())
        throw DegenerateInputError("cannot resample an empty trace");
    std::vector<double> out(101);
    for (int p = 0; p <= 100; ++p)
        out[static_cast<std::size_t>(p)] = trace[evaluation_at_percent(p, trace.size()) - 1].best_fitness;
    return out;
}

inline CurveTable fitness_curves(const std::map<std::string, std::vector<std::vector<TracePoint>>>& traces)
{
    if (traces.empty())
        throw DegenerateInputError("no run records to build curves from");
    CurveTable table;
    for (const auto& [label, runs] : traces) {
        if (runs.empty())
            throw DegenerateInputError("method '" + label + "' has no run records");
        std::vector<std::vector<double>> resampled;
        for (const auto& trace : runs)
            resampled.push_back(resample_trace(trace));
        CurveSeries s;
        s.label = label;
        s.runs = runs.size();
        s.mean.resize(101);
        if (runs.size() >= 2)
            s.half_width.emplace(101);
        std::vector<double> column(runs.size());
        for (std::size_t p = 0; p <= 100; ++p) {
            for (std::size_t r = 0; r < runs.size(); ++r)
                column[r] = resampled[r][p];
            if (runs.size() >= 2) {
                const Interval ci = confidence_interval(column);
                s.mean[p] = ci.mean;
                (*s.half_width)[p] = ci.half_width;
            } else {
                s.mean[p] = column[0];
            }
        }
        table.series.push_back(std::move(s));
    }
    return table;
}

inline CurveTable fitness_curves(const std::map<std::string, std::vector<RunRecord>>& records)
{
    std::map<std::string, std::vector<std::vector<TracePoint>>> traces;
    for (const auto& [label, runs] : records)
        for (const auto& r : runs)
            traces[label].push_back(r.trace);
    return fitness_curves(traces);
}

/// Columns: percent, then <label>_mean and (for >= 2 runs) <label>_ci95 per method.
inline void write_curves_csv(std::ostream& out, const CurveTable& table)
{
    out << "percent";
    for (const auto& s : table.series) {
        out << ',' << s.label << "_mean";
        if (s.half_width)
            out << ',' << s.label << "_ci95";
    }
    out << '\n';
    for (std::size_t p = 0; p <= 100; ++p) {
        out << p;
        for (const auto& s : table.series) {
            out << ',' << format_real(s.mean[p]);
            if (s.half_width)
                out << ',' << format_real((*s.half_width)[p]);
        }
        out << '\n';
    }
}

/// G x G canvas of `thumb` pixel tiles; each sample's image is drawn at its
/// cell (later samples overwrite earlier ones in the same cell).
inline ImageTensor grid_montage(const std::vector<ImageTensor>& images, const std::vector<Cell>& cells,
                                std::size_t grid_size, int thumb = 32)
{
    if (images.size() != cells.size())
        throw ShapeError("montage needs one cell per image");
    const int g = static_cast<int>(grid_size);
    ImageTensor canvas = ImageTensor::filled(g * thumb, g * thumb, 0.15);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ImageTensor tile = resize_image(images[i], thumb, thumb);
        const auto [row, col] = cells[i];
        for (int y = 0; y < thumb; ++y)
            for (int x = 0; x < thumb; ++x)
                for (int c = 0; c < 3; ++c)
                    canvas.at(row * thumb + y, col * thumb + x, c) = tile.at(y, x, c);
    }
    return canvas;
}

} // namespace latentsearch
