#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "latent.hpp"
#include "text_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace latentsearch {

struct TracePoint {
    std::uint64_t evaluation = 0; // 1-based
    double best_fitness = 0.0;
    double current_fitness = 0.0;

    friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

/// Outcome of one optimizer execution.
struct RunRecord {
    std::string strategy;
    std::uint64_t run_index = 0;
    std::uint64_t seed = 0;
    std::vector<TracePoint> trace;
    LatentCode final_latent;
    ImageTensor final_image;
    double final_fitness = -std::numeric_limits<double>::infinity();
    double wall_time = 0.0; // seconds
    /// True when the budget stopped the run before its configured length.
    bool partial = false;

    std::uint64_t evaluations() const noexcept { return trace.size(); }
};

/// Best-so-far bookkeeping shared by all strategies.
class TraceRecorder {
public:
    void record(double fitness, const LatentCode& latent)
    {
        if (!std::isfinite(fitness))
            throw NumericError("non-finite fitness at evaluation " + std::to_string(trace_.size() + 1));
        if (trace_.empty() || fitness > best_fitness_) {
            best_fitness_ = fitness;
            best_latent_ = latent;
        }
        trace_.push_back({trace_.size() + 1, best_fitness_, fitness});
    }

    bool empty() const noexcept { return trace_.empty(); }
    double best_fitness() const noexcept { return best_fitness_; }
    const LatentCode& best_latent() const noexcept { return best_latent_; }
    const std::vector<TracePoint>& trace() const noexcept { return trace_; }
    std::vector<TracePoint> take_trace() { return std::move(trace_); }

private:
    std::vector<TracePoint> trace_;
    double best_fitness_ = -std::numeric_limits<double>::infinity();
    LatentCode best_latent_;
};

// Trace CSV: "evaluation,best_fitness,current_fitness".

inline void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace)
{
    out << "evaluation,best_fitness,current_fitness\n";
    for (const auto& p : trace)
        out << p.evaluation << ',' << format_real(p.best_fitness) << ',' << format_real(p.current_fitness) << '\n';
}

inline std::vector<TracePoint> read_trace_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line != "evaluation,best_fitness,current_fitness")
        throw ConfigError("trace CSV has an unexpected header");
    std::vector<TracePoint> trace;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto fields = split(line, ',');
        if (fields.size() != 3)
            throw ConfigError("trace CSV row has " + std::to_string(fields.size()) + " fields");
        trace.push_back({parse_count(fields[0]), parse_real(fields[1]), parse_real(fields[2])});
    }
    return trace;
}

inline void save_trace_csv(const std::string& path, const std::vector<TracePoint>& trace)
{
    std::ofstream out(path);
    if (!out)
        throw ConfigError("cannot write " + path);
    write_trace_csv(out, trace);
}

inline std::vector<TracePoint> load_trace_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read " + path);
    return read_trace_csv(in);
}

} // namespace latentsearch
