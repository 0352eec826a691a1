#pragma once

#include <string>

namespace forge {

/// Half-open interval of video time in seconds, start < end.
struct TemporalSpan {
    double start = 0.0;
    double end = 0.0;

    TemporalSpan() = default;
    TemporalSpan(double s, double e);

    double length() const noexcept { return end - start; }
    bool operator==(const TemporalSpan&) const = default;
};

struct MomentAnnotation {
    std::string video_id;
    TemporalSpan span;
    std::string query;
};

}  // namespace forge
