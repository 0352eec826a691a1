#include "forge/moments.hpp"

#include "forge/error.hpp"

#include <cmath>

namespace forge {

TemporalSpan::TemporalSpan(double s, double e) : start(s), end(e) {
    if (!(s >= 0.0) || !(s < e) || !std::isfinite(e))
        throw InvalidInput("invalid temporal span [" + std::to_string(s) + ", " + std::to_string(e) + "]");
}

}  // namespace forge
