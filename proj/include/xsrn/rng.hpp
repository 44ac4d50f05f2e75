#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace xsrn {

// Deterministic random source. All sampling goes through the explicit helpers
// below rather than std:: distributions, so a given seed produces the same
// stream on every build, and the full engine state round-trips through text
// for checkpoint resume.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [lo, hi], inclusive. Rejection sampling keeps the
    // draw unbiased for any range.
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
        const std::uint64_t span = static_cast<std::uint64_t>(hi) - lo + 1;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return lo + static_cast<int>(v % span);
    }

    // Uniform double in [lo, hi).
    double uniform(double lo = 0.0, double hi = 1.0) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& state) {
        std::istringstream is(state);
        is >> engine_;
        if (is.fail()) throw std::runtime_error("Rng::deserialize: malformed engine state");
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace xsrn
