#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <string>

namespace ganloc {

// Deterministic random source. Distribution shaping is done by hand so the
// sampled sequence depends only on the mt19937_64 stream, not on the
// standard library's distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>(uniform() * static_cast<double>(n));
    }

    // standard normal via Box-Muller, one value per call (spare cached)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::string serialize() const {
        std::ostringstream oss;
        uint64_t bits;
        std::memcpy(&bits, &spare_, sizeof bits); // exact round trip for the cached normal
        oss << engine_ << " " << (have_spare_ ? 1 : 0) << " " << bits;
        return oss.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream iss(s);
        int hs = 0;
        uint64_t bits = 0;
        iss >> engine_ >> hs >> bits;
        std::memcpy(&spare_, &bits, sizeof bits);
        have_spare_ = (hs != 0);
    }

    // independent child stream, e.g. per-worker
    Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ganloc
