#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace flowcert {

// Identifier of the random stream recipe. Bump when the recipe changes so
// that manifests from older runs are recognisably non-replayable.
inline constexpr std::string_view kRngVersion = "mt19937_64/polar-v1";

// Seeded normal variates built from std::mt19937_64 (whose output sequence is
// fixed by the standard) and a hand-written polar transform. The standard
// library distributions are implementation-defined, so they are avoided.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed);

    double next();
    double uniform();  // in [0, 1)
    std::uint64_t next_u64() { return engine_(); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent sub-seed for stream `tag` from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag);

}  // namespace flowcert
