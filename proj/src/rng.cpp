#include "fewclusters/rng.hpp"

#include "fewclusters/parallel.hpp"

#include <boost/random/normal_distribution.hpp>

#include <atomic>
#include <cstdlib>
#include <limits>
#include <string>

namespace fewclusters {

Engine make_engine(std::uint64_t seed) { return Engine(mix64(seed)); }

double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_int(Engine& eng, std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t range = hi - lo;
    if (range == std::numeric_limits<std::uint64_t>::max()) return eng();
    const std::uint64_t span = range + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t draw;
    do {
        draw = eng();
    } while (draw >= limit);
    return lo + draw % span;
}

double std_normal(Engine& eng) {
    boost::random::normal_distribution<double> dist(0.0, 1.0);
    return dist(eng);
}

namespace {
std::atomic<unsigned> g_threads{0};
}

unsigned default_threads() {
    if (const unsigned t = g_threads.load()) return t;
    if (const char* env = std::getenv("FEWCLUSTERS_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void set_default_threads(unsigned threads) { g_threads.store(threads); }

namespace detail {
bool& inside_worker() noexcept {
    thread_local bool flag = false;
    return flag;
}
}  // namespace detail

}  // namespace fewclusters
