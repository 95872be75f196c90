#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>
#include <functional>

namespace penmcfm {

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// log(1 + e^x) without overflow
inline double softplus(double x)
{
    if (x > 36.0) return x + std::exp(-x);
    if (x < -36.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(e^a + e^b)
inline double logaddexp(double a, double b)
{
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double sqr(double x) { return x * x; }

inline bool close_rel(double a, double b, double tol)
{
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) <= tol * scale;
}

// Static index partition over worker threads. Each task writes only its own
// slot, so results are identical for any thread count.
inline void parallel_for(std::size_t n_tasks, int n_threads,
                         const std::function<void(std::size_t)>& body)
{
    if (n_tasks == 0) return;
    const int workers =
        std::max(1, std::min<int>(n_threads, static_cast<int>(n_tasks)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = w; i < n_tasks; i += workers) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace penmcfm
