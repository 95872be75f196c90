#pragma once

#include <cmath>

#include "penmcfm/util.hpp"

namespace penmcfm {

// Gamma-family special functions via upward recurrence into the asymptotic
// (Stirling / Bernoulli) regime. Accurate to ~1 ulp of the result over
// x in [1e-4, 1e6], which the frailty updates require.

inline double log_gamma(double x)
{
    if (!(x > 0.0)) throw Error("log_gamma: requires x > 0");
    double shift = 0.0;
    while (x < 12.0) {
        shift -= std::log(x);
        x += 1.0;
    }
    const double inv2 = 1.0 / (x * x);
    // B_{2n} / (2n (2n-1) x^{2n-1})
    double series = (1.0 / 12.0);
    series += inv2 * (-1.0 / 360.0);
    series += inv2 * inv2 * (1.0 / 1260.0);
    series += inv2 * inv2 * inv2 * (-1.0 / 1680.0);
    series += inv2 * inv2 * inv2 * inv2 * (1.0 / 1188.0);
    series += inv2 * inv2 * inv2 * inv2 * inv2 * (-691.0 / 360360.0);
    series += inv2 * inv2 * inv2 * inv2 * inv2 * inv2 * (1.0 / 156.0);
    const double half_log_2pi = 0.91893853320467274178032973640562;
    return shift + (x - 0.5) * std::log(x) - x + half_log_2pi + series / x;
}

inline double digamma(double x)
{
    if (!(x > 0.0)) throw Error("digamma: requires x > 0");
    double shift = 0.0;
    while (x < 12.0) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // B_{2n} / (2n x^{2n})
    double series = inv2 * (1.0 / 12.0);
    series -= inv2 * inv2 * (1.0 / 120.0);
    series += inv2 * inv2 * inv2 * (1.0 / 252.0);
    series -= inv2 * inv2 * inv2 * inv2 * (1.0 / 240.0);
    series += inv2 * inv2 * inv2 * inv2 * inv2 * (1.0 / 132.0);
    series -= inv2 * inv2 * inv2 * inv2 * inv2 * inv2 * (691.0 / 32760.0);
    series += inv2 * inv2 * inv2 * inv2 * inv2 * inv2 * inv2 * (1.0 / 12.0);
    return shift + std::log(x) - 0.5 * inv - series;
}

inline double trigamma(double x)
{
    if (!(x > 0.0)) throw Error("trigamma: requires x > 0");
    double shift = 0.0;
    while (x < 12.0) {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = inv + 0.5 * inv2;
    double p = inv * inv2;  // x^{-(2n+1)} terms
    series += p * (1.0 / 6.0);
    p *= inv2;
    series -= p * (1.0 / 30.0);
    p *= inv2;
    series += p * (1.0 / 42.0);
    p *= inv2;
    series -= p * (1.0 / 30.0);
    p *= inv2;
    series += p * (5.0 / 66.0);
    p *= inv2;
    series -= p * (691.0 / 2730.0);
    return shift + series;
}

}  // namespace penmcfm
