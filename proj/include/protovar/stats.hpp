#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace protovar::stats {

// Neumaier-compensated accumulator.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double sum(std::span<const double> xs) {
    CompensatedSum acc;
    for (double x : xs)
        acc.add(x);
    return acc.value();
}

inline double mean(std::span<const double> xs) {
    if (xs.empty())
        throw std::invalid_argument("mean of empty sequence");
    return sum(xs) / static_cast<double>(xs.size());
}

// Sample standard deviation (n - 1 denominator), two-pass.
inline double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2)
        throw std::invalid_argument("sample standard deviation needs at least 2 values");
    const double m = mean(xs);
    CompensatedSum acc;
    for (double x : xs)
        acc.add((x - m) * (x - m));
    return std::sqrt(acc.value() / static_cast<double>(xs.size() - 1));
}

// Linear-interpolation quantile of an ascending sequence at position (n-1)*q.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty())
        throw std::invalid_argument("quantile of empty sequence");
    if (!(q >= 0.0 && q <= 1.0))
        throw std::invalid_argument("quantile level outside [0,1]");
    const double pos = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0)
        return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, q);
}

}  // namespace protovar::stats
