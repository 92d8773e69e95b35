#include "dms/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace dms {

double mae(const std::vector<double>& errors) {
    require(!errors.empty(), "MAE of an empty error vector");
    double sum = 0;
    for (double e : errors) sum += std::abs(e);
    return sum / static_cast<double>(errors.size());
}

double accuracy_ratio(const std::vector<double>& e_a, const std::vector<double>& e_b) {
    require(e_a.size() == e_b.size(), "accuracy_ratio needs equal-length error vectors");
    require(!e_a.empty(), "accuracy_ratio of empty vectors");
    std::size_t better = 0;
    for (std::size_t t = 0; t < e_a.size(); ++t)
        if (e_a[t] < e_b[t]) ++better;
    return 100.0 * static_cast<double>(better) / static_cast<double>(e_a.size());
}

double empirical_quantile(std::vector<double> samples, double q) {
    require(!samples.empty(), "quantile of empty samples");
    require(q >= 0 && q <= 1, "quantile level must lie in [0, 1]");
    const auto K = static_cast<double>(samples.size());
    auto rank = static_cast<std::ptrdiff_t>(std::ceil(q * K - 1e-9));
    rank = std::clamp<std::ptrdiff_t>(rank, 1, static_cast<std::ptrdiff_t>(samples.size()));
    std::nth_element(samples.begin(), samples.begin() + rank - 1, samples.end());
    return samples[static_cast<std::size_t>(rank - 1)];
}

double binomial_pmf(Index n, Index k, double p) {
    if (k < 0 || k > n) return 0.0;
    if (p <= 0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1) return k == n ? 1.0 : 0.0;
    const double logc = std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) - std::lgamma(double(n - k) + 1);
    return std::exp(logc + double(k) * std::log(p) + double(n - k) * std::log1p(-p));
}

double binomial_two_sided_pvalue(Index n, Index k, double p) {
    const double observed = binomial_pmf(n, k, p);
    const double cutoff = observed * (1 + 1e-7);
    double total = 0;
    for (Index i = 0; i <= n; ++i) {
        double mass = binomial_pmf(n, i, p);
        if (mass <= cutoff) total += mass;
    }
    return std::min(total, 1.0);
}

VarTestResult var_test_from_count(Index periods, Index exceptions, double alpha) {
    require(alpha > 0 && alpha < 1, "VaR level must lie in (0, 1)");
    require(periods > 0, "VaR test needs at least one period");
    VarTestResult r;
    r.alpha = alpha;
    r.periods = periods;
    r.exceptions = exceptions;
    const double T = double(periods);
    r.expected = T - T * alpha;
    r.z_stat = (double(exceptions) - r.expected) / std::sqrt(T * alpha * (1 - alpha));
    r.p_value = binomial_two_sided_pvalue(periods, exceptions, 1 - alpha);
    return r;
}

VarTestResult var_exceptions_test(const Matrix& samples, const Vector& realized, double alpha) {
    require(samples.rows() == realized.size(), "one realization per period required");
    require(samples.cols() > 0, "VaR test needs predictive samples");
    std::vector<double> thresholds;
    std::vector<int> hits;
    Index count = 0;
    for (Index t = 0; t < samples.rows(); ++t) {
        std::vector<double> row(static_cast<std::size_t>(samples.cols()));
        for (Index k = 0; k < samples.cols(); ++k) row[static_cast<std::size_t>(k)] = samples(t, k);
        double q = empirical_quantile(std::move(row), 1 - alpha);
        thresholds.push_back(q);
        int hit = realized(t) < q ? 1 : 0;
        hits.push_back(hit);
        count += hit;
    }
    VarTestResult r = var_test_from_count(samples.rows(), count, alpha);
    r.thresholds = std::move(thresholds);
    r.exceptions_by_period = std::move(hits);
    return r;
}

}  // namespace dms
