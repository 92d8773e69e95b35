#pragma once

#include "dms/core.hpp"

#include <vector>

namespace dms {

double mae(const std::vector<double>& errors);

// Percentage of periods with e_a < e_b; ties and e_b = 0 count as not better.
double accuracy_ratio(const std::vector<double>& e_a, const std::vector<double>& e_b);

// Lower empirical quantile: the ceil(q K)-th order statistic.
double empirical_quantile(std::vector<double> samples, double q);

double binomial_pmf(Index n, Index k, double p);

// Exact two-sided test: total mass of outcomes no more likely than the observed one.
double binomial_two_sided_pvalue(Index n, Index k, double p);

struct VarTestResult {
    double alpha = 0;
    Index periods = 0;
    std::vector<double> thresholds;
    std::vector<int> exceptions_by_period;
    Index exceptions = 0;
    double expected = 0;
    double z_stat = 0;
    double p_value = 0;
};

// alpha is the confidence level; an exception is realized < the (1 - alpha) quantile.
VarTestResult var_exceptions_test(const Matrix& samples, const Vector& realized, double alpha);
VarTestResult var_test_from_count(Index periods, Index exceptions, double alpha);

}  // namespace dms
