#pragma once

#include <span>
#include <string>
#include <vector>

#include "wassdiff/grid.hpp"

namespace wassdiff {

// An ensemble of physical-space forecast members with identical dimensions.
struct Ensemble {
    std::vector<GridField> members;

    size_t size() const { return members.size(); }
    void validate() const;
    GridField mean() const;
};

struct MetricThresholds {
    double csi_threshold_mm = 10.0;
    double pool_km = 16.0;
    double hrre_threshold_mm = 56.0;
    double mppe_quantile = 0.999;
};

// Empirical quantile with linear interpolation between order statistics
// (inclusive endpoints: q=0 is the minimum, q=1 the maximum).
double empirical_quantile(std::span<const double> values, double q);

double mae(const GridField& pred, const GridField& obs);
double bias(const GridField& pred, const GridField& obs);

// Critical success index on threshold-exceedance masks, max-pooled to
// pool_km (a pooled cell exceeds when any pixel in it exceeds). Returns 1
// when neither field has exceedances.
double csi(const GridField& pred, const GridField& obs, double threshold_mm = 10.0,
           double pool_km = 16.0);

// Absolute difference in heavy-rain pixel counts.
double hrre(const GridField& pred, const GridField& obs, double heavy_threshold_mm = 56.0);

// Absolute error at the extreme (default top-1/1000) quantile.
double mppe(const GridField& pred, const GridField& obs, double quantile = 0.999);

// Ensemble CRPS via the empirical identity
//   mean_i |x_i - y| - (1 / (2 M^2)) sum_ij |x_i - x_j|,
// averaged over pixels.
double crps(const Ensemble& ens, const GridField& obs);

// Per-percentile (0..100) quantiles of each member and the observation,
// plus the across-member mean and standard deviation.
struct QqCurve {
    std::vector<int> percentiles;             // 0..100
    std::vector<double> obs_quantiles;        // one per percentile
    std::vector<std::vector<double>> member_quantiles;  // [member][percentile]
    std::vector<double> mean_quantiles;
    std::vector<double> std_quantiles;
};
QqCurve qq_curve(const Ensemble& ens, const GridField& obs);
void write_qq_csv(const QqCurve& curve, const std::string& path);

// One evaluation row: deterministic metrics on the ensemble mean, CRPS on
// the full ensemble.
struct SampleMetrics {
    std::string id;
    double mae = 0, bias = 0, csi = 0, hrre = 0, mppe = 0, crps = 0;
};
SampleMetrics evaluate_sample(const std::string& id, const Ensemble& ens, const GridField& obs,
                              const MetricThresholds& thresholds);

void write_metrics_csv(const std::vector<SampleMetrics>& rows, const std::string& path);

}  // namespace wassdiff
