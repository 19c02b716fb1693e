#include "wassdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace wassdiff {

namespace {

void require_physical(const GridField& f, const char* what) {
    if (f.space != Space::physical)
        throw StateError(std::string(what) + " requires physical-space fields");
}

void require_same_dims(const GridField& a, const GridField& b, const char* what) {
    if (a.height != b.height || a.width != b.width)
        throw DimensionError(std::string(what) + " dimension mismatch");
}

}  // namespace

void Ensemble::validate() const {
    if (members.empty()) throw DomainError("ensemble must have at least one member");
    for (const GridField& m : members) {
        require_physical(m, "ensemble");
        require_same_dims(m, members.front(), "ensemble members");
        m.validate();
    }
}

GridField Ensemble::mean() const {
    validate();
    GridField out(members.front().height, members.front().width, Space::physical,
                  members.front().cell_km);
    for (const GridField& m : members)
        for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += m.values[i];
    double inv = 1.0 / static_cast<double>(members.size());
    for (double& v : out.values) v *= inv;
    return out;
}

double empirical_quantile(std::span<const double> values, double q) {
    if (values.empty()) throw DomainError("quantile of an empty sample");
    if (q < 0.0 || q > 1.0) throw DomainError("quantile level must lie in [0, 1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double h = q * (sorted.size() - 1);
    size_t i = static_cast<size_t>(h);
    if (i + 1 >= sorted.size()) return sorted.back();
    double frac = h - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

double mae(const GridField& pred, const GridField& obs) {
    require_physical(pred, "mae");
    require_physical(obs, "mae");
    require_same_dims(pred, obs, "mae");
    double sum = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i)
        sum += std::abs(pred.values[i] - obs.values[i]);
    return sum / static_cast<double>(pred.values.size());
}

double bias(const GridField& pred, const GridField& obs) {
    require_physical(pred, "bias");
    require_physical(obs, "bias");
    require_same_dims(pred, obs, "bias");
    double sum = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i) sum += pred.values[i] - obs.values[i];
    return sum / static_cast<double>(pred.values.size());
}

namespace {

// Max-pooled exceedance mask: one flag per pool block (ragged edge blocks
// allowed), set when any pixel in the block reaches the threshold.
std::vector<char> pooled_exceedance(const GridField& f, double threshold, int pool) {
    int bh = (f.height + pool - 1) / pool;
    int bw = (f.width + pool - 1) / pool;
    std::vector<char> mask(static_cast<size_t>(bh) * bw, 0);
    for (int r = 0; r < f.height; ++r)
        for (int c = 0; c < f.width; ++c)
            if (f.at(r, c) >= threshold) mask[static_cast<size_t>(r / pool) * bw + c / pool] = 1;
    return mask;
}

}  // namespace

double csi(const GridField& pred, const GridField& obs, double threshold_mm, double pool_km) {
    require_physical(pred, "csi");
    require_physical(obs, "csi");
    require_same_dims(pred, obs, "csi");
    double ratio = pool_km / pred.cell_km;
    int pool = static_cast<int>(std::lround(ratio));
    if (pool < 1 || std::abs(ratio - pool) > 1e-9)
        throw DomainError("pool_km must be a positive multiple of cell_km");

    std::vector<char> pm = pooled_exceedance(pred, threshold_mm, pool);
    std::vector<char> om = pooled_exceedance(obs, threshold_mm, pool);
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pm.size(); ++i) {
        if (pm[i] && om[i]) ++tp;
        else if (pm[i] && !om[i]) ++fp;
        else if (!pm[i] && om[i]) ++fn;
    }
    long denom = tp + fp + fn;
    if (denom == 0) return 1.0;
    return static_cast<double>(tp) / static_cast<double>(denom);
}

double hrre(const GridField& pred, const GridField& obs, double heavy_threshold_mm) {
    require_physical(pred, "hrre");
    require_physical(obs, "hrre");
    require_same_dims(pred, obs, "hrre");
    long np = 0, no = 0;
    for (double v : pred.values) np += v >= heavy_threshold_mm;
    for (double v : obs.values) no += v >= heavy_threshold_mm;
    return static_cast<double>(std::abs(np - no));
}

double mppe(const GridField& pred, const GridField& obs, double quantile) {
    require_physical(pred, "mppe");
    require_physical(obs, "mppe");
    if (pred.values.empty() || obs.values.empty()) throw DomainError("mppe of an empty field");
    return std::abs(empirical_quantile(pred.values, quantile) -
                    empirical_quantile(obs.values, quantile));
}

double crps(const Ensemble& ens, const GridField& obs) {
    ens.validate();
    require_physical(obs, "crps");
    require_same_dims(ens.members.front(), obs, "crps");
    const size_t m = ens.size();
    const size_t n = obs.values.size();
    double total = 0.0;
    std::vector<double> x(m);
    for (size_t px = 0; px < n; ++px) {
        for (size_t i = 0; i < m; ++i) x[i] = ens.members[i].values[px];
        double y = obs.values[px];
        double term1 = 0.0;
        for (size_t i = 0; i < m; ++i) term1 += std::abs(x[i] - y);
        term1 /= static_cast<double>(m);
        double term2 = 0.0;
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < m; ++j) term2 += std::abs(x[i] - x[j]);
        term2 /= 2.0 * static_cast<double>(m) * static_cast<double>(m);
        total += term1 - term2;
    }
    return total / static_cast<double>(n);
}

QqCurve qq_curve(const Ensemble& ens, const GridField& obs) {
    ens.validate();
    require_physical(obs, "qq_curve");
    QqCurve curve;
    curve.percentiles.resize(101);
    curve.obs_quantiles.resize(101);
    curve.mean_quantiles.assign(101, 0.0);
    curve.std_quantiles.assign(101, 0.0);
    curve.member_quantiles.assign(ens.size(), std::vector<double>(101));
    for (int p = 0; p <= 100; ++p) {
        curve.percentiles[p] = p;
        curve.obs_quantiles[p] = empirical_quantile(obs.values, p / 100.0);
    }
    for (size_t m = 0; m < ens.size(); ++m)
        for (int p = 0; p <= 100; ++p)
            curve.member_quantiles[m][p] = empirical_quantile(ens.members[m].values, p / 100.0);
    for (int p = 0; p <= 100; ++p) {
        double sum = 0.0;
        for (size_t m = 0; m < ens.size(); ++m) sum += curve.member_quantiles[m][p];
        double mean = sum / static_cast<double>(ens.size());
        curve.mean_quantiles[p] = mean;
        double var = 0.0;
        for (size_t m = 0; m < ens.size(); ++m) {
            double d = curve.member_quantiles[m][p] - mean;
            var += d * d;
        }
        curve.std_quantiles[p] = std::sqrt(var / static_cast<double>(ens.size()));
    }
    return curve;
}

void write_qq_csv(const QqCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(10);
    out << "percentile,obs";
    for (size_t m = 0; m < curve.member_quantiles.size(); ++m) out << ",member_" << m;
    out << ",mean,std\n";
    for (size_t p = 0; p < curve.percentiles.size(); ++p) {
        out << curve.percentiles[p] << "," << curve.obs_quantiles[p];
        for (size_t m = 0; m < curve.member_quantiles.size(); ++m)
            out << "," << curve.member_quantiles[m][p];
        out << "," << curve.mean_quantiles[p] << "," << curve.std_quantiles[p] << "\n";
    }
}

SampleMetrics evaluate_sample(const std::string& id, const Ensemble& ens, const GridField& obs,
                              const MetricThresholds& thresholds) {
    SampleMetrics row;
    row.id = id;
    GridField mean = ens.mean();
    row.mae = mae(mean, obs);
    row.bias = bias(mean, obs);
    row.csi = csi(mean, obs, thresholds.csi_threshold_mm, thresholds.pool_km);
    row.hrre = hrre(mean, obs, thresholds.hrre_threshold_mm);
    row.mppe = mppe(mean, obs, thresholds.mppe_quantile);
    row.crps = crps(ens, obs);
    return row;
}

void write_metrics_csv(const std::vector<SampleMetrics>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(10);
    out << "sample,mae,bias,csi,hrre,mppe,crps\n";
    auto emit = [&](const SampleMetrics& r) {
        out << r.id << "," << r.mae << "," << r.bias << "," << r.csi << "," << r.hrre << ","
            << r.mppe << "," << r.crps << "\n";
    };
    for (const auto& r : rows) emit(r);
    if (!rows.empty()) {
        SampleMetrics mean_row, std_row;
        mean_row.id = "mean";
        std_row.id = "std";
        auto accumulate = [&](auto get, double& mean_out, double& std_out) {
            double sum = 0.0;
            for (const auto& r : rows) sum += get(r);
            double mean = sum / static_cast<double>(rows.size());
            double var = 0.0;
            for (const auto& r : rows) {
                double d = get(r) - mean;
                var += d * d;
            }
            mean_out = mean;
            std_out = std::sqrt(var / static_cast<double>(rows.size()));
        };
        accumulate([](const SampleMetrics& r) { return r.mae; }, mean_row.mae, std_row.mae);
        accumulate([](const SampleMetrics& r) { return r.bias; }, mean_row.bias, std_row.bias);
        accumulate([](const SampleMetrics& r) { return r.csi; }, mean_row.csi, std_row.csi);
        accumulate([](const SampleMetrics& r) { return r.hrre; }, mean_row.hrre, std_row.hrre);
        accumulate([](const SampleMetrics& r) { return r.mppe; }, mean_row.mppe, std_row.mppe);
        accumulate([](const SampleMetrics& r) { return r.crps; }, mean_row.crps, std_row.crps);
        emit(mean_row);
        emit(std_row);
    }
}

}  // namespace wassdiff
