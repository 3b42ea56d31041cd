#pragma once

#include "aqcast/chain.hpp"
#include "aqcast/dataset.hpp"
#include "aqcast/jointdist.hpp"

#include <json.hpp>

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqcast {

class EvalError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

double rmse(std::span<const double> pred, std::span<const double> obs);
/// mean(pred - obs)
double bias(std::span<const double> pred, std::span<const double> obs);
/// (2/99) sum_p pinball_p(obs - q_p)
double crps_from_quantiles(std::span<const double> q, double obs);

/// Seasonal naive from the end of `history`: obs(t - 168) scaled by the ratio of the last
/// 24 h mean to the mean of the same hours one week earlier.
std::vector<double> persistence_forecast(std::span<const double> history, std::size_t horizons);

/// Fraction of observations at or below q_p, per percentile.
std::vector<double> calibration_coverage(const std::vector<Percentiles> &q, std::span<const double> obs);
/// Fraction of observations inside [q_lo, q_hi] (1-based percentile levels).
double interval_coverage(const std::vector<Percentiles> &q, std::span<const double> obs, int lo, int hi);

struct MetricCell {
	double rmse = 0.0;
	double bias = 0.0;
	double crps = 0.0; // NaN for point-only forecasts
	std::size_t n = 0;
};

struct MetricReport {
	std::string label;
	std::string pollutant;
	int horizons = 0;
	/// station -> per-horizon metrics
	std::map<int, std::vector<MetricCell>> cells;
	/// station -> metrics pooled over horizons (RMSE over all pairs)
	std::map<int, MetricCell> per_station;

	double rmse_mean() const;
	double rmse_std() const;
	double bias_mean() const;
	double bias_std() const;
	double crps_mean() const;
	double crps_std() const;
};

/// Point is q50 when quantiles are present, otherwise `point`. Masked observations are skipped.
MetricReport evaluate_forecasts(const std::string &label, const std::string &pollutant,
                                const std::vector<QuantileForecast> &forecasts, const SpatioTemporalFrame &observed);

/// Persistence forecasts for every (station, issue) in `like`, built from `history` (complete).
std::vector<QuantileForecast> persistence_like(const std::vector<QuantileForecast> &like,
                                               const SpatioTemporalFrame &history);

/// RMSE per horizon, pooled over stations and issues.
std::vector<double> rmse_by_horizon(const std::vector<QuantileForecast> &forecasts, const SpatioTemporalFrame &observed,
                                    const std::string &var);

struct Evaluation {
	std::vector<MetricReport> reports;
	std::vector<double> rmse_model;       // per horizon
	std::vector<double> rmse_persistence; // per horizon
	/// 1 - mean(rmse_model) / mean(rmse_persistence)
	double skill = 0.0;
	std::vector<double> coverage; // per percentile, model forecasts
	double band_10_90 = 0.0;
	double series_std = 0.0;
	double q50_bias = 0.0;
	std::size_t pairs = 0;
};

nlohmann::json evaluation_to_json(const Evaluation &ev);

/// Writes metrics.csv, summary.csv, coverage.csv, events.json (when given) and one
/// fan_<station>.csv per station for the last issue date of `forecasts`.
std::vector<std::string> report_emit(const std::string &dir, const Evaluation &ev, const nlohmann::json *events,
                                     const std::vector<QuantileForecast> &forecasts,
                                     const SpatioTemporalFrame &observed);

} // namespace aqcast
