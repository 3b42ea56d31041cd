#pragma once

#include "aqcast/arma.hpp"
#include "aqcast/dataset.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace aqcast {

class ImputeError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

struct Harmonic {
	int period = 24;
	int k = 1;
	double amplitude = 0.0;
	double phase = 0.0;
};

/// mean + sum amplitude * cos(2 pi k t / period - phase)
struct TrigModel {
	double mean = 0.0;
	std::vector<Harmonic> harmonics;

	double evaluate(std::size_t t) const;
};

TrigModel trig_fit(const MaskedSeries &series, const std::vector<int> &periods, int K);
MaskedSeries trig_impute(const MaskedSeries &series, const std::vector<int> &periods = {24, 168}, int K = 3);

/// Predictive mean matching. `predictors` hold fully observed columns of the same length.
MaskedSeries pmm_impute(const MaskedSeries &target, const std::vector<std::vector<double>> &predictors, int n_draws,
                        std::uint64_t seed);
/// Frame overload: target and predictors taken per station from `frame`.
SpatioTemporalFrame pmm_impute(const SpatioTemporalFrame &frame, const std::string &target_var,
                               const std::vector<std::string> &predictor_vars, int n_draws, std::uint64_t seed);

struct XArimaModel {
	std::vector<std::string> channels;
	std::vector<double> damping; // per channel; 0 keeps the raw input
	double intercept = 0.0;
	std::vector<double> alpha;   // per channel
	std::vector<ArmaFactor> factors;
	double sigma = 0.0;
	bool converged = false;
	bool projected = false;
	int iterations = 0;
	std::size_t n_used = 0;
	double aic = 0.0;
};

struct XArimaOptions {
	/// Candidate (p, q) per seasonal factor; every combination is tried.
	std::vector<std::pair<int, int>> regular{{1, 0}, {2, 0}, {1, 1}, {2, 1}};
	std::vector<std::pair<int, int>> daily{{0, 0}, {1, 0}, {1, 1}};
	std::vector<std::pair<int, int>> weekly{{0, 0}, {1, 0}};
	std::vector<double> damping_grid{0.0, 0.3, 0.6, 0.9};
	/// Channel names that receive transfer-function damping.
	std::vector<std::string> damped_channels{"blh", "wind_speed", "precip"};
	int max_iterations = 50;
	double alpha_tolerance = 1e-6;
};

/// Exponentially smoothed input: x~_t = (1 - delta) x_t + delta x~_{t-1}.
std::vector<double> damp_channel(const std::vector<double> &x, double delta);

/// Fits Y - intercept - X alpha = u with an ARMA filter on u.
XArimaModel xarima_fit(const MaskedSeries &y, const std::vector<std::vector<double>> &X,
                       const std::vector<std::string> &channel_names, const XArimaOptions &options = {});
/// Fit with fixed orders (no order search, no damping search).
XArimaModel xarima_fit_orders(const MaskedSeries &y, const std::vector<std::vector<double>> &X,
                              const std::vector<std::string> &channel_names, const std::vector<ArmaOrder> &orders,
                              const std::vector<double> &damping, const XArimaOptions &options = {});

/// Exogenous part intercept + sum alpha_k X~_k.
std::vector<double> xarima_exogenous(const XArimaModel &model, const std::vector<std::vector<double>> &X);
/// One-step-ahead predictions of y from its past (missing past values replaced by the exogenous mean).
std::vector<double> xarima_one_step(const XArimaModel &model, const MaskedSeries &y,
                                    const std::vector<std::vector<double>> &X);
/// Fills gaps with the conditional mean of u given observed u under the truncated AR(infinity) form.
MaskedSeries xarima_impute(const MaskedSeries &y, const std::vector<std::vector<double>> &X, const XArimaModel &model);

nlohmann::json xarima_to_json(const XArimaModel &model);
XArimaModel xarima_from_json(const nlohmann::json &j);

enum class ImputeMethod { None, Trig, XArima, Pmm };
std::string to_string(ImputeMethod m);

struct ImputeRecord {
	std::string var;
	int station = 0;
	ImputeMethod method = ImputeMethod::None;
	std::size_t filled = 0;
	std::string note;
	nlohmann::json model;
};

struct ImputeOptions {
	int trig_K = 3;
	std::vector<int> trig_periods{24, 168};
	int pmm_draws = 5;
	std::uint64_t seed = 1;
	XArimaOptions xarima;
	/// Returns true to make the X-ARIMA stage fail for (var, station); used to exercise the fallback.
	std::function<bool(const std::string &, int)> inject_xarima_failure;
};

struct ImputeResult {
	SpatioTemporalFrame weather;
	SpatioTemporalFrame forecast;
	SpatioTemporalFrame pollution;
	std::vector<ImputeRecord> records;
};

/// Weather by trigonometric fill, then the pollution forecast and the pollution
/// series by X-ARIMA with PMM as fallback. Observed cells are copied unchanged.
ImputeResult impute_pipeline(const SpatioTemporalFrame &weather, const SpatioTemporalFrame &forecast,
                             const SpatioTemporalFrame &pollution, const ImputeOptions &options = {});

nlohmann::json impute_report_json(const ImputeResult &result);

} // namespace aqcast
