#pragma once

#include "aqcast/dataset.hpp"
#include "aqcast/nned.hpp"
#include "aqcast/timegrid.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqcast {

class ChainError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

// ---- non-negative least squares ----

struct NnlsResult {
	Eigen::VectorXd x;
	int iterations = 0;
};

/// Lawson-Hanson active set for min |Ax - b|^2 subject to x >= 0.
NnlsResult nnls(const Eigen::MatrixXd &A, const Eigen::VectorXd &b);
/// max over k of |g_k| for x_k > 0 and max(0, -g_k) for x_k = 0, with g = A'(b - Ax) negated.
double nnls_kkt_residual(const Eigen::MatrixXd &A, const Eigen::VectorXd &b, const Eigen::VectorXd &x);

// ---- drivers ----

enum class Driver {
	Nned,
	NnedTue,
	NnedWed,
	NnedThu,
	Inertia24,
	Inertia48,
	Correction24,
	Correction48,
	ShortInertia,
	ShortCorrection,
	Protocol,
	Workday,
	School,
};
inline constexpr std::size_t kDriverCount = 13;

const char *to_string(Driver d);
/// +1 or -1; negative drivers enter the regression with a change of sign.
int driver_sign(Driver d);

using DriverRow = std::array<double, kDriverCount>;

struct DriverSet {
	std::vector<TimeStamp> hours;
	std::vector<DayType> day_types;
	std::vector<DriverRow> rows;
};

struct DriverContext {
	/// log(x + 1) pollution of the station on the frame time axis.
	std::span<const double> y_log;
	/// Own-model (base) errors on the frame time axis; may be empty.
	std::span<const double> errors;
	/// Protocol activation flags on the frame time axis; may be empty.
	std::span<const double> protocol;
	const CalendarConfig *calendar = nullptr;
	TimeStamp frame_start;
	int station_code = 0;
	int morning_horizons = 4;
};

/// Drivers for horizons 1..nned_log.size() after the forecast origin (frame offset).
/// Lags not yet observed at the origin are replaced by the NNED forecast; unknown errors by zero.
DriverSet build_drivers(const DriverContext &ctx, std::size_t origin, std::span<const double> nned_log);

// ---- fixed-sign linear regression ----

struct FslrModel {
	double intercept = 0.0;
	std::array<double, kDriverCount> beta{};
	std::size_t rows = 0;
	bool pooled = false;
};

/// Non-negative coefficients on sign-adjusted drivers with a free intercept.
FslrModel fslr_fit(const std::vector<DriverRow> &drivers, std::span<const double> target_log);
double fslr_predict(const FslrModel &model, const DriverRow &row);

// ---- ARFIMA ----

struct ArfimaModel {
	double d = 0.0;
	double mu = 0.0;
	std::vector<double> ar;
	std::vector<double> ma;
	double sigma = 0.0;
	int M = 500;
	double aic = 0.0;
	bool fallback = false;
};

/// (1 - B)^d with binomial weights truncated at M lags.
std::vector<double> fracdiff(std::span<const double> x, double d, int M);
ArfimaModel arfima_fit(std::span<const double> x, int M = 500,
                       const std::vector<double> &d_grid = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45},
                       int max_p = 2, int max_q = 2);
std::vector<double> arfima_forecast(const ArfimaModel &model, std::span<const double> history, std::size_t horizons);

// ---- quantile regression and repair ----

inline constexpr int kPercentiles = 99;
using Percentiles = std::array<double, kPercentiles>;

double pinball_loss(double residual, double p);

struct QrLine {
	double intercept = 0.0;
	double slope = 0.0;
	bool converged = false;
};

/// Linear quantile regression of y on x for one probability level.
QrLine qr_fit_level(std::span<const double> x, std::span<const double> y, double p);
double qr_objective(std::span<const double> x, std::span<const double> y, double p, double a, double b);

struct QrModel {
	std::array<QrLine, kPercentiles> lines;
	std::size_t samples = 0;
	bool pooled = false;
};

QrModel qr_fit(std::span<const double> point, std::span<const double> observed);
Percentiles qr_predict(const QrModel &model, double point);

/// I-spline basis (cumulative cubic B-splines) on [0.01, 0.99] with equally spaced interior knots.
/// Column 0 is the constant; columns 1.. are monotone.
Eigen::MatrixXd ispline_basis(std::span<const double> p, int interior_knots = 12);
/// Non-negative, non-decreasing repair of a raw percentile vector.
Percentiles monotone_repair(const Percentiles &raw);

// ---- fitted chain ----

struct ChainConfig {
	int origin_hour = 9;
	int horizons = 48;
	int morning_horizons = 4;
	int arfima_M = 500;
	std::size_t qr_min_samples = 300;
	/// Minimum rows per day type relative to the number of active drivers.
	std::size_t fslr_rows_factor = 2;
	/// Contiguous day blocks for out-of-fold points in the quantile stage; 1 uses in-sample points.
	int qr_folds = 5;
};

struct StationChain {
	int station = 0;
	std::map<DayType, FslrModel> base;
	std::map<DayType, FslrModel> full;
	ArfimaModel arfima;
	std::map<DayType, QrModel> qr;
};

struct ChainModel {
	ChainConfig config;
	Date fit_first;
	Date fit_last;
	std::vector<StationChain> stations;
};

struct ChainInputs {
	const SpatioTemporalFrame *pollution = nullptr; // complete
	const SpatioTemporalFrame *weather = nullptr;   // complete
	const SpatioTemporalFrame *forecast = nullptr;  // complete
	const SpatioTemporalFrame *protocol = nullptr;  // optional, one channel of 0/1 flags
	const CalendarConfig *calendar = nullptr;
	const NnedModel *nned = nullptr;
};

struct QuantileForecast {
	int station = 0;
	Date issue;
	std::vector<TimeStamp> hours;
	std::vector<DayType> day_types;
	std::vector<double> point;     // FSLR + ARFIMA, ug/m3
	std::vector<Percentiles> q;    // repaired, ug/m3
};

/// Frame offset of the forecast origin (origin_hour local time) on `issue`.
std::size_t issue_origin(const ChainInputs &in, const ChainConfig &cfg, Date issue);

ChainModel chain_fit(const ChainInputs &in, Date first_issue, Date last_issue, const ChainConfig &cfg = {});
/// Runs the chain day by day from the model's fit start so that error histories are warm,
/// returning forecasts for issue dates in [first, last].
std::vector<QuantileForecast> chain_forecast(const ChainModel &model, const ChainInputs &in, Date first, Date last);

nlohmann::json chain_to_json(const ChainModel &model);
ChainModel chain_from_json(const nlohmann::json &j);
nlohmann::json forecasts_to_json(const std::vector<QuantileForecast> &fc);
std::vector<QuantileForecast> forecasts_from_json(const nlohmann::json &j);

} // namespace aqcast
