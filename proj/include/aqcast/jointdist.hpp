#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqcast {

class JointError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Monotone cubic (Fritsch-Carlson) f through (u_k, log q_k) with u_k = normal quantile of k/100,
/// linear beyond the end knots. g is the exact inverse of f.
class MarginalTransform {
public:
	MarginalTransform() = default;

	double f(double u) const;
	double g(double z) const;
	double cdf(double y) const;
	double inv_cdf(double p) const;
	double mode() const { return std::exp(f(0.0)); }

	const std::vector<double> &u_knots() const { return u_; }
	const std::vector<double> &z_knots() const { return z_; }

	friend MarginalTransform fit_marginal(std::span<const double> q);

private:
	std::vector<double> u_;
	std::vector<double> z_;
	std::vector<double> dz_; // derivative of f at knots
	double lo_slope_ = 1.0;
	double hi_slope_ = 1.0;
};

/// 99 percentiles, strictly positive. Ties are separated by 1e-9 * max(q).
MarginalTransform fit_marginal(std::span<const double> q);
double standardize_residual(const MarginalTransform &m, double y);

struct CorrModel {
	int stations = 0;
	int horizons = 0;
	double shrinkage = 0.0;
	std::vector<Eigen::MatrixXd> same;     // C_{h,h}
	std::vector<Eigen::MatrixXd> cross;    // C_{h-1,h}; entry 0 unused
	std::vector<Eigen::MatrixXd> chol;     // L_h
	std::vector<Eigen::MatrixXd> cond;     // C'_h; entry 0 unused
	std::vector<Eigen::MatrixXd> cond_chol; // L'_h
	std::vector<Eigen::MatrixXd> gain;     // C_{h-1,h}' C_{h-1,h-1}^{-1}
};

/// Residual history: rows are forecast dates, column h * S + s.
CorrModel estimate_corr(const Eigen::MatrixXd &residuals, int stations, int horizons,
                        const std::vector<double> &shrink_grid = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5});
/// Builds the stored factors from given blocks at a fixed shrinkage (no grid search).
CorrModel corr_from_blocks(std::vector<Eigen::MatrixXd> same, std::vector<Eigen::MatrixXd> cross);
/// Identity correlations, no cross-horizon dependence.
CorrModel corr_identity(int stations, int horizons);

struct ConditionalParams {
	Eigen::VectorXd mean;
	Eigen::MatrixXd cov;
	Eigen::MatrixXd chol;
};

ConditionalParams conditional_params(const CorrModel &corr, const Eigen::VectorXd &eps_prev, int h);

/// [N][S][H] row-major.
struct SamplePaths {
	int n = 0;
	int stations = 0;
	int horizons = 0;
	std::uint64_t seed = 0;
	std::vector<double> values;

	double at(int path, int s, int h) const {
		return values[(static_cast<std::size_t>(path) * stations + s) * horizons + h];
	}
	double &at(int path, int s, int h) { return values[(static_cast<std::size_t>(path) * stations + s) * horizons + h]; }
};

/// Standard-normal residual paths under the recursive scheme; path n uses its own stream.
SamplePaths simulate_eps(const CorrModel &corr, int n, std::uint64_t seed);
/// transforms indexed [s * H + h].
SamplePaths simulate_paths(const std::vector<MarginalTransform> &transforms, const CorrModel &corr, int n,
                           std::uint64_t seed);

struct LevelRule {
	std::string name;
	double threshold = 180.0;
	int zone_count = 2;
	int zone_hours = 2;
	/// 0 disables the network rule.
	int network_count = 3;
	int network_hours = 3;
	std::map<int, int> zone_count_override;

	int count_for_zone(int zone) const;
};

struct ProtocolConfig {
	/// station code -> zone
	std::map<int, int> zone_of;
	std::vector<LevelRule> levels;
	/// Strict: the same stations exceed in every hour of one window. Relaxed: the count holds hour by hour.
	bool strict = true;

	static ProtocolConfig defaults(std::map<int, int> zone_of);
	void validate() const;
};

struct LevelProbability {
	double city = 0.0;
	std::map<int, double> zones;
	std::map<int, std::vector<double>> stations; // per hour exceedance
};

struct EventProbabilities {
	int n = 0;
	std::vector<std::string> order;
	std::map<std::string, LevelProbability> levels;
};

struct LevelOutcome {
	bool city = false;
	std::map<int, bool> zones;
};

/// Rule evaluation on one path: exceed is [S][H] with stations ordered as `codes`.
LevelOutcome evaluate_level(const LevelRule &rule, const std::vector<int> &codes, const std::map<int, int> &zone_of,
                            const std::vector<std::uint8_t> &exceed, int horizons, bool strict);

/// `codes` gives the station code of each path row.
EventProbabilities protocol_probability(const SamplePaths &paths, const std::vector<int> &codes,
                                        const ProtocolConfig &cfg);

nlohmann::json event_probabilities_to_json(const EventProbabilities &ev);

/// Independent discrete outcome per (station, hour): list of (value, probability).
struct DiscreteScenario {
	std::vector<int> codes;
	int horizons = 0;
	std::vector<std::vector<std::pair<double, double>>> cells; // [s * H + h]
};

/// Exact city-level firing probability per level by enumeration (at most 1e6 combinations).
std::map<std::string, double> event_oracle_bruteforce(const DiscreteScenario &sc, const ProtocolConfig &cfg);
/// Monte Carlo paths drawn from a discrete scenario.
SamplePaths sample_scenario(const DiscreteScenario &sc, int n, std::uint64_t seed);

} // namespace aqcast
