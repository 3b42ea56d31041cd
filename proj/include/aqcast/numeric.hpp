#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace aqcast {

class NumericError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

double normal_cdf(double x);
double normal_pdf(double x);
/// Inverse standard normal CDF, accurate to about 1e-15 on (0, 1).
double normal_quantile(double p);

struct LeastSquaresResult {
	Eigen::VectorXd coef;
	bool ridge_used = false;
};

/// Least squares with a ridge fallback (lambda = 1e-6 * trace(X'X)) when the
/// design is rank deficient.
LeastSquaresResult least_squares(const Eigen::MatrixXd &X, const Eigen::VectorXd &y);

struct LmOptions {
	int max_iterations = 100;
	double tolerance = 1e-10;
	double initial_lambda = 1e-3;
};

struct LmResult {
	Eigen::VectorXd x;
	double sse = 0.0;
	int iterations = 0;
	bool converged = false;
};

/// Levenberg-Marquardt on a residual function with a forward-difference Jacobian.
LmResult levenberg_marquardt(const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> &residuals,
                             Eigen::VectorXd x0, const LmOptions &options = {});

double mean(std::span<const double> xs);
double variance(std::span<const double> xs);

} // namespace aqcast
