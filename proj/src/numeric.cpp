#include "aqcast/numeric.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace aqcast {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_quantile(double p) {
	if (!(p > 0.0 && p < 1.0)) {
		throw NumericError("normal_quantile: probability must lie in (0, 1)");
	}
	// Acklam's rational approximation followed by one Halley refinement step.
	static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
	                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
	static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
	                               6.680131188771972e+01,  -1.328068155288572e+01};
	static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
	                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
	static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
	                               3.754408661907416e+00};
	constexpr double p_low = 0.02425;
	double x = 0.0;
	if (p < p_low) {
		const double q = std::sqrt(-2.0 * std::log(p));
		x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
		    ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
	} else if (p <= 1.0 - p_low) {
		const double q = p - 0.5;
		const double r = q * q;
		x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
		    (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
	} else {
		const double q = std::sqrt(-2.0 * std::log1p(-p));
		x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
		    ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
	}
	for (int i = 0; i < 2; ++i) {
		const double e = normal_cdf(x) - p;
		const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
		x -= u / (1.0 + 0.5 * x * u);
	}
	return x;
}

LeastSquaresResult least_squares(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) {
	if (X.rows() != y.size()) {
		throw NumericError("least_squares: row count mismatch");
	}
	LeastSquaresResult out;
	if (X.cols() == 0) {
		out.coef = Eigen::VectorXd(0);
		return out;
	}
	Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
	qr.setThreshold(1e-10);
	if (qr.rank() == X.cols()) {
		out.coef = qr.solve(y);
		return out;
	}
	const Eigen::MatrixXd gram = X.transpose() * X;
	double lambda = 1e-6 * gram.trace();
	if (lambda <= 0.0) {
		lambda = 1e-12;
	}
	const Eigen::MatrixXd reg = gram + lambda * Eigen::MatrixXd::Identity(X.cols(), X.cols());
	out.coef = reg.ldlt().solve(X.transpose() * y);
	out.ridge_used = true;
	return out;
}

LmResult levenberg_marquardt(const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> &residuals,
                             Eigen::VectorXd x0, const LmOptions &options) {
	LmResult out;
	out.x = std::move(x0);
	Eigen::VectorXd r = residuals(out.x);
	out.sse = r.squaredNorm();
	const auto k = out.x.size();
	if (k == 0) {
		out.converged = true;
		return out;
	}
	double lambda = options.initial_lambda;
	Eigen::MatrixXd J(r.size(), k);
	for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
		for (Eigen::Index j = 0; j < k; ++j) {
			Eigen::VectorXd xp = out.x;
			const double h = 1e-7 * std::max(1.0, std::abs(out.x[j]));
			xp[j] += h;
			J.col(j) = (residuals(xp) - r) / h;
		}
		const Eigen::MatrixXd JtJ = J.transpose() * J;
		const Eigen::VectorXd g = J.transpose() * r;
		bool improved = false;
		for (int attempt = 0; attempt < 12; ++attempt) {
			Eigen::MatrixXd A = JtJ;
			A.diagonal().array() += lambda * (JtJ.diagonal().array() + 1e-12);
			const Eigen::VectorXd step = A.ldlt().solve(-g);
			const Eigen::VectorXd xn = out.x + step;
			const Eigen::VectorXd rn = residuals(xn);
			const double sse = rn.squaredNorm();
			if (std::isfinite(sse) && sse < out.sse) {
				const double rel = (out.sse - sse) / std::max(out.sse, std::numeric_limits<double>::min());
				out.x = xn;
				r = rn;
				out.sse = sse;
				lambda = std::max(lambda * 0.3, 1e-12);
				improved = true;
				if (rel < options.tolerance || step.norm() < options.tolerance * (1.0 + out.x.norm())) {
					out.converged = true;
				}
				break;
			}
			lambda *= 10.0;
		}
		if (!improved) {
			out.converged = true; // no descent direction left at this precision
			break;
		}
		if (out.converged) {
			break;
		}
	}
	return out;
}

double mean(std::span<const double> xs) {
	if (xs.empty()) {
		throw NumericError("mean of empty sequence");
	}
	return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
	const double m = mean(xs);
	double acc = 0.0;
	for (double x : xs) {
		acc += (x - m) * (x - m);
	}
	return acc / static_cast<double>(xs.size());
}

} // namespace aqcast
