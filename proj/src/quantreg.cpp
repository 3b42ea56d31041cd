#include "aqcast/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aqcast {

double pinball_loss(double residual, double p) { return residual >= 0.0 ? p * residual : (p - 1.0) * residual; }

double qr_objective(std::span<const double> x, std::span<const double> y, double p, double a, double b) {
	double s = 0.0;
	for (std::size_t i = 0; i < x.size(); ++i) {
		s += pinball_loss(y[i] - a - b * x[i], p);
	}
	return s;
}

namespace {

/// Exact minimiser of sum rho_p(r_i - a) over a.
double best_intercept(std::vector<double> r, double p) {
	const auto n = r.size();
	auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
	k = std::clamp<std::size_t>(k, 1, n) - 1;
	std::nth_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k), r.end());
	return r[k];
}

/// Exact minimiser of sum rho_p(z_i - b x_i) over b by a walk over the sorted breakpoints.
double best_slope(std::span<const double> x, std::span<const double> z, double p, double current) {
	std::vector<std::pair<double, double>> bp;
	double slope = 0.0;
	for (std::size_t i = 0; i < x.size(); ++i) {
		if (x[i] == 0.0) {
			continue;
		}
		bp.emplace_back(z[i] / x[i], std::abs(x[i]));
		slope += x[i] > 0.0 ? -p * x[i] : (1.0 - p) * x[i];
	}
	if (bp.empty()) {
		return current;
	}
	std::sort(bp.begin(), bp.end());
	for (const auto &[b, w] : bp) {
		slope += w;
		if (slope >= 0.0) {
			return b;
		}
	}
	return bp.back().first;
}

} // namespace

QrLine qr_fit_level(std::span<const double> x, std::span<const double> y, double p) {
	if (x.size() != y.size() || x.empty()) {
		throw ChainError("qr_fit_level: bad sample");
	}
	if (!(p > 0.0 && p < 1.0)) {
		throw ChainError("qr_fit_level: level outside (0, 1)");
	}
	const auto n = static_cast<Eigen::Index>(x.size());
	Eigen::MatrixXd X(n, 2);
	Eigen::VectorXd Y(n);
	for (Eigen::Index i = 0; i < n; ++i) {
		X(i, 0) = 1.0;
		X(i, 1) = x[static_cast<std::size_t>(i)];
		Y[i] = y[static_cast<std::size_t>(i)];
	}
	const double scale = std::max(1e-12, (Y.array() - Y.mean()).abs().mean());
	const double eps = 1e-6 * scale;

	QrLine line;
	Eigen::Vector2d beta = X.colPivHouseholderQr().solve(Y);
	double obj = qr_objective(x, y, p, beta[0], beta[1]);
	for (int it = 0; it < 200; ++it) {
		const Eigen::VectorXd r = Y - X * beta;
		Eigen::VectorXd w(n);
		for (Eigen::Index i = 0; i < n; ++i) {
			w[i] = (r[i] >= 0.0 ? p : 1.0 - p) / std::max(std::abs(r[i]), eps);
		}
		const Eigen::MatrixXd XtW = X.transpose() * w.asDiagonal();
		const Eigen::Vector2d next = (XtW * X).ldlt().solve(XtW * Y);
		const double next_obj = qr_objective(x, y, p, next[0], next[1]);
		const bool done = std::abs(obj - next_obj) <= 1e-7 * std::max(1.0, obj);
		if (next_obj <= obj) {
			beta = next;
			obj = next_obj;
		}
		if (done) {
			line.converged = true;
			break;
		}
	}
	// coordinate polish to an exact vertex
	double a = beta[0];
	double b = beta[1];
	std::vector<double> r(x.size());
	std::vector<double> z(x.size());
	for (int it = 0; it < 100; ++it) {
		for (std::size_t i = 0; i < x.size(); ++i) {
			r[i] = y[i] - b * x[i];
		}
		const double a_new = best_intercept(r, p);
		for (std::size_t i = 0; i < x.size(); ++i) {
			z[i] = y[i] - a_new;
		}
		const double b_new = best_slope(x, z, p, b);
		const double next_obj = qr_objective(x, y, p, a_new, b_new);
		if (next_obj >= obj - 1e-12 * std::max(1.0, obj)) {
			if (next_obj <= obj) {
				a = a_new;
				b = b_new;
			}
			break;
		}
		a = a_new;
		b = b_new;
		obj = next_obj;
	}
	line.intercept = a;
	line.slope = b;
	return line;
}

QrModel qr_fit(std::span<const double> point, std::span<const double> observed) {
	if (point.size() != observed.size()) {
		throw ChainError("qr_fit: size mismatch");
	}
	QrModel m;
	m.samples = point.size();
	for (int k = 0; k < kPercentiles; ++k) {
		m.lines[static_cast<std::size_t>(k)] = qr_fit_level(point, observed, (k + 1) / 100.0);
	}
	return m;
}

Percentiles qr_predict(const QrModel &model, double point) {
	Percentiles q{};
	for (std::size_t k = 0; k < q.size(); ++k) {
		q[k] = model.lines[k].intercept + model.lines[k].slope * point;
	}
	return q;
}

namespace {

/// Cox-de Boor values of all B-splines of the given order at x.
std::vector<double> bspline_values(const std::vector<double> &knots, int order, double x) {
	const std::size_t n = knots.size() - static_cast<std::size_t>(order);
	std::vector<double> B(knots.size() - 1, 0.0);
	const double last = knots.back();
	for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
		const bool in = (x >= knots[i] && x < knots[i + 1]) ||
		                (x == last && knots[i] < knots[i + 1] && knots[i + 1] == last);
		B[i] = in ? 1.0 : 0.0;
	}
	for (int k = 2; k <= order; ++k) {
		for (std::size_t i = 0; i + static_cast<std::size_t>(k) < knots.size(); ++i) {
			double v = 0.0;
			const double d1 = knots[i + static_cast<std::size_t>(k) - 1] - knots[i];
			const double d2 = knots[i + static_cast<std::size_t>(k)] - knots[i + 1];
			if (d1 > 0.0) {
				v += (x - knots[i]) / d1 * B[i];
			}
			if (d2 > 0.0) {
				v += (knots[i + static_cast<std::size_t>(k)] - x) / d2 * B[i + 1];
			}
			B[i] = v;
		}
	}
	B.resize(n);
	return B;
}

} // namespace

Eigen::MatrixXd ispline_basis(std::span<const double> p, int interior_knots) {
	constexpr double lo = 0.01;
	constexpr double hi = 0.99;
	// integrated cubic M-splines are quartic splines: order 5
	constexpr int order = 5;
	std::vector<double> knots(order, lo);
	for (int i = 1; i <= interior_knots; ++i) {
		knots.push_back(lo + (hi - lo) * i / (interior_knots + 1));
	}
	knots.insert(knots.end(), order, hi);
	const std::size_t nb = knots.size() - order;
	Eigen::MatrixXd out(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(nb));
	for (std::size_t r = 0; r < p.size(); ++r) {
		const double x = std::clamp(p[r], lo, hi);
		const auto B = bspline_values(knots, order, x);
		double tail = 0.0;
		for (std::size_t j = nb; j-- > 0;) {
			tail += B[j];
			out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = tail;
		}
		out(static_cast<Eigen::Index>(r), 0) = 1.0;
	}
	return out;
}

Percentiles monotone_repair(const Percentiles &raw) {
	bool ok = raw[0] >= 0.0;
	for (std::size_t k = 1; ok && k < raw.size(); ++k) {
		ok = raw[k] >= raw[k - 1];
	}
	if (ok) {
		return raw;
	}
	static const Eigen::MatrixXd basis = [] {
		std::vector<double> p(kPercentiles);
		for (int k = 0; k < kPercentiles; ++k) {
			p[static_cast<std::size_t>(k)] = (k + 1) / 100.0;
		}
		return ispline_basis(p);
	}();
	Eigen::VectorXd b(kPercentiles);
	for (int k = 0; k < kPercentiles; ++k) {
		b[k] = raw[static_cast<std::size_t>(k)];
	}
	const auto sol = nnls(basis, b);
	const Eigen::VectorXd fit = basis * sol.x;
	const double lo = std::max(0.0, *std::min_element(raw.begin(), raw.end()));
	const double hi = std::max(lo, *std::max_element(raw.begin(), raw.end()));
	Percentiles out{};
	for (int k = 0; k < kPercentiles; ++k) {
		out[static_cast<std::size_t>(k)] = std::clamp(fit[k], lo, hi);
	}
	for (std::size_t k = 1; k < out.size(); ++k) {
		out[k] = std::max(out[k], out[k - 1]);
	}
	return out;
}

} // namespace aqcast
