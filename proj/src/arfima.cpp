#include "aqcast/arma.hpp"
#include "aqcast/chain.hpp"
#include "aqcast/numeric.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <limits>

namespace aqcast {

std::vector<double> fracdiff(std::span<const double> x, double d, int M) {
	if (M < 1) {
		throw ChainError("fracdiff: M must be at least 1");
	}
	const auto w = fracdiff_weights(d, static_cast<std::size_t>(M) + 1);
	std::vector<double> out(x.size(), 0.0);
	for (std::size_t t = 0; t < x.size(); ++t) {
		double v = 0.0;
		const std::size_t top = std::min<std::size_t>(t, static_cast<std::size_t>(M));
		for (std::size_t j = 0; j <= top; ++j) {
			v += w[j] * x[t - j];
		}
		out[t] = v;
	}
	return out;
}

namespace {

/// Inverse roots of 1 - sum c_i B^i.
std::vector<std::complex<double>> inverse_roots(const std::vector<double> &c) {
	const auto n = static_cast<Eigen::Index>(c.size());
	if (n == 0) {
		return {};
	}
	Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
	for (Eigen::Index i = 0; i < n; ++i) {
		comp(0, i) = c[static_cast<std::size_t>(i)];
	}
	for (Eigen::Index i = 1; i < n; ++i) {
		comp(i, i - 1) = 1.0;
	}
	const Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
	const auto ev = es.eigenvalues();
	return {ev.data(), ev.data() + n};
}

/// AR and MA sides sharing an (approximate) root make the parameterisation redundant.
bool near_common_root(const std::vector<double> &ar, const std::vector<double> &ma, double tol = 0.1) {
	std::vector<double> neg(ma.size());
	for (std::size_t i = 0; i < ma.size(); ++i) {
		neg[i] = -ma[i];
	}
	for (const auto &a : inverse_roots(ar)) {
		for (const auto &m : inverse_roots(neg)) {
			if (std::abs(a - m) < tol) {
				return true;
			}
		}
	}
	return false;
}

/// An MA root close to +1 undoes part of the fractional difference.
bool overdifferenced(double d, const std::vector<double> &ma, double limit = 0.9) {
	if (d <= 0.0) {
		return false;
	}
	std::vector<double> neg(ma.size());
	for (std::size_t i = 0; i < ma.size(); ++i) {
		neg[i] = -ma[i];
	}
	for (const auto &m : inverse_roots(neg)) {
		if (m.real() > limit && std::abs(m.imag()) < 1.0 - limit) {
			return true;
		}
	}
	return false;
}

} // namespace

ArfimaModel arfima_fit(std::span<const double> x, int M, const std::vector<double> &d_grid, int max_p, int max_q) {
	ArfimaModel best;
	best.M = M;
	best.fallback = true;
	best.aic = std::numeric_limits<double>::infinity();
	if (x.size() < 500) {
		best.sigma = std::sqrt(variance(x.empty() ? std::span<const double>() : x));
		return best;
	}
	const double mu = mean(x);
	std::vector<double> xc(x.begin(), x.end());
	for (auto &v : xc) {
		v -= mu;
	}
	// AIC on a common row count so that candidates of different AR order compare fairly
	const double n_ref = static_cast<double>(xc.size() - static_cast<std::size_t>(max_p));
	const std::vector<std::uint8_t> obs(xc.size(), 1);
	for (double d : d_grid) {
		if (d < 0.0 || d >= 0.5) {
			throw ChainError("arfima_fit: d outside [0, 0.5)");
		}
		const auto w = fracdiff(xc, d, M);
		for (int p = 0; p <= max_p; ++p) {
			for (int q = 0; q <= max_q; ++q) {
				std::vector<double> ar;
				std::vector<double> ma;
				double sigma2 = 0.0;
				if (p + q == 0) {
					double ss = 0.0;
					for (std::size_t t = static_cast<std::size_t>(max_p); t < w.size(); ++t) {
						ss += w[t] * w[t];
					}
					sigma2 = ss / n_ref;
				} else {
					try {
						const auto fit = fit_arma_css(w, obs, {ArmaOrder{1, p, q, 0}});
						ar = fit.factors.front().ar;
						ma = fit.factors.front().ma;
						const auto r = css_residuals(w, obs, ar_polynomial(fit.factors), ma_polynomial(fit.factors),
						                             ar_support({ArmaOrder{1, p, q, 0}}));
						double ss = 0.0;
						for (std::size_t t = static_cast<std::size_t>(max_p); t < w.size(); ++t) {
							ss += r.e[t] * r.e[t];
						}
						sigma2 = ss / n_ref;
						if (near_common_root(ar, ma) || overdifferenced(d, ma)) {
							continue;
						}
					} catch (const std::exception &) {
						continue;
					}
				}
				const double k = static_cast<double>(p + q) + (d > 0.0 ? 1.0 : 0.0);
				const double aic = n_ref * std::log(std::max(sigma2, 1e-300)) + 2.0 * k;
				if (std::isfinite(aic) && aic < best.aic) {
					best.aic = aic;
					best.d = d;
					best.mu = mu;
					best.ar = std::move(ar);
					best.ma = std::move(ma);
					best.sigma = std::sqrt(sigma2);
					best.fallback = false;
				}
			}
		}
	}
	if (best.fallback) {
		best = ArfimaModel{};
		best.M = M;
		best.fallback = true;
		best.sigma = std::sqrt(variance(x));
	}
	return best;
}

namespace {

std::vector<double> arfima_pi(const ArfimaModel &model, std::size_t length) {
	ArmaFactor f;
	f.ar = model.ar;
	f.ma = model.ma;
	LagPoly a = ar_polynomial({f});
	const LagPoly m = ma_polynomial({f});
	if (model.d > 0.0) {
		a = poly_mul(a, fracdiff_weights(model.d, static_cast<std::size_t>(model.M) + 1));
	}
	return ar_infinity(a, m, length);
}

} // namespace

std::vector<double> arfima_forecast(const ArfimaModel &model, std::span<const double> history, std::size_t horizons) {
	if (model.ar.empty() && model.ma.empty() && model.d == 0.0) {
		return std::vector<double>(horizons, model.mu);
	}
	const std::size_t len = static_cast<std::size_t>(model.M) + 1;
	const auto pi = arfima_pi(model, len);
	const std::size_t keep = std::min(history.size(), len);
	std::vector<double> h(history.end() - static_cast<std::ptrdiff_t>(keep), history.end());
	for (auto &v : h) {
		v -= model.mu;
	}
	auto f = arma_forecast(h, pi, horizons);
	for (auto &v : f) {
		v += model.mu;
	}
	return f;
}

} // namespace aqcast
