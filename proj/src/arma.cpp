#include "aqcast/arma.hpp"

#include "aqcast/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace aqcast {

LagPoly poly_mul(const LagPoly &a, const LagPoly &b) {
	if (a.empty() || b.empty()) {
		return {};
	}
	LagPoly out(a.size() + b.size() - 1, 0.0);
	for (std::size_t i = 0; i < a.size(); ++i) {
		if (a[i] == 0.0) {
			continue;
		}
		for (std::size_t j = 0; j < b.size(); ++j) {
			out[i + j] += a[i] * b[j];
		}
	}
	return out;
}

namespace {

LagPoly factor_poly(const std::vector<double> &c, int period, double sign) {
	LagPoly p(c.size() * static_cast<std::size_t>(period) + 1, 0.0);
	p[0] = 1.0;
	for (std::size_t i = 0; i < c.size(); ++i) {
		p[(i + 1) * static_cast<std::size_t>(period)] = sign * c[i];
	}
	return p;
}

} // namespace

LagPoly ar_polynomial(const std::vector<ArmaFactor> &factors) {
	LagPoly out{1.0};
	for (const auto &f : factors) {
		out = poly_mul(out, factor_poly(f.ar, f.period, -1.0));
		for (int k = 0; k < f.diff; ++k) {
			out = poly_mul(out, factor_poly({1.0}, f.period, -1.0));
		}
	}
	return out;
}

LagPoly ma_polynomial(const std::vector<ArmaFactor> &factors) {
	LagPoly out{1.0};
	for (const auto &f : factors) {
		out = poly_mul(out, factor_poly(f.ma, f.period, 1.0));
	}
	return out;
}

std::vector<int> ar_support(const std::vector<ArmaOrder> &orders) {
	LagPoly s{1.0};
	for (const auto &o : orders) {
		s = poly_mul(s, factor_poly(std::vector<double>(static_cast<std::size_t>(o.p), 1.0), o.period, 1.0));
		for (int k = 0; k < o.d; ++k) {
			s = poly_mul(s, factor_poly({1.0}, o.period, 1.0));
		}
	}
	std::vector<int> out;
	for (std::size_t j = 1; j < s.size(); ++j) {
		if (s[j] != 0.0) {
			out.push_back(static_cast<int>(j));
		}
	}
	return out;
}

std::vector<double> ar_infinity(const LagPoly &a, const LagPoly &m, std::size_t length) {
	std::vector<double> pi(length, 0.0);
	for (std::size_t j = 0; j < length; ++j) {
		double v = j < a.size() ? a[j] : 0.0;
		const std::size_t top = std::min(j, m.empty() ? std::size_t{0} : m.size() - 1);
		for (std::size_t i = 1; i <= top; ++i) {
			v -= m[i] * pi[j - i];
		}
		pi[j] = v;
	}
	return pi;
}

std::vector<double> ma_infinity(const LagPoly &a, const LagPoly &m, std::size_t length) {
	std::vector<double> psi(length, 0.0);
	for (std::size_t j = 0; j < length; ++j) {
		double v = j < m.size() ? m[j] : 0.0;
		const std::size_t top = std::min(j, a.empty() ? std::size_t{0} : a.size() - 1);
		for (std::size_t i = 1; i <= top; ++i) {
			v -= a[i] * psi[j - i];
		}
		psi[j] = v;
	}
	return psi;
}

namespace {

double max_inverse_root(const std::vector<double> &c) {
	std::size_t p = c.size();
	while (p > 0 && c[p - 1] == 0.0) {
		--p;
	}
	if (p == 0) {
		return 0.0;
	}
	Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
	for (std::size_t i = 0; i < p; ++i) {
		comp(0, static_cast<Eigen::Index>(i)) = c[i];
	}
	for (std::size_t i = 1; i < p; ++i) {
		comp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
	}
	Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
	return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace

bool ar_stable(const std::vector<double> &c) { return max_inverse_root(c) < 1.0; }

bool project_stable(std::vector<double> &c, double limit) {
	const double r = max_inverse_root(c);
	if (r < 1.0) {
		return false;
	}
	const double scale = limit / r;
	double f = 1.0;
	for (double &v : c) {
		f *= scale;
		v *= f;
	}
	return true;
}

CssResiduals css_residuals(std::span<const double> w, std::span<const std::uint8_t> observed, const LagPoly &a,
                           const LagPoly &m, const std::vector<int> &support) {
	const std::size_t T = w.size();
	CssResiduals out;
	out.e.assign(T, 0.0);
	out.valid.assign(T, 0);
	std::vector<std::pair<int, double>> ar_terms;
	for (std::size_t j = 1; j < a.size(); ++j) {
		if (a[j] != 0.0) {
			ar_terms.emplace_back(static_cast<int>(j), a[j]);
		}
	}
	std::vector<std::pair<int, double>> ma_terms;
	for (std::size_t j = 1; j < m.size(); ++j) {
		if (m[j] != 0.0) {
			ma_terms.emplace_back(static_cast<int>(j), m[j]);
		}
	}
	const int max_lag = support.empty() ? 0 : support.back();
	for (std::size_t t = 0; t < T; ++t) {
		if (!observed[t] || static_cast<int>(t) < max_lag) {
			continue;
		}
		bool ok = true;
		for (int lag : support) {
			if (!observed[t - static_cast<std::size_t>(lag)]) {
				ok = false;
				break;
			}
		}
		if (!ok) {
			continue;
		}
		double v = w[t];
		for (const auto &[lag, c] : ar_terms) {
			v += c * w[t - static_cast<std::size_t>(lag)];
		}
		for (const auto &[lag, c] : ma_terms) {
			if (static_cast<std::size_t>(lag) <= t) {
				v -= c * out.e[t - static_cast<std::size_t>(lag)];
			}
		}
		out.e[t] = v;
		out.valid[t] = 1;
		out.sse += v * v;
		++out.n;
	}
	return out;
}

std::size_t parameter_count(const std::vector<ArmaOrder> &orders) {
	std::size_t k = 0;
	for (const auto &o : orders) {
		k += static_cast<std::size_t>(o.p + o.q);
	}
	return k;
}

namespace {

std::vector<ArmaFactor> unpack(const Eigen::VectorXd &x, const std::vector<ArmaOrder> &orders) {
	std::vector<ArmaFactor> out;
	Eigen::Index k = 0;
	for (const auto &o : orders) {
		ArmaFactor f;
		f.period = o.period;
		f.diff = o.d;
		for (int i = 0; i < o.p; ++i) {
			f.ar.push_back(x[k++]);
		}
		for (int i = 0; i < o.q; ++i) {
			f.ma.push_back(x[k++]);
		}
		out.push_back(std::move(f));
	}
	return out;
}

Eigen::VectorXd pack(const std::vector<ArmaFactor> &factors, const std::vector<ArmaOrder> &orders) {
	Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(orders)));
	Eigen::Index k = 0;
	for (std::size_t i = 0; i < orders.size(); ++i) {
		const auto &o = orders[i];
		for (int j = 0; j < o.p; ++j, ++k) {
			if (i < factors.size() && static_cast<std::size_t>(j) < factors[i].ar.size()) {
				x[k] = factors[i].ar[static_cast<std::size_t>(j)];
			}
		}
		for (int j = 0; j < o.q; ++j, ++k) {
			if (i < factors.size() && static_cast<std::size_t>(j) < factors[i].ma.size()) {
				x[k] = factors[i].ma[static_cast<std::size_t>(j)];
			}
		}
	}
	return x;
}

} // namespace

ArmaFit fit_arma_css(std::span<const double> w, std::span<const std::uint8_t> observed,
                     const std::vector<ArmaOrder> &orders, const std::vector<ArmaFactor> *start) {
	if (w.size() != observed.size()) {
		throw NumericError("fit_arma_css: mask length mismatch");
	}
	const auto support = ar_support(orders);
	Eigen::VectorXd x0 = start ? pack(*start, orders) : pack({}, orders);

	const auto template_rows = css_residuals(w, observed, {1.0}, {1.0}, support);
	if (template_rows.n == 0) {
		throw NumericError("fit_arma_css: no usable rows");
	}
	const auto n_rows = static_cast<Eigen::Index>(template_rows.n);
	auto residuals = [&](const Eigen::VectorXd &x) {
		const auto f = unpack(x, orders);
		const auto r = css_residuals(w, observed, ar_polynomial(f), ma_polynomial(f), support);
		Eigen::VectorXd out(n_rows);
		Eigen::Index k = 0;
		for (std::size_t t = 0; t < r.e.size(); ++t) {
			if (r.valid[t]) {
				out[k++] = r.e[t];
			}
		}
		return out;
	};

	ArmaFit fit;
	LmOptions opt;
	opt.max_iterations = 60;
	opt.tolerance = 1e-9;
	const auto lm = levenberg_marquardt(residuals, x0, opt);
	fit.factors = unpack(lm.x, orders);
	fit.converged = lm.converged;
	for (auto &f : fit.factors) {
		fit.projected |= project_stable(f.ar);
		std::vector<double> neg(f.ma.size());
		std::transform(f.ma.begin(), f.ma.end(), neg.begin(), [](double v) { return -v; });
		if (project_stable(neg)) {
			fit.projected = true;
			std::transform(neg.begin(), neg.end(), f.ma.begin(), [](double v) { return -v; });
		}
	}
	const auto r = css_residuals(w, observed, ar_polynomial(fit.factors), ma_polynomial(fit.factors), support);
	fit.sse = r.sse;
	fit.n = r.n;
	fit.sigma2 = r.sse / static_cast<double>(r.n);
	const double k = static_cast<double>(parameter_count(orders));
	fit.aic = static_cast<double>(r.n) * std::log(std::max(fit.sigma2, 1e-300)) + 2.0 * k;
	return fit;
}

std::vector<double> arma_forecast(std::span<const double> history, const std::vector<double> &pi,
                                  std::size_t horizon) {
	std::vector<double> buf(history.begin(), history.end());
	buf.reserve(history.size() + horizon);
	for (std::size_t h = 0; h < horizon; ++h) {
		const std::size_t t = buf.size();
		double v = 0.0;
		for (std::size_t j = 1; j < pi.size() && j <= t; ++j) {
			v -= pi[j] * buf[t - j];
		}
		buf.push_back(v);
	}
	return {buf.end() - static_cast<std::ptrdiff_t>(horizon), buf.end()};
}

std::vector<double> fracdiff_weights(double d, std::size_t length) {
	std::vector<double> w(length, 0.0);
	if (length == 0) {
		return w;
	}
	w[0] = 1.0;
	for (std::size_t j = 1; j < length; ++j) {
		w[j] = w[j - 1] * (static_cast<double>(j) - 1.0 - d) / static_cast<double>(j);
	}
	return w;
}

std::vector<double> fracdiff(std::span<const double> x, double d) {
	const auto w = fracdiff_weights(d, x.size());
	std::vector<double> out(x.size(), 0.0);
	for (std::size_t t = 0; t < x.size(); ++t) {
		double v = 0.0;
		for (std::size_t j = 0; j <= t; ++j) {
			v += w[j] * x[t - j];
		}
		out[t] = v;
	}
	return out;
}

} // namespace aqcast
