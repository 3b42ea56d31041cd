#include "aqcast/impute.hpp"

#include "aqcast/numeric.hpp"
#include "aqcast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace aqcast {

double TrigModel::evaluate(std::size_t t) const {
	double v = mean;
	for (const auto &h : harmonics) {
		v += h.amplitude *
		     std::cos(2.0 * std::numbers::pi * h.k * static_cast<double>(t) / h.period - h.phase);
	}
	return v;
}

namespace {

struct Frequency {
	int period;
	int k;
};

std::vector<Frequency> distinct_frequencies(const std::vector<int> &periods, int K) {
	std::vector<Frequency> out;
	for (int p : periods) {
		if (p <= 0) {
			throw ImputeError("trig: periods must be positive");
		}
		for (int k = 1; k <= K; ++k) {
			if (2 * k >= p) {
				break;
			}
			const bool dup = std::any_of(out.begin(), out.end(),
			                             [&](const Frequency &f) { return f.k * p == k * f.period; });
			if (!dup) {
				out.push_back({p, k});
			}
		}
	}
	return out;
}

} // namespace

TrigModel trig_fit(const MaskedSeries &series, const std::vector<int> &periods, int K) {
	if (K < 0) {
		throw ImputeError("trig: K must be non-negative");
	}
	const auto freqs = distinct_frequencies(periods, K);
	const std::size_t cols = 1 + 2 * freqs.size();
	const std::size_t n = series.observed_count();
	if (n < std::max<std::size_t>(cols, 2 * static_cast<std::size_t>(K) + 1)) {
		throw ImputeError("trig: too few observed points for the requested harmonics");
	}
	Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
	Eigen::VectorXd y(static_cast<Eigen::Index>(n));
	Eigen::Index r = 0;
	for (std::size_t t = 0; t < series.size(); ++t) {
		if (!series.is_observed(t)) {
			continue;
		}
		X(r, 0) = 1.0;
		for (std::size_t f = 0; f < freqs.size(); ++f) {
			const double w = 2.0 * std::numbers::pi * freqs[f].k * static_cast<double>(t) / freqs[f].period;
			X(r, static_cast<Eigen::Index>(1 + 2 * f)) = std::cos(w);
			X(r, static_cast<Eigen::Index>(2 + 2 * f)) = std::sin(w);
		}
		y[r++] = series.values[t];
	}
	const auto ls = least_squares(X, y);
	TrigModel model;
	model.mean = ls.coef[0];
	for (std::size_t f = 0; f < freqs.size(); ++f) {
		const double a = ls.coef[static_cast<Eigen::Index>(1 + 2 * f)];
		const double b = ls.coef[static_cast<Eigen::Index>(2 + 2 * f)];
		model.harmonics.push_back({freqs[f].period, freqs[f].k, std::hypot(a, b), std::atan2(b, a)});
	}
	return model;
}

MaskedSeries trig_impute(const MaskedSeries &series, const std::vector<int> &periods, int K) {
	if (series.complete()) {
		return series;
	}
	const auto model = trig_fit(series, periods, K);
	MaskedSeries out = series;
	for (std::size_t t = 0; t < out.size(); ++t) {
		if (!out.is_observed(t)) {
			out.values[t] = model.evaluate(t);
			out.observed[t] = 1;
		}
	}
	return out;
}

MaskedSeries pmm_impute(const MaskedSeries &target, const std::vector<std::vector<double>> &predictors, int n_draws,
                        std::uint64_t seed) {
	const std::size_t T = target.size();
	for (const auto &p : predictors) {
		if (p.size() != T) {
			throw ImputeError("pmm: predictor length mismatch");
		}
		if (std::any_of(p.begin(), p.end(), [](double v) { return !std::isfinite(v); })) {
			throw ImputeError("pmm: predictors must be fully observed");
		}
	}
	if (n_draws < 1) {
		throw ImputeError("pmm: n_draws must be positive");
	}
	if (target.complete()) {
		return target;
	}
	std::vector<std::size_t> obs;
	std::vector<std::size_t> miss;
	for (std::size_t t = 0; t < T; ++t) {
		(target.is_observed(t) ? obs : miss).push_back(t);
	}
	if (obs.empty()) {
		throw ImputeError("pmm: no observed rows");
	}
	const auto cols = static_cast<Eigen::Index>(predictors.size() + 1);
	Eigen::MatrixXd full(static_cast<Eigen::Index>(T), cols);
	for (std::size_t t = 0; t < T; ++t) {
		const auto r = static_cast<Eigen::Index>(t);
		full(r, 0) = 1.0;
		for (std::size_t k = 0; k < predictors.size(); ++k) {
			full(r, static_cast<Eigen::Index>(k + 1)) = predictors[k][t];
		}
	}

	std::mt19937_64 engine(stream_seed(seed, 0x504d4dULL));
	std::uniform_int_distribution<std::size_t> pick(0, obs.size() - 1);
	std::vector<std::vector<double>> draws(miss.size());
	for (int d = 0; d < n_draws; ++d) {
		Eigen::MatrixXd X(static_cast<Eigen::Index>(obs.size()), cols);
		Eigen::VectorXd y(static_cast<Eigen::Index>(obs.size()));
		for (std::size_t i = 0; i < obs.size(); ++i) {
			const std::size_t t = obs[pick(engine)];
			X.row(static_cast<Eigen::Index>(i)) = full.row(static_cast<Eigen::Index>(t));
			y[static_cast<Eigen::Index>(i)] = target.values[t];
		}
		const Eigen::VectorXd beta = least_squares(X, y).coef;
		const Eigen::VectorXd pred = full * beta;
		std::vector<std::pair<double, std::size_t>> donors;
		donors.reserve(obs.size());
		for (std::size_t t : obs) {
			donors.emplace_back(pred[static_cast<Eigen::Index>(t)], t);
		}
		std::sort(donors.begin(), donors.end());
		for (std::size_t i = 0; i < miss.size(); ++i) {
			const double p = pred[static_cast<Eigen::Index>(miss[i])];
			auto it = std::lower_bound(donors.begin(), donors.end(), std::make_pair(p, std::size_t{0}));
			std::size_t best;
			if (it == donors.end()) {
				best = donors.back().second;
			} else if (it == donors.begin()) {
				best = it->second;
			} else {
				const auto prev = std::prev(it);
				best = (p - prev->first <= it->first - p) ? prev->second : it->second;
			}
			draws[i].push_back(target.values[best]);
		}
	}
	MaskedSeries out = target;
	for (std::size_t i = 0; i < miss.size(); ++i) {
		auto &v = draws[i];
		const std::size_t mid = (v.size() - 1) / 2;
		std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
		out.values[miss[i]] = v[mid];
		out.observed[miss[i]] = 1;
	}
	return out;
}

SpatioTemporalFrame pmm_impute(const SpatioTemporalFrame &frame, const std::string &target_var,
                               const std::vector<std::string> &predictor_vars, int n_draws, std::uint64_t seed) {
	SpatioTemporalFrame out = frame;
	const std::size_t c = frame.var_index(target_var);
	for (std::size_t s = 0; s < frame.stations(); ++s) {
		std::vector<std::vector<double>> preds;
		for (const auto &name : predictor_vars) {
			preds.push_back(frame.series(frame.var_index(name), s).values);
		}
		const auto target = frame.series(c, s);
		const auto filled = pmm_impute(target, preds, n_draws, stream_seed(seed, s));
		for (std::size_t t = 0; t < target.size(); ++t) {
			if (!target.is_observed(t)) {
				out.set(c, t, s, filled.values[t]);
			}
		}
	}
	return out;
}

std::vector<double> damp_channel(const std::vector<double> &x, double delta) {
	std::vector<double> out(x.size());
	double prev = x.empty() ? 0.0 : x[0];
	for (std::size_t t = 0; t < x.size(); ++t) {
		prev = (1.0 - delta) * x[t] + delta * prev;
		out[t] = prev;
	}
	return out;
}

namespace {

void check_inputs(const MaskedSeries &y, const std::vector<std::vector<double>> &X,
                  const std::vector<std::string> &names) {
	if (X.size() != names.size()) {
		throw ImputeError("xarima: channel name count mismatch");
	}
	for (const auto &x : X) {
		if (x.size() != y.size()) {
			throw ImputeError("xarima: channel length mismatch");
		}
		if (std::any_of(x.begin(), x.end(), [](double v) { return !std::isfinite(v); })) {
			throw ImputeError("xarima: exogenous channels must be fully observed");
		}
	}
}

std::vector<std::vector<double>> damped_inputs(const std::vector<std::vector<double>> &X,
                                               const std::vector<double> &damping) {
	std::vector<std::vector<double>> out;
	for (std::size_t k = 0; k < X.size(); ++k) {
		out.push_back(damping[k] == 0.0 ? X[k] : damp_channel(X[k], damping[k]));
	}
	return out;
}

std::size_t poly_length(const std::vector<ArmaOrder> &orders) {
	std::size_t len = 0;
	for (const auto &o : orders) {
		len += static_cast<std::size_t>((o.p + o.q + o.d) * o.period);
	}
	return len;
}

struct Alternation {
	XArimaModel model;
	double sse = 0.0;
};

Alternation alternate(const MaskedSeries &y, const std::vector<std::vector<double>> &Xd,
                      const std::vector<ArmaOrder> &orders, int max_iterations, double tol) {
	const std::size_t T = y.size();
	const auto K = static_cast<Eigen::Index>(Xd.size() + 1);
	const auto support = ar_support(orders);
	std::vector<std::size_t> obs;
	for (std::size_t t = 0; t < T; ++t) {
		if (y.is_observed(t)) {
			obs.push_back(t);
		}
	}
	auto design = [&](std::size_t t, Eigen::Index k) { return k == 0 ? 1.0 : Xd[static_cast<std::size_t>(k - 1)][t]; };

	Eigen::MatrixXd X0(static_cast<Eigen::Index>(obs.size()), K);
	Eigen::VectorXd y0(static_cast<Eigen::Index>(obs.size()));
	for (std::size_t i = 0; i < obs.size(); ++i) {
		for (Eigen::Index k = 0; k < K; ++k) {
			X0(static_cast<Eigen::Index>(i), k) = design(obs[i], k);
		}
		y0[static_cast<Eigen::Index>(i)] = y.values[obs[i]];
	}
	Eigen::VectorXd beta = least_squares(X0, y0).coef;

	Alternation out;
	std::vector<ArmaFactor> factors;
	bool have_factors = false;
	std::vector<double> u(T, 0.0);
	std::vector<double> col(T, 0.0);
	int it = 0;
	for (; it < max_iterations; ++it) {
		for (std::size_t t = 0; t < T; ++t) {
			double ex = beta[0];
			for (std::size_t k = 0; k < Xd.size(); ++k) {
				ex += beta[static_cast<Eigen::Index>(k + 1)] * Xd[k][t];
			}
			u[t] = y.is_observed(t) ? y.values[t] - ex : 0.0;
		}
		const auto fit = fit_arma_css(u, y.observed, orders, have_factors ? &factors : nullptr);
		factors = fit.factors;
		have_factors = true;
		out.model.projected = fit.projected;

		const auto a = ar_polynomial(factors);
		const auto m = ma_polynomial(factors);
		std::vector<double> yv(T);
		for (std::size_t t = 0; t < T; ++t) {
			yv[t] = y.is_observed(t) ? y.values[t] : 0.0;
		}
		const auto ey = css_residuals(yv, y.observed, a, m, support);
		Eigen::MatrixXd F(static_cast<Eigen::Index>(ey.n), K);
		Eigen::VectorXd fy(static_cast<Eigen::Index>(ey.n));
		{
			Eigen::Index r = 0;
			for (std::size_t t = 0; t < T; ++t) {
				if (ey.valid[t]) {
					fy[r++] = ey.e[t];
				}
			}
		}
		for (Eigen::Index k = 0; k < K; ++k) {
			for (std::size_t t = 0; t < T; ++t) {
				col[t] = design(t, k);
			}
			const auto ec = css_residuals(col, y.observed, a, m, support);
			Eigen::Index r = 0;
			for (std::size_t t = 0; t < T; ++t) {
				if (ec.valid[t]) {
					F(r++, k) = ec.e[t];
				}
			}
		}
		const Eigen::VectorXd next = least_squares(F, fy).coef;
		const double change = (next - beta).cwiseAbs().maxCoeff();
		const double scale = std::max(1.0, beta.cwiseAbs().maxCoeff());
		beta = next;
		if (change <= tol * scale) {
			out.model.converged = true;
			++it;
			break;
		}
	}
	for (std::size_t t = 0; t < T; ++t) {
		double ex = beta[0];
		for (std::size_t k = 0; k < Xd.size(); ++k) {
			ex += beta[static_cast<Eigen::Index>(k + 1)] * Xd[k][t];
		}
		u[t] = y.is_observed(t) ? y.values[t] - ex : 0.0;
	}
	const auto fit = fit_arma_css(u, y.observed, orders, have_factors ? &factors : nullptr);
	out.model.factors = fit.factors;
	out.model.projected = out.model.projected || fit.projected;
	out.model.sigma = std::sqrt(fit.sigma2);
	out.model.n_used = fit.n;
	out.model.aic = fit.aic + 2.0 * static_cast<double>(K);
	out.model.iterations = it;
	out.model.intercept = beta[0];
	for (Eigen::Index k = 1; k < K; ++k) {
		out.model.alpha.push_back(beta[k]);
	}
	out.sse = fit.sse;
	return out;
}

std::size_t usable_rows(const MaskedSeries &y, const std::vector<ArmaOrder> &orders) {
	std::vector<double> zeros(y.size(), 0.0);
	return css_residuals(zeros, y.observed, {1.0}, {1.0}, ar_support(orders)).n;
}

std::vector<ArmaOrder> make_orders(std::pair<int, int> r, std::pair<int, int> d, std::pair<int, int> w) {
	std::vector<ArmaOrder> out{{1, r.first, r.second, 0}};
	if (d.first + d.second > 0) {
		out.push_back({24, d.first, d.second, 0});
	}
	if (w.first + w.second > 0) {
		out.push_back({168, w.first, w.second, 0});
	}
	return out;
}

} // namespace

XArimaModel xarima_fit_orders(const MaskedSeries &y, const std::vector<std::vector<double>> &X,
                              const std::vector<std::string> &channel_names, const std::vector<ArmaOrder> &orders,
                              const std::vector<double> &damping, const XArimaOptions &options) {
	check_inputs(y, X, channel_names);
	if (damping.size() != X.size()) {
		throw ImputeError("xarima: damping count mismatch");
	}
	const std::size_t need = 5 * (168 + poly_length(orders));
	if (usable_rows(y, orders) < need) {
		throw ImputeError("xarima: not enough observed data for the requested orders");
	}
	auto alt = alternate(y, damped_inputs(X, damping), orders, options.max_iterations, options.alpha_tolerance);
	alt.model.channels = channel_names;
	alt.model.damping = damping;
	return alt.model;
}

XArimaModel xarima_fit(const MaskedSeries &y, const std::vector<std::vector<double>> &X,
                       const std::vector<std::string> &channel_names, const XArimaOptions &options) {
	check_inputs(y, X, channel_names);
	std::vector<ArmaOrder> base{{1, 1, 0, 0}};
	if (usable_rows(y, base) < 5 * (168 + poly_length(base))) {
		throw ImputeError("xarima: not enough observed data");
	}
	std::vector<double> damping(X.size(), 0.0);
	std::vector<std::size_t> damped;
	for (std::size_t k = 0; k < channel_names.size(); ++k) {
		if (std::find(options.damped_channels.begin(), options.damped_channels.end(), channel_names[k]) !=
		    options.damped_channels.end()) {
			damped.push_back(k);
		}
	}
	constexpr int kSearchIterations = 4;
	if (!damped.empty() && options.damping_grid.size() > 1) {
		double best = alternate(y, damped_inputs(X, damping), base, kSearchIterations, options.alpha_tolerance).sse;
		for (std::size_t k : damped) {
			const double keep = damping[k];
			double choice = keep;
			for (double delta : options.damping_grid) {
				if (delta == keep) {
					continue;
				}
				damping[k] = delta;
				const double sse =
				    alternate(y, damped_inputs(X, damping), base, kSearchIterations, options.alpha_tolerance).sse;
				if (sse < best) {
					best = sse;
					choice = delta;
				}
			}
			damping[k] = choice;
		}
	}
	const auto Xd = damped_inputs(X, damping);

	std::vector<ArmaOrder> best_orders;
	double best_aic = std::numeric_limits<double>::infinity();
	for (const auto &r : options.regular) {
		for (const auto &d : options.daily) {
			for (const auto &w : options.weekly) {
				const auto orders = make_orders(r, d, w);
				if (usable_rows(y, orders) < 5 * (168 + poly_length(orders))) {
					continue;
				}
				const auto alt = alternate(y, Xd, orders, 2, options.alpha_tolerance);
				if (std::isfinite(alt.model.aic) && alt.model.aic < best_aic) {
					best_aic = alt.model.aic;
					best_orders = orders;
				}
			}
		}
	}
	if (best_orders.empty()) {
		throw ImputeError("xarima: no candidate order satisfies the data requirement");
	}
	auto alt = alternate(y, Xd, best_orders, options.max_iterations, options.alpha_tolerance);
	alt.model.channels = channel_names;
	alt.model.damping = damping;
	if (!std::isfinite(alt.model.sigma) || alt.model.sigma <= 0.0) {
		throw ImputeError("xarima: degenerate residual variance");
	}
	return alt.model;
}

std::vector<double> xarima_exogenous(const XArimaModel &model, const std::vector<std::vector<double>> &X) {
	if (X.size() != model.alpha.size()) {
		throw ImputeError("xarima: channel count does not match the model");
	}
	const std::size_t T = X.empty() ? 0 : X[0].size();
	const auto Xd = damped_inputs(X, model.damping.empty() ? std::vector<double>(X.size(), 0.0) : model.damping);
	std::vector<double> out(T, model.intercept);
	for (std::size_t k = 0; k < Xd.size(); ++k) {
		for (std::size_t t = 0; t < T; ++t) {
			out[t] += model.alpha[k] * Xd[k][t];
		}
	}
	return out;
}

namespace {

std::vector<double> exogenous_or_constant(const XArimaModel &model, const std::vector<std::vector<double>> &X,
                                          std::size_t T) {
	if (X.empty()) {
		return std::vector<double>(T, model.intercept);
	}
	return xarima_exogenous(model, X);
}

} // namespace

std::vector<double> xarima_one_step(const XArimaModel &model, const MaskedSeries &y,
                                    const std::vector<std::vector<double>> &X) {
	const std::size_t T = y.size();
	const auto ex = exogenous_or_constant(model, X, T);
	std::vector<double> u(T);
	for (std::size_t t = 0; t < T; ++t) {
		u[t] = y.is_observed(t) ? y.values[t] - ex[t] : 0.0;
	}
	const auto a = ar_polynomial(model.factors);
	const auto m = ma_polynomial(model.factors);
	std::vector<int> support;
	for (std::size_t j = 1; j < a.size(); ++j) {
		support.push_back(static_cast<int>(j));
	}
	const std::vector<std::uint8_t> all(T, 1);
	const auto r = css_residuals(u, all, a, m, support);
	std::vector<double> out(T);
	for (std::size_t t = 0; t < T; ++t) {
		out[t] = ex[t] + (r.valid[t] ? u[t] - r.e[t] : 0.0);
	}
	return out;
}

MaskedSeries xarima_impute(const MaskedSeries &y, const std::vector<std::vector<double>> &X, const XArimaModel &model) {
	const std::size_t T = y.size();
	for (const auto &x : X) {
		if (x.size() != T || std::any_of(x.begin(), x.end(), [](double v) { return !std::isfinite(v); })) {
			throw ImputeError("xarima_impute: exogenous channels must be complete and of matching length");
		}
	}
	if (y.complete()) {
		return y;
	}
	const auto ex = exogenous_or_constant(model, X, T);
	const auto a = ar_polynomial(model.factors);
	const auto m = ma_polynomial(model.factors);
	const bool has_ma = m.size() > 1;
	const std::size_t L = std::min(T, has_ma ? a.size() + 600 : a.size());
	const auto pi = ar_infinity(a, m, L);
	std::vector<std::pair<std::size_t, double>> terms; // (lag, pi) including lag 0
	for (std::size_t j = 0; j < pi.size(); ++j) {
		if (j == 0 || std::abs(pi[j]) > 1e-9) {
			terms.emplace_back(j, pi[j]);
		}
	}
	const std::size_t max_lag = terms.back().first;

	std::vector<double> u(T, 0.0);
	std::vector<std::size_t> miss;
	for (std::size_t t = 0; t < T; ++t) {
		if (y.is_observed(t)) {
			u[t] = y.values[t] - ex[t];
		} else {
			miss.push_back(t);
		}
	}
	if (miss.size() == T) {
		throw ImputeError("xarima_impute: series has no observed values");
	}
	constexpr std::size_t kMaxCluster = 4000;
	std::vector<long> slot(T, -1);
	std::size_t begin = 0;
	while (begin < miss.size()) {
		std::size_t end = begin + 1;
		while (end < miss.size() && miss[end] - miss[end - 1] <= max_lag) {
			++end;
		}
		const std::size_t g = end - begin;
		if (g > kMaxCluster) {
			throw ImputeError("xarima_impute: gap cluster too large");
		}
		for (std::size_t i = 0; i < g; ++i) {
			slot[miss[begin + i]] = static_cast<long>(i);
		}
		Eigen::MatrixXd N = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(g));
		Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g));
		const std::size_t row_end = std::min(T, miss[end - 1] + max_lag + 1);
		std::vector<std::pair<Eigen::Index, double>> unknown;
		for (std::size_t t = miss[begin]; t < row_end; ++t) {
			unknown.clear();
			double known = 0.0;
			for (const auto &[lag, c] : terms) {
				if (lag > t) {
					break;
				}
				const std::size_t s = t - lag;
				if (slot[s] >= 0) {
					unknown.emplace_back(slot[s], c);
				} else if (y.is_observed(s)) {
					known += c * u[s];
				} else {
					known += c * u[s]; // earlier cluster, already filled
				}
			}
			for (const auto &[i, ci] : unknown) {
				b[i] -= ci * known;
				for (const auto &[k, ck] : unknown) {
					N(i, k) += ci * ck;
				}
			}
		}
		const Eigen::VectorXd x = N.ldlt().solve(b);
		for (std::size_t i = 0; i < g; ++i) {
			u[miss[begin + i]] = x[static_cast<Eigen::Index>(i)];
			slot[miss[begin + i]] = -1;
		}
		begin = end;
	}
	MaskedSeries out = y;
	for (std::size_t t : miss) {
		out.values[t] = ex[t] + u[t];
		out.observed[t] = 1;
	}
	return out;
}

nlohmann::json xarima_to_json(const XArimaModel &model) {
	nlohmann::json factors = nlohmann::json::array();
	for (const auto &f : model.factors) {
		factors.push_back({{"period", f.period}, {"ar", f.ar}, {"ma", f.ma}, {"diff", f.diff}});
	}
	return {{"channels", model.channels},   {"damping", model.damping},   {"intercept", model.intercept},
	        {"alpha", model.alpha},         {"factors", factors},         {"sigma", model.sigma},
	        {"converged", model.converged}, {"projected", model.projected}, {"iterations", model.iterations},
	        {"n_used", model.n_used},       {"aic", model.aic}};
}

XArimaModel xarima_from_json(const nlohmann::json &j) {
	XArimaModel m;
	m.channels = j.at("channels").get<std::vector<std::string>>();
	m.damping = j.at("damping").get<std::vector<double>>();
	m.intercept = j.at("intercept").get<double>();
	m.alpha = j.at("alpha").get<std::vector<double>>();
	for (const auto &f : j.at("factors")) {
		m.factors.push_back({f.at("period").get<int>(), f.at("ar").get<std::vector<double>>(),
		                     f.at("ma").get<std::vector<double>>(), f.at("diff").get<int>()});
	}
	m.sigma = j.at("sigma").get<double>();
	m.converged = j.at("converged").get<bool>();
	m.projected = j.at("projected").get<bool>();
	m.iterations = j.at("iterations").get<int>();
	m.n_used = j.at("n_used").get<std::size_t>();
	m.aic = j.at("aic").get<double>();
	return m;
}

std::string to_string(ImputeMethod m) {
	switch (m) {
	case ImputeMethod::None: return "none";
	case ImputeMethod::Trig: return "trig";
	case ImputeMethod::XArima: return "xarima";
	case ImputeMethod::Pmm: return "pmm";
	}
	return "none";
}

namespace {

void write_missing(SpatioTemporalFrame &frame, std::size_t c, std::size_t s, const MaskedSeries &before,
                   const MaskedSeries &after) {
	for (std::size_t t = 0; t < before.size(); ++t) {
		if (!before.is_observed(t)) {
			frame.set(c, t, s, after.values[t]);
		}
	}
}

void check_axis(const SpatioTemporalFrame &a, const SpatioTemporalFrame &b) {
	if (a.start() != b.start() || a.hours() != b.hours() || a.station_meta() != b.station_meta()) {
		throw ImputeError("impute_pipeline: frames must share time axis and stations");
	}
}

/// X-ARIMA with PMM fallback for every channel of `frame` given complete predictors.
void impute_model_stage(SpatioTemporalFrame &frame, const SpatioTemporalFrame &source,
                        const std::vector<const SpatioTemporalFrame *> &inputs, const ImputeOptions &options,
                        std::vector<ImputeRecord> &records) {
	for (std::size_t c = 0; c < source.channels(); ++c) {
		const auto &var = source.var_names()[c];
		for (std::size_t s = 0; s < source.stations(); ++s) {
			const auto y = source.series(c, s);
			if (y.complete()) {
				continue;
			}
			std::vector<std::vector<double>> X;
			std::vector<std::string> names;
			for (const auto *in : inputs) {
				for (std::size_t k = 0; k < in->channels(); ++k) {
					X.push_back(in->series(k, s).values);
					names.push_back(in->var_names()[k]);
				}
			}
			ImputeRecord rec;
			rec.var = var;
			rec.station = source.station_meta()[s].code;
			rec.filled = y.size() - y.observed_count();
			try {
				if (options.inject_xarima_failure && options.inject_xarima_failure(var, rec.station)) {
					throw ImputeError("injected failure");
				}
				const auto model = xarima_fit(y, X, names, options.xarima);
				const auto filled = xarima_impute(y, X, model);
				write_missing(frame, c, s, y, filled);
				rec.method = ImputeMethod::XArima;
				rec.model = xarima_to_json(model);
			} catch (const std::exception &e) {
				rec.note = e.what();
				const auto filled = pmm_impute(y, X, options.pmm_draws,
				                               stream_seed(options.seed, c * 1000003ULL + s * 7919ULL + var.size()));
				write_missing(frame, c, s, y, filled);
				rec.method = ImputeMethod::Pmm;
			}
			records.push_back(std::move(rec));
		}
	}
}

} // namespace

ImputeResult impute_pipeline(const SpatioTemporalFrame &weather, const SpatioTemporalFrame &forecast,
                             const SpatioTemporalFrame &pollution, const ImputeOptions &options) {
	check_axis(weather, forecast);
	check_axis(weather, pollution);
	ImputeResult out{weather, forecast, pollution, {}};

	for (std::size_t c = 0; c < weather.channels(); ++c) {
		for (std::size_t s = 0; s < weather.stations(); ++s) {
			const auto y = weather.series(c, s);
			if (y.complete()) {
				continue;
			}
			ImputeRecord rec;
			rec.var = weather.var_names()[c];
			rec.station = weather.station_meta()[s].code;
			rec.filled = y.size() - y.observed_count();
			rec.method = ImputeMethod::Trig;
			write_missing(out.weather, c, s, y, trig_impute(y, options.trig_periods, options.trig_K));
			out.records.push_back(std::move(rec));
		}
	}
	impute_model_stage(out.forecast, forecast, {&out.weather}, options, out.records);
	impute_model_stage(out.pollution, pollution, {&out.weather, &out.forecast}, options, out.records);
	if (out.weather.missing_count() + out.forecast.missing_count() + out.pollution.missing_count() != 0) {
		throw ImputeError("impute_pipeline: cells left missing");
	}
	return out;
}

nlohmann::json impute_report_json(const ImputeResult &result) {
	nlohmann::json arr = nlohmann::json::array();
	for (const auto &r : result.records) {
		nlohmann::json j{{"var", r.var}, {"station", r.station}, {"method", to_string(r.method)},
		                 {"filled", r.filled}};
		if (!r.note.empty()) {
			j["note"] = r.note;
		}
		if (!r.model.is_null()) {
			j["model"] = r.model;
		}
		arr.push_back(std::move(j));
	}
	return {{"records", arr}};
}

} // namespace aqcast
