#include "aqcast/impute.hpp"
#include "aqcast/numeric.hpp"
#include "aqcast/rng.hpp"
#include "aqcast/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <set>

using namespace aqcast;

namespace {

std::vector<double> ar1(std::size_t T, double phi, double sigma, std::uint64_t seed) {
	NormalStream z(seed);
	std::vector<double> x(T);
	double prev = z() * sigma / std::sqrt(1.0 - phi * phi);
	for (std::size_t t = 0; t < T; ++t) {
		prev = phi * prev + sigma * z();
		x[t] = prev;
	}
	return x;
}

MaskedSeries with_gaps(const std::vector<double> &x, double rate, std::uint64_t seed) {
	NormalStream u(seed);
	MaskedSeries s(x);
	for (std::size_t t = 0; t < x.size(); ++t) {
		if (u.uniform() < rate) {
			s.values[t] = kMissing;
			s.observed[t] = 0;
		}
	}
	return s;
}

XArimaModel pure_ar1(double phi) {
	XArimaModel m;
	m.factors.push_back({1, {phi}, {}, 0});
	m.sigma = 1.0;
	return m;
}

} // namespace

TEST_CASE("trig_impute recovers a sinusoid and leaves observed points alone") {
	std::vector<double> x(24 * 30);
	for (std::size_t t = 0; t < x.size(); ++t) {
		x[t] = 5.0 + 2.0 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / 24.0 - 0.7);
	}
	const auto gappy = with_gaps(x, 0.1, 3);
	REQUIRE(gappy.observed_count() < x.size());
	const auto filled = trig_impute(gappy, {24}, 1);
	for (std::size_t t = 0; t < x.size(); ++t) {
		CHECK(filled.is_observed(t));
		if (gappy.is_observed(t)) {
			CHECK(std::memcmp(&filled.values[t], &gappy.values[t], sizeof(double)) == 0);
		} else {
			CHECK(std::abs(filled.values[t] - x[t]) < 1e-8);
		}
	}
	const auto model = trig_fit(gappy, {24}, 1);
	CHECK(model.mean == doctest::Approx(5.0).epsilon(1e-10));
	REQUIRE(model.harmonics.size() == 1);
	CHECK(model.harmonics[0].amplitude == doctest::Approx(2.0).epsilon(1e-10));
	CHECK(model.harmonics[0].phase == doctest::Approx(0.7).epsilon(1e-10));
}

TEST_CASE("trig_impute trivial cases and errors") {
	const auto constant = with_gaps(std::vector<double>(500, 3.25), 0.2, 9);
	const auto filled = trig_impute(constant, {24, 168}, 3);
	for (double v : filled.values) {
		CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
	}
	const MaskedSeries full(std::vector<double>{1, 2, 3});
	CHECK(trig_impute(full, {24}, 2).values == full.values);
	MaskedSeries sparse(std::vector<double>{1.0, kMissing, kMissing, kMissing},
	                    std::vector<std::uint8_t>{1, 0, 0, 0});
	CHECK_THROWS_AS(trig_impute(sparse, {24}, 1), ImputeError);
}

TEST_CASE("pmm_impute on a noiseless linear target returns the true value from the donor pool") {
	const std::size_t T = 400;
	std::vector<double> x1(T);
	std::vector<double> x2(T);
	std::vector<double> y(T);
	for (std::size_t t = 0; t < T; ++t) {
		x1[t] = static_cast<double>(t % 7);
		x2[t] = static_cast<double>((t / 7) % 5);
		y[t] = 1.5 + 2.0 * x1[t] - 0.75 * x2[t];
	}
	const auto target = with_gaps(y, 0.15, 11);
	const auto filled = pmm_impute(target, {x1, x2}, 1, 42);
	std::set<double> pool;
	for (std::size_t t = 0; t < T; ++t) {
		if (target.is_observed(t)) {
			pool.insert(target.values[t]);
		}
	}
	for (std::size_t t = 0; t < T; ++t) {
		CHECK(filled.is_observed(t));
		if (!target.is_observed(t)) {
			CHECK(pool.count(filled.values[t]) == 1);
			CHECK(filled.values[t] == doctest::Approx(y[t]).epsilon(1e-12));
		}
	}
	const auto again = pmm_impute(target, {x1, x2}, 1, 42);
	CHECK(again.values == filled.values);
}

TEST_CASE("pmm_impute with several noisy draws stays inside the observed set and is seeded") {
	const std::size_t T = 300;
	const auto noise = ar1(T, 0.0, 0.5, 5);
	std::vector<double> x(T);
	std::vector<double> y(T);
	for (std::size_t t = 0; t < T; ++t) {
		x[t] = std::sin(0.1 * static_cast<double>(t));
		y[t] = 3.0 * x[t] + noise[t];
	}
	const auto target = with_gaps(y, 0.3, 6);
	const auto a = pmm_impute(target, {x}, 5, 7);
	const auto b = pmm_impute(target, {x}, 5, 7);
	CHECK(std::memcmp(a.values.data(), b.values.data(), T * sizeof(double)) == 0);
	std::set<double> pool;
	for (std::size_t t = 0; t < T; ++t) {
		if (target.is_observed(t)) {
			pool.insert(target.values[t]);
		}
	}
	for (std::size_t t = 0; t < T; ++t) {
		CHECK(pool.count(a.values[t]) == 1);
	}
	MaskedSeries none(std::vector<double>(5, kMissing), std::vector<std::uint8_t>(5, 0));
	CHECK_THROWS_AS(pmm_impute(none, {std::vector<double>(5, 1.0)}, 1, 1), ImputeError);
	// Collinear predictors fall back to ridge and still fill.
	const auto collinear = pmm_impute(target, {x, x}, 2, 3);
	CHECK(collinear.complete());
}

TEST_CASE("xarima_fit recovers a regression coefficient within three standard errors") {
	const std::size_t T = 3000;
	const auto noise = ar1(T, 0.0, 1.0, 21);
	const auto x = ar1(T, 0.5, 1.0, 22);
	std::vector<double> y(T);
	for (std::size_t t = 0; t < T; ++t) {
		y[t] = 2.0 * x[t] + noise[t];
	}
	const auto model = xarima_fit_orders(MaskedSeries(y), {x}, {"x"}, {{1, 1, 0, 0}}, {0.0});
	const double mx = mean(x);
	double sxx = 0.0;
	for (double v : x) {
		sxx += (v - mx) * (v - mx);
	}
	const double se = 1.0 / std::sqrt(sxx);
	CHECK(std::abs(model.alpha[0] - 2.0) < 3.0 * se);
	CHECK(std::abs(model.factors[0].ar[0]) < 0.1);
	CHECK(model.converged);
}

TEST_CASE("xarima_fit recovers an AR(1) coefficient at T=5000") {
	const auto y = ar1(5000, 0.8, 1.0, 31);
	const auto model = xarima_fit_orders(MaskedSeries(y), {}, {}, {{1, 1, 0, 0}}, {});
	CHECK(std::abs(model.factors[0].ar[0] - 0.8) < 0.05);
	CHECK(model.sigma == doctest::Approx(1.0).epsilon(0.05));
	// Zero exogenous channels get zero coefficients and the ARMA part is unchanged.
	const std::vector<double> zeros(5000, 0.0);
	const auto with_zero = xarima_fit_orders(MaskedSeries(y), {zeros}, {"z"}, {{1, 1, 0, 0}}, {0.0});
	CHECK(with_zero.alpha[0] == 0.0);
	CHECK(with_zero.factors[0].ar[0] == doctest::Approx(model.factors[0].ar[0]).epsilon(1e-6));
}

TEST_CASE("xarima_fit with order search picks a seasonal structure when present") {
	const std::size_t T = 24 * 120;
	NormalStream z(77);
	std::vector<double> y(T, 0.0);
	for (std::size_t t = 0; t < T; ++t) {
		double v = z();
		if (t >= 1) {
			v += 0.6 * y[t - 1];
		}
		if (t >= 24) {
			v += 0.5 * y[t - 24];
		}
		if (t >= 25) {
			v -= 0.3 * y[t - 25];
		}
		y[t] = v;
	}
	XArimaOptions opt;
	opt.weekly = {{0, 0}};
	const auto model = xarima_fit(with_gaps(y, 0.01, 4), {}, {}, opt);
	bool has_daily = false;
	for (const auto &f : model.factors) {
		if (f.period == 24 && !f.ar.empty()) {
			has_daily = true;
			CHECK(f.ar[0] == doctest::Approx(0.5).epsilon(0.2));
		}
	}
	CHECK(has_daily);
	CHECK(model.factors[0].ar[0] == doctest::Approx(0.6).epsilon(0.15));
}

TEST_CASE("xarima_fit rejects series that are too short and picks damping by SSE") {
	CHECK_THROWS_AS(xarima_fit(MaskedSeries(ar1(200, 0.5, 1.0, 1)), {}, {}), ImputeError);

	const std::size_t T = 3000;
	const auto raw = ar1(T, 0.0, 1.0, 41);
	const auto smooth = damp_channel(raw, 0.6);
	const auto noise = ar1(T, 0.3, 0.2, 42);
	std::vector<double> y(T);
	for (std::size_t t = 0; t < T; ++t) {
		y[t] = 1.0 + 1.5 * smooth[t] + noise[t];
	}
	XArimaOptions opt;
	opt.regular = {{1, 0}};
	opt.daily = {{0, 0}};
	opt.weekly = {{0, 0}};
	const auto model = xarima_fit(MaskedSeries(y), {raw}, {"blh"}, opt);
	CHECK(model.damping[0] == 0.6);
	CHECK(model.alpha[0] == doctest::Approx(1.5).epsilon(0.05));
	const auto j = xarima_to_json(model);
	const auto back = xarima_from_json(j);
	CHECK(xarima_to_json(back) == j);
}

TEST_CASE("xarima alpha error shrinks with the sample size") {
	auto error_at = [](std::size_t T) {
		double acc = 0.0;
		for (std::uint64_t seed = 0; seed < 16; ++seed) {
			const auto x = ar1(T, 0.7, 1.0, 100 + seed);
			const auto u = ar1(T, 0.8, 1.0, 200 + seed);
			std::vector<double> y(T);
			for (std::size_t t = 0; t < T; ++t) {
				y[t] = 0.5 + 1.2 * x[t] + u[t];
			}
			const auto m = xarima_fit_orders(MaskedSeries(y), {x}, {"x"}, {{1, 1, 0, 0}}, {0.0});
			acc += (m.alpha[0] - 1.2) * (m.alpha[0] - 1.2);
		}
		return std::sqrt(acc / 16.0);
	};
	CHECK(error_at(8000) < error_at(2000));
}

TEST_CASE("xarima_impute single gap matches the AR(1) conditional expectation") {
	const double phi = 0.8;
	auto y = ar1(400, phi, 1.0, 51);
	MaskedSeries s(y);
	for (std::size_t gap : {std::size_t{100}, std::size_t{250}}) {
		s.values[gap] = kMissing;
		s.observed[gap] = 0;
	}
	const auto filled = xarima_impute(s, {}, pure_ar1(phi));
	for (std::size_t gap : {std::size_t{100}, std::size_t{250}}) {
		const double expect = phi * (y[gap - 1] + y[gap + 1]) / (1.0 + phi * phi);
		CHECK(std::abs(filled.values[gap] - expect) < 1e-12);
	}
	for (std::size_t t = 0; t < y.size(); ++t) {
		if (s.is_observed(t)) {
			CHECK(std::memcmp(&filled.values[t], &y[t], sizeof(double)) == 0);
		}
	}
}

TEST_CASE("xarima_impute edge gaps are single-sided forecasts and pure regression fills with X alpha") {
	const double phi = 0.7;
	const auto y = ar1(200, phi, 1.0, 61);
	MaskedSeries right(y);
	for (std::size_t t = 195; t < 200; ++t) {
		right.values[t] = kMissing;
		right.observed[t] = 0;
	}
	const auto r = xarima_impute(right, {}, pure_ar1(phi));
	for (std::size_t t = 195; t < 200; ++t) {
		CHECK(r.values[t] == doctest::Approx(y[194] * std::pow(phi, static_cast<double>(t - 194))).epsilon(1e-12));
	}
	MaskedSeries left(y);
	for (std::size_t t = 0; t < 3; ++t) {
		left.values[t] = kMissing;
		left.observed[t] = 0;
	}
	const auto l = xarima_impute(left, {}, pure_ar1(phi));
	// Backward recursion of a reversible AR(1) with a zero pre-sample start.
	CHECK(std::abs(l.values[2] - phi * y[3]) < 0.2 * std::abs(y[3]) + 1e-9);

	XArimaModel reg;
	reg.intercept = 1.0;
	reg.alpha = {2.0};
	reg.damping = {0.0};
	std::vector<double> x(50);
	std::vector<double> yy(50);
	for (std::size_t t = 0; t < 50; ++t) {
		x[t] = static_cast<double>(t) * 0.1;
		yy[t] = 1.0 + 2.0 * x[t] + (t % 2 ? 0.3 : -0.3);
	}
	MaskedSeries ys(yy);
	ys.values[20] = kMissing;
	ys.observed[20] = 0;
	const auto f = xarima_impute(ys, {x}, reg);
	CHECK(f.values[20] == doctest::Approx(1.0 + 2.0 * x[20]).epsilon(1e-14));
}

TEST_CASE("xarima_impute reverts to the exogenous mean over a long gap") {
	const double phi = 0.9;
	const std::size_t T = 24 * 60;
	const auto u = ar1(T, phi, 1.0, 71);
	std::vector<double> x(T);
	std::vector<double> y(T);
	for (std::size_t t = 0; t < T; ++t) {
		x[t] = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 24.0);
		y[t] = 10.0 + 3.0 * x[t] + u[t];
	}
	XArimaModel m;
	m.intercept = 10.0;
	m.alpha = {3.0};
	m.damping = {0.0};
	m.factors.push_back({1, {phi}, {}, 0});
	MaskedSeries s(y);
	const std::size_t g0 = 300;
	const std::size_t g1 = 300 + 24 * 21;
	for (std::size_t t = g0; t < g1; ++t) {
		s.values[t] = kMissing;
		s.observed[t] = 0;
	}
	const auto f = xarima_impute(s, {x}, m);
	const double left = y[g0 - 1] - 10.0 - 3.0 * x[g0 - 1];
	const double right = y[g1] - 10.0 - 3.0 * x[g1];
	for (std::size_t t = g0; t < g1; ++t) {
		const double dev = f.values[t] - 10.0 - 3.0 * x[t];
		const double bound = std::abs(left) * std::pow(phi, static_cast<double>(t - g0 + 1)) +
		                     std::abs(right) * std::pow(phi, static_cast<double>(g1 - t)) + 1e-9;
		CHECK(std::abs(dev) <= bound);
	}
}

TEST_CASE("implemented model form is regression-with-ARMA-errors, not ARMA-with-regressors") {
	const std::size_t T = 60;
	std::vector<double> x(T);
	std::vector<double> y(T);
	for (std::size_t t = 0; t < T; ++t) {
		x[t] = std::cos(0.3 * static_cast<double>(t));
		y[t] = 2.0 + 1.5 * x[t] + 0.4 * std::sin(0.7 * static_cast<double>(t));
	}
	XArimaModel m;
	m.intercept = 2.0;
	m.alpha = {1.5};
	m.damping = {0.0};
	m.factors.push_back({1, {0.6}, {}, 0});
	const auto pred = xarima_one_step(m, MaskedSeries(y), {x});
	double max_diff_eq2 = 0.0;
	for (std::size_t t = 1; t < T; ++t) {
		const double eq1 = 2.0 + 1.5 * x[t] + 0.6 * (y[t - 1] - 2.0 - 1.5 * x[t - 1]);
		const double eq2 = 2.0 + 1.5 * x[t] + 0.6 * y[t - 1];
		CHECK(pred[t] == doctest::Approx(eq1).epsilon(1e-12));
		max_diff_eq2 = std::max(max_diff_eq2, std::abs(pred[t] - eq2));
	}
	CHECK(max_diff_eq2 > 0.1);
}

namespace {

SyntheticData small_data(double block_rate, std::uint64_t seed) {
	SyntheticSpec spec;
	spec.stations = 3;
	spec.days = 70;
	spec.block_rate = block_rate;
	spec.seed = seed;
	return synthetic_generate(spec);
}

bool observed_cells_identical(const SpatioTemporalFrame &before, const SpatioTemporalFrame &after) {
	for (std::size_t c = 0; c < before.channels(); ++c) {
		for (std::size_t t = 0; t < before.hours(); ++t) {
			for (std::size_t s = 0; s < before.stations(); ++s) {
				if (before.observed(c, t, s)) {
					const double a = before.raw(c, t, s);
					const double b = after.raw(c, t, s);
					if (std::memcmp(&a, &b, sizeof(double)) != 0) {
						return false;
					}
				}
			}
		}
	}
	return true;
}

} // namespace

TEST_CASE("impute_pipeline identity on complete input and trig-only for weather gaps") {
	const auto data = small_data(0.0, 5);
	const auto full = impute_pipeline(data.weather_forecast, data.pollution_forecast, data.truth_pollution);
	CHECK(full.records.empty());
	CHECK(full.pollution == data.truth_pollution);

	auto weather = data.weather_forecast;
	weather.set_missing(0, 10, 1);
	weather.set_missing(2, 400, 0);
	const auto r = impute_pipeline(weather, data.pollution_forecast, data.truth_pollution);
	REQUIRE(r.records.size() == 2);
	for (const auto &rec : r.records) {
		CHECK(rec.method == ImputeMethod::Trig);
	}
	CHECK(r.weather.missing_count() == 0);
	CHECK(observed_cells_identical(weather, r.weather));
}

TEST_CASE("impute_pipeline uses PMM when X-ARIMA is forced to fail") {
	const auto data = small_data(0.0, 6);
	ImputeOptions opt;
	opt.inject_xarima_failure = [](const std::string &var, int station) { return var == kPollutionVar && station == 2; };
	const auto r = impute_pipeline(data.observed_weather, data.observed_forecast, data.observed_pollution, opt);
	bool saw_pmm = false;
	bool saw_xarima = false;
	for (const auto &rec : r.records) {
		if (rec.var == kPollutionVar && rec.station == 2) {
			CHECK(rec.method == ImputeMethod::Pmm);
			saw_pmm = true;
		} else if (rec.method == ImputeMethod::XArima) {
			saw_xarima = true;
		}
	}
	CHECK(saw_pmm);
	CHECK(saw_xarima);
	CHECK(r.pollution.missing_count() == 0);
	CHECK(r.forecast.missing_count() == 0);
	CHECK(observed_cells_identical(data.observed_pollution, r.pollution));
	CHECK(impute_report_json(r).at("records").size() == r.records.size());
}

TEST_CASE("impute_pipeline completes under heavy block outages") {
	const auto data = small_data(0.0, 8);
	auto weather = data.observed_weather;
	auto forecast = data.observed_forecast;
	auto pollution = data.observed_pollution;
	inject_block_outages(weather, 0.2, 12, 96, 1);
	inject_block_outages(forecast, 0.2, 12, 96, 2);
	inject_block_outages(pollution, 0.2, 12, 96, 3);
	const double frac = static_cast<double>(pollution.missing_count()) / static_cast<double>(pollution.values().size());
	CHECK(frac >= 0.2);
	const auto r = impute_pipeline(weather, forecast, pollution);
	CHECK(r.weather.missing_count() == 0);
	CHECK(r.forecast.missing_count() == 0);
	CHECK(r.pollution.missing_count() == 0);
	CHECK(observed_cells_identical(pollution, r.pollution));
	CHECK(observed_cells_identical(forecast, r.forecast));
	CHECK(observed_cells_identical(weather, r.weather));
}
