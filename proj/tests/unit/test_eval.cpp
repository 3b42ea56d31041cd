#include "aqcast/eval.hpp"
#include "aqcast/numeric.hpp"
#include "aqcast/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace aqcast;

TEST_CASE("rmse and bias") {
	const std::vector<double> pred{1.0, 2.0, 3.0, 4.0};
	const std::vector<double> obs{2.0, 2.0, 1.0, 4.0};
	CHECK(rmse(pred, obs) == doctest::Approx(std::sqrt(5.0 / 4.0)).epsilon(1e-15));
	CHECK(bias(pred, obs) == doctest::Approx(0.25).epsilon(1e-15));
	CHECK_THROWS_AS(rmse(pred, std::vector<double>{1.0}), EvalError);
	CHECK_THROWS_AS(bias(std::vector<double>{}, std::vector<double>{}), EvalError);
}

TEST_CASE("crps from quantiles") {
	SUBCASE("standard normal at zero") {
		std::vector<double> q(99);
		for (int k = 1; k <= 99; ++k) {
			q[static_cast<std::size_t>(k - 1)] = normal_quantile(k / 100.0);
		}
		// 99-point sum computed independently; closed form 2 phi(0) - 1/sqrt(pi).
		CHECK(crps_from_quantiles(q, 0.0) == doctest::Approx(0.23591198781336514).epsilon(1e-9));
		const double closed = 2.0 / std::sqrt(2.0 * std::numbers::pi) - 1.0 / std::sqrt(std::numbers::pi);
		CHECK(std::abs(crps_from_quantiles(q, 0.0) - closed) / closed < 0.02);
	}
	SUBCASE("point mass reduces to absolute error") {
		std::vector<double> q(99, 3.0);
		CHECK(crps_from_quantiles(q, 5.5) == doctest::Approx(2.5).epsilon(1e-12));
		CHECK(crps_from_quantiles(q, 1.0) == doctest::Approx(2.0).epsilon(1e-12));
	}
	SUBCASE("degenerate and shifted") {
		std::vector<double> q(99, 4.0);
		CHECK(crps_from_quantiles(q, 4.0) == 0.0);
		std::vector<double> n(99);
		for (int k = 1; k <= 99; ++k) {
			n[static_cast<std::size_t>(k - 1)] = normal_quantile(k / 100.0);
		}
		double prev = crps_from_quantiles(n, 0.0);
		for (double shift : {0.25, 0.5, 1.0, 2.0}) {
			auto m = n;
			for (auto &v : m) {
				v += shift;
			}
			const double c = crps_from_quantiles(m, 0.0);
			CHECK(c > prev);
			prev = c;
		}
	}
	SUBCASE("errors") {
		std::vector<double> q(99, 1.0);
		q[10] = 0.5;
		CHECK_THROWS_AS(crps_from_quantiles(q, 1.0), EvalError);
		CHECK_THROWS_AS(crps_from_quantiles(std::vector<double>(98, 1.0), 1.0), EvalError);
	}
}

TEST_CASE("persistence forecast") {
	auto weekly = [](std::size_t t) { return 20.0 + 10.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 168.0) + (t % 24); };
	SUBCASE("weekly periodic series is reproduced") {
		std::vector<double> h(500);
		for (std::size_t t = 0; t < h.size(); ++t) {
			h[t] = weekly(t);
		}
		const auto f = persistence_forecast(h, 48);
		for (std::size_t k = 0; k < 48; ++k) {
			CHECK(f[k] == doctest::Approx(weekly(500 + k)).epsilon(1e-12));
		}
	}
	SUBCASE("constant") {
		std::vector<double> h(200, 7.0);
		for (double v : persistence_forecast(h, 48)) {
			CHECK(v == doctest::Approx(7.0));
		}
	}
	SUBCASE("level shift is recovered") {
		std::vector<double> h(400);
		for (std::size_t t = 0; t < h.size(); ++t) {
			h[t] = weekly(t) * (t >= 400 - 24 ? 1.1 : 1.0);
		}
		const auto f = persistence_forecast(h, 48);
		for (std::size_t k = 0; k < 48; ++k) {
			CHECK(std::abs(f[k] / (1.1 * weekly(400 + k)) - 1.0) < 0.01);
		}
	}
	SUBCASE("short history") {
		CHECK_THROWS_AS(persistence_forecast(std::vector<double>(168, 1.0), 24), EvalError);
		CHECK_NOTHROW(persistence_forecast(std::vector<double>(169, 1.0), 24));
	}
}

TEST_CASE("coverage") {
	std::vector<Percentiles> q(4);
	for (auto &row : q) {
		for (int k = 0; k < 99; ++k) {
			row[static_cast<std::size_t>(k)] = k + 1;
		}
	}
	const std::vector<double> obs{5.0, 50.0, 95.0, 100.0};
	const auto cov = calibration_coverage(q, obs);
	CHECK(cov[3] == doctest::Approx(0.0));
	CHECK(cov[4] == doctest::Approx(0.25));
	CHECK(cov[49] == doctest::Approx(0.5));
	CHECK(cov[98] == doctest::Approx(0.75));
	CHECK(interval_coverage(q, obs, 10, 90) == doctest::Approx(0.25));
	CHECK_THROWS_AS(calibration_coverage(q, std::vector<double>{1.0}), EvalError);
	for (double v : calibration_coverage(q, std::vector<double>(4, 1000.0))) {
		CHECK(v == 0.0);
	}
}

TEST_CASE("coverage of a calibrated forecast") {
	const std::size_t n = 4000;
	NormalStream rng(stream_seed(77, 0));
	Percentiles std_q;
	for (int k = 1; k <= 99; ++k) {
		std_q[static_cast<std::size_t>(k - 1)] = normal_quantile(k / 100.0);
	}
	std::vector<Percentiles> q(n);
	std::vector<double> obs(n);
	for (std::size_t i = 0; i < n; ++i) {
		const double mu = 3.0 * rng.uniform();
		for (std::size_t k = 0; k < 99; ++k) {
			q[i][k] = mu + 2.0 * std_q[k];
		}
		obs[i] = mu + 2.0 * rng();
	}
	const auto cov = calibration_coverage(q, obs);
	for (std::size_t k = 0; k < 99; ++k) {
		CHECK(std::abs(cov[k] - (k + 1) / 100.0) <= 2.0 / std::sqrt(static_cast<double>(n)));
		if (k > 0) {
			CHECK(cov[k] >= cov[k - 1]);
		}
	}
}

TEST_CASE("metric report and emission") {
	StationMeta a;
	a.code = 1;
	StationMeta b;
	b.code = 2;
	const TimeStamp start = utc_from_civil(Date{std::chrono::year{2024} / 1 / 1}, 0);
	SpatioTemporalFrame obs({"no2"}, start, 100, {a, b});
	for (std::size_t t = 0; t < 100; ++t) {
		obs.set(0, t, 0, 10.0);
		obs.set(0, t, 1, 20.0);
	}
	obs.set_missing(0, 12, 1);

	std::vector<QuantileForecast> fc;
	for (int st : {1, 2}) {
		QuantileForecast f;
		f.station = st;
		f.issue = Date{std::chrono::year{2024} / 1 / 1};
		for (int h = 0; h < 4; ++h) {
			f.hours.push_back(start + 10 + h);
			f.day_types.push_back(DayType::Int);
			Percentiles p;
			for (int k = 0; k < 99; ++k) {
				p[static_cast<std::size_t>(k)] = (st == 1 ? 12.0 : 20.0) + 0.01 * k;
			}
			f.q.push_back(p);
			f.point.push_back(p[49]);
		}
		fc.push_back(f);
	}
	const auto rep = evaluate_forecasts("model", "no2", fc, obs);
	CHECK(rep.horizons == 4);
	CHECK(rep.per_station.at(1).n == 4);
	CHECK(rep.per_station.at(2).n == 3);
	CHECK(rep.cells.at(2)[2].n == 0);
	CHECK(rep.per_station.at(1).bias == doctest::Approx(2.49));
	CHECK(rep.per_station.at(2).rmse == doctest::Approx(0.49));
	CHECK(rep.rmse_mean() == doctest::Approx((2.49 + 0.49) / 2));
	CHECK(rep.rmse_std() == doctest::Approx(std::sqrt(2.0)));

	Evaluation ev;
	ev.reports.push_back(rep);
	ev.coverage.assign(99, 0.5);
	const auto dir = std::filesystem::temp_directory_path() / "aqcast_eval_test";
	std::filesystem::remove_all(dir);
	const nlohmann::json events = {{"alert", {{"city", 0.1}}}};
	const auto files = report_emit(dir.string(), ev, &events, fc, obs);
	CHECK(files.size() == 7);
	std::ifstream fan(dir / "fan_2.csv");
	std::string line;
	int rows = 0;
	std::getline(fan, line);
	CHECK(line.rfind("horizon,timestamp,q05,q10,", 0) == 0);
	while (std::getline(fan, line)) {
		++rows;
		if (rows == 3) {
			CHECK(line.back() == ',');
		}
	}
	CHECK(rows == 4);
	std::filesystem::remove_all(dir);
}
