#include <doctest.h>

#include "aqcast/dataset.hpp"
#include "aqcast/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace aqcast;

namespace {

std::vector<StationMeta> two_stations() {
	StationMeta a;
	a.code = 4;
	a.zone = 1;
	StationMeta b;
	b.code = 8;
	b.zone = 2;
	return {a, b};
}

std::string temp_path(const std::string &name) {
	return (std::filesystem::temp_directory_path() / ("aqcast_test_" + name)).string();
}

} // namespace

TEST_CASE("nearest_grid_point") {
	StationMeta st;
	st.lon = -3.7;
	st.lat = 40.4;
	SUBCASE("station on a node") {
		const std::vector<GridNode> grid{{-3.0, 40.0}, {-3.7, 40.4}, {-4.0, 41.0}};
		CHECK(nearest_grid_point(st, grid) == 1);
	}
	SUBCASE("equidistant nodes resolve to the lower index") {
		const std::vector<GridNode> grid{{-3.6, 40.4}, {-3.8, 40.4}};
		CHECK(nearest_grid_point(st, grid) == 0);
	}
	SUBCASE("brute-force argmin on a toy grid") {
		const std::vector<GridNode> grid{{-3.5, 40.5}, {-3.75, 40.35}, {-3.9, 40.45}};
		std::size_t best = 0;
		double best_d = 1e300;
		for (std::size_t i = 0; i < grid.size(); ++i) {
			// Spherical law of cosines as an independent distance route.
			const double r = std::numbers::pi / 180.0;
			const double c = std::sin(st.lat * r) * std::sin(grid[i].lat * r) +
			                 std::cos(st.lat * r) * std::cos(grid[i].lat * r) * std::cos((grid[i].lon - st.lon) * r);
			const double d = std::acos(std::min(1.0, c));
			if (d < best_d) {
				best_d = d;
				best = i;
			}
		}
		CHECK(best == 1);
		CHECK(nearest_grid_point(st, grid) == best);
	}
	SUBCASE("empty grid") {
		CHECK_THROWS_AS(nearest_grid_point(st, std::vector<GridNode>{}), DataError);
	}
}

TEST_CASE("derive_wind") {
	const Wind calm = derive_wind(0.0, 0.0);
	CHECK(calm.speed == 0.0);
	CHECK(calm.direction == 0.0);

	const Wind w = derive_wind(3.0, 4.0);
	CHECK(w.speed == doctest::Approx(5.0).epsilon(1e-14));
	// Air moving towards north-east comes from the south-west: 180 + atan2(3,4).
	CHECK(w.direction == doctest::Approx(180.0 + std::atan2(3.0, 4.0) * 180.0 / std::numbers::pi).epsilon(1e-12));

	CHECK(derive_wind(0.0, -2.0).direction == doctest::Approx(0.0));  // northerly
	CHECK(derive_wind(-2.0, 0.0).direction == doctest::Approx(90.0)); // easterly

	for (int k = 0; k < 36; ++k) {
		const double a = k * 10.0 * std::numbers::pi / 180.0;
		const double u = 3.0 * std::cos(a) - 4.0 * std::sin(a);
		const double v = 3.0 * std::sin(a) + 4.0 * std::cos(a);
		const Wind r = derive_wind(u, v);
		CHECK(r.speed == doctest::Approx(5.0).epsilon(1e-12));
		CHECK(r.direction >= 0.0);
		CHECK(r.direction < 360.0);
	}
}

TEST_CASE("add_lags") {
	SpatioTemporalFrame frame({"x"}, TimeStamp{1000}, 4, two_stations());
	frame.set(0, 0, 0, 1.0);
	frame.set(0, 1, 0, 2.0);
	frame.set(0, 2, 0, 3.0);
	frame.set(0, 3, 0, 4.0);
	frame.set(0, 0, 1, 10.0);
	frame.set(0, 2, 1, 30.0); // hour 1 missing at station 1
	frame.set(0, 3, 1, 40.0);

	const auto lagged = add_lags(frame, "x", 2);
	CHECK(lagged.channels() == 3);
	const std::size_t l1 = lagged.var_index("x_lag1");
	const std::size_t l2 = lagged.var_index("x_lag2");
	CHECK_FALSE(lagged.observed(l1, 0, 0));
	CHECK(lagged.value(l1, 1, 0) == 1.0);
	CHECK(lagged.value(l1, 2, 0) == 2.0);
	CHECK_FALSE(lagged.observed(l2, 1, 0));
	CHECK(lagged.value(l2, 2, 0) == 1.0);
	// Missing input hour propagates to its shifted position.
	CHECK_FALSE(lagged.observed(l1, 2, 1));
	CHECK_FALSE(lagged.observed(l2, 3, 1));
	CHECK(lagged.value(l1, 3, 1) == 30.0);

	CHECK_THROWS_AS(add_lags(frame, "nope", 2), DataError);
	CHECK_THROWS_AS(add_lags(frame, "x", 0), DataError);
}

TEST_CASE("add_lags on a read frame equals reading a pre-shifted file") {
	const std::string plain = temp_path("lag_plain.csv");
	const std::string shifted = temp_path("lag_shifted.csv");
	{
		std::ofstream a(plain);
		std::ofstream b(shifted);
		a << "timestamp_utc,station_code,var,value\n";
		b << "timestamp_utc,station_code,var,value\n";
		const double xs[] = {5.0, 6.5, 7.25, 9.0};
		for (int h = 0; h < 4; ++h) {
			const std::string ts = "2023-01-01T0" + std::to_string(h) + ":00Z";
			a << ts << ",4,x," << xs[h] << '\n';
			b << ts << ",4,x," << xs[h] << '\n';
			b << ts << ",4,x_lag1,";
			if (h > 0) b << xs[h - 1];
			b << '\n';
		}
	}
	FrameSchema schema;
	schema.vars = {"x"};
	const auto via_lags = add_lags(read_frame_csv(plain, schema), "x", 1);
	schema.vars = {"x", "x_lag1"};
	const auto via_file = read_frame_csv(shifted, schema);
	CHECK(via_lags == via_file);
	std::remove(plain.c_str());
	std::remove(shifted.c_str());
}

TEST_CASE("log transform") {
	SpatioTemporalFrame frame({"y"}, TimeStamp{0}, 3, two_stations());
	frame.set(0, 0, 0, 0.0);
	frame.set(0, 1, 0, 12.5);
	frame.set(0, 2, 0, 480.0);
	frame.set(0, 0, 1, 3.0);
	const auto logged = log_transform(frame, {"y"});
	CHECK(logged.value(0, 0, 0) == std::log(kLogEpsilon));
	CHECK(logged.value(0, 1, 0) < logged.value(0, 2, 0));
	CHECK_FALSE(logged.observed(0, 1, 1));
	const auto back = inverse_log_transform(logged, {"y"});
	for (std::size_t t = 0; t < 3; ++t) {
		if (frame.observed(0, t, 0)) {
			CHECK(back.value(0, t, 0) == doctest::Approx(frame.value(0, t, 0)).epsilon(1e-12));
		}
	}
	frame.set(0, 1, 1, -0.5);
	CHECK_THROWS_AS(log_transform(frame, {"y"}), DataError);
}

TEST_CASE("masked cells cannot be read as data") {
	SpatioTemporalFrame frame({"y"}, TimeStamp{0}, 2, two_stations());
	CHECK_THROWS_AS(frame.value(0, 0, 0), DataError);
	CHECK(std::isnan(frame.raw(0, 0, 0)));
	CHECK_THROWS_AS(frame.set(0, 0, 0, std::nan("")), DataError);
}

TEST_CASE("read_frame_csv") {
	const std::string path = temp_path("read.csv");
	auto write = [&](const std::string &body) {
		std::ofstream out(path);
		out << "timestamp_utc,station_code,var,value\n" << body;
	};
	FrameSchema schema;
	schema.stations = two_stations();

	SUBCASE("empty value is missing") {
		write("2023-01-01T00:00Z,4,NO2,10\n2023-01-01T00:00Z,8,NO2,\n2023-01-01T01:00Z,4,NO2,12\n"
		      "2023-01-01T01:00Z,8,NO2,13\n");
		const auto f = read_frame_csv(path, schema);
		CHECK(f.hours() == 2);
		CHECK(f.value(0, 0, 0) == 10.0);
		CHECK_FALSE(f.observed(0, 0, 1));
		CHECK(f.value(0, 1, 1) == 13.0);
	}
	SUBCASE("duplicate row") {
		write("2023-01-01T00:00Z,4,NO2,10\n2023-01-01T00:00Z,4,NO2,11\n");
		CHECK_THROWS_AS(read_frame_csv(path, schema), DataError);
	}
	SUBCASE("hour gap") {
		write("2023-01-01T00:00Z,4,NO2,10\n2023-01-01T03:00Z,4,NO2,11\n");
		CHECK_THROWS_AS(read_frame_csv(path, schema), DataError);
		schema.fill_gaps_as_missing = true;
		const auto f = read_frame_csv(path, schema);
		CHECK(f.hours() == 4);
		CHECK_FALSE(f.observed(0, 1, 0));
		CHECK_FALSE(f.observed(0, 2, 0));
		CHECK(f.value(0, 3, 0) == 11.0);
	}
	SUBCASE("schema mismatch and bad timestamps") {
		{
			std::ofstream out(path);
			out << "time,station,value\n";
		}
		CHECK_THROWS_AS(read_frame_csv(path, schema), DataError);
		write("01/01/2023,4,NO2,10\n");
		CHECK_THROWS_AS(read_frame_csv(path, schema), DataError);
		write("2023-01-01T00:00Z,99,NO2,10\n");
		CHECK_THROWS_AS(read_frame_csv(path, schema), DataError);
	}
	std::remove(path.c_str());
}

TEST_CASE("frame binary serialization is bit-exact") {
	SyntheticSpec spec;
	spec.stations = 3;
	spec.days = 5;
	spec.sporadic_rate = 0.2;
	const auto data = synthetic_generate(spec);
	const std::string base = temp_path("frame");
	save_frame(data.observed_pollution, base);
	const auto back = load_frame(base);
	CHECK(back == data.observed_pollution);
	CHECK(back.missing_count() == data.observed_pollution.missing_count());

	const std::string csv = temp_path("frame.csv");
	write_frame_csv(data.observed_weather, csv);
	FrameSchema schema;
	schema.vars = data.observed_weather.var_names();
	schema.stations = data.stations;
	CHECK(read_frame_csv(csv, schema) == data.observed_weather);
	std::remove((base + ".json").c_str());
	std::remove((base + ".bin").c_str());
	std::remove(csv.c_str());
}

TEST_CASE("synthetic generator") {
	SyntheticSpec spec;
	spec.stations = 3;
	spec.days = 21;

	SUBCASE("closed form with stochastic terms off") {
		spec.coupling_wind = spec.coupling_blh = spec.coupling_precip = 0.0;
		spec.noise_sigma_regional = spec.noise_sigma_station = 0.0;
		spec.sporadic_rate = 0.0;
		const auto data = synthetic_generate(spec);
		const auto &truth = data.truth_pollution;
		for (std::size_t t = 0; t < truth.hours(); ++t) {
			for (std::size_t s = 0; s < truth.stations(); ++s) {
				const double expected = std::exp(synthetic_deterministic_log(spec, data.calendar, s, truth.time_at(t)));
				REQUIRE(truth.value(0, t, s) == expected);
			}
		}
		CHECK(data.observed_pollution.missing_count() == 0);
	}
	SUBCASE("same seed gives identical output, different seed differs") {
		const auto a = synthetic_generate(spec);
		const auto b = synthetic_generate(spec);
		CHECK(a.truth_pollution == b.truth_pollution);
		CHECK(a.observed_forecast == b.observed_forecast);
		spec.seed = 2;
		const auto c = synthetic_generate(spec);
		CHECK_FALSE(a.truth_pollution == c.truth_pollution);
	}
	SUBCASE("truth is strictly positive") {
		const auto data = synthetic_generate(spec);
		for (double v : data.truth_pollution.values()) {
			REQUIRE(v > 0.0);
		}
	}
	SUBCASE("sporadic missingness rate within a binomial interval") {
		spec.sporadic_rate = 0.1;
		const auto data = synthetic_generate(spec);
		const auto n = static_cast<double>(data.observed_pollution.values().size());
		const double observed = 1.0 - static_cast<double>(data.observed_pollution.missing_count()) / n;
		const double sd = std::sqrt(0.1 * 0.9 / n);
		CHECK(std::abs(observed - 0.9) < 4.0 * sd);
	}
	SUBCASE("non-positive dimensions") {
		spec.stations = 0;
		CHECK_THROWS_AS(synthetic_generate(spec), DataError);
	}
	SUBCASE("spec JSON round trip") {
		spec.holiday_offsets = {3, 10};
		const auto back = synthetic_spec_from_json(synthetic_spec_to_json(spec));
		CHECK(synthetic_spec_to_json(back) == synthetic_spec_to_json(spec));
	}
}

TEST_CASE("apply_scale_changes rescales only the configured span") {
	std::vector<StationMeta> st{{1, 0.0, 0.0, {Pollutant::NO2}, 1}};
	SpatioTemporalFrame f({"NO2", "other"}, TimeStamp{100}, 6, st);
	for (std::size_t t = 0; t < 6; ++t) {
		f.set(0, t, 0, 10.0);
		f.set(1, t, 0, 10.0);
	}
	f.set_missing(0, 3, 0);
	const auto g = apply_scale_changes(f, {{"NO2", TimeStamp{102}, TimeStamp{104}, 1.88}});
	CHECK(g.raw(0, 1, 0) == 10.0);
	CHECK(g.raw(0, 2, 0) == doctest::Approx(18.8));
	CHECK_FALSE(g.observed(0, 3, 0));
	CHECK(g.raw(0, 4, 0) == 10.0);
	CHECK(g.raw(1, 2, 0) == 10.0);
	CHECK_THROWS_AS(apply_scale_changes(f, {{"NO2", TimeStamp{0}, TimeStamp{1}, 0.0}}), DataError);
}
