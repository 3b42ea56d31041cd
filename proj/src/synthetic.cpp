#include "aqcast/synthetic.hpp"

#include "aqcast/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace aqcast {

namespace {

using namespace std::chrono;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum Stream : std::uint64_t {
	kWeatherRegional = 1,
	kWeatherStation,
	kNwpNoise,
	kNoiseRegional,
	kNoiseStation,
	kNppBias,
	kNppNoise,
	kMaskPollution,
	kMaskWeather,
	kMaskForecast,
};

double station_base(const SyntheticSpec &spec, std::size_t s) {
	if (spec.stations == 1) {
		return spec.base_level;
	}
	const double frac = static_cast<double>(s) / static_cast<double>(spec.stations - 1);
	return spec.base_level + spec.base_spread * (2.0 * frac - 1.0);
}

void apply_missingness(SpatioTemporalFrame &frame, double sporadic, double block_rate, int block_min, int block_max,
                       NormalStream &rng) {
	for (std::size_t c = 0; c < frame.channels(); ++c) {
		for (std::size_t s = 0; s < frame.stations(); ++s) {
			std::size_t block_left = 0;
			for (std::size_t t = 0; t < frame.hours(); ++t) {
				if (block_left == 0 && block_rate > 0.0 && rng.uniform() < block_rate) {
					const auto span = static_cast<std::uint64_t>(block_max - block_min + 1);
					block_left = static_cast<std::size_t>(block_min) +
					             static_cast<std::size_t>(rng.engine()() % span);
				}
				const bool sporadic_hit = sporadic > 0.0 && rng.uniform() < sporadic;
				if (block_left > 0) {
					--block_left;
					frame.set_missing(c, t, s);
				} else if (sporadic_hit) {
					frame.set_missing(c, t, s);
				}
			}
		}
	}
}

} // namespace

void SyntheticSpec::validate() const {
	if (stations <= 0 || days <= 0 || zones <= 0) {
		throw DataError("synthetic spec: stations, days and zones must be positive");
	}
	if (zones > 5) {
		throw DataError("synthetic spec: at most 5 zones");
	}
	if (sporadic_rate < 0.0 || sporadic_rate >= 1.0 || weather_sporadic_rate < 0.0 || weather_sporadic_rate >= 1.0 ||
	    block_rate < 0.0 || block_rate >= 1.0) {
		throw DataError("synthetic spec: missingness rates must lie in [0, 1)");
	}
	if (block_min_hours < 1 || block_max_hours < block_min_hours) {
		throw DataError("synthetic spec: invalid block outage lengths");
	}
	for (double phi : {weather_phi, noise_phi, npp_bias_phi}) {
		if (phi < 0.0 || phi >= 1.0) {
			throw DataError("synthetic spec: AR coefficients must lie in [0, 1)");
		}
	}
}

CalendarConfig synthetic_calendar(const SyntheticSpec &spec) {
	CalendarConfig cal;
	const Date first = spec.start_date;
	const Date last = first + days{spec.days - 1};
	cal.coverage_first = first - days{21};
	cal.coverage_last = last + days{21};
	const int y0 = static_cast<int>(year_month_day{cal.coverage_first}.year());
	const int y1 = static_cast<int>(year_month_day{cal.coverage_last}.year());
	cal.tz = spec.daylight_saving ? TzRules::european(spec.standard_offset_minutes, y0, y1)
	                              : TzRules{spec.standard_offset_minutes, 0, {}};

	if (!spec.holiday_offsets.empty()) {
		for (int off : spec.holiday_offsets) {
			cal.holidays.insert(first + days{off});
		}
	} else if (spec.auto_holidays) {
		// Cycle of Monday, Friday, isolated Wednesday, Thursday+Friday bridge.
		int k = 0;
		for (int off = 12; off < spec.days + 14; off += 26, ++k) {
			Date d = first + days{off};
			const int want = std::array{1, 5, 3, 4}[static_cast<std::size_t>(k % 4)];
			while (iso_weekday(d) != want) {
				d += days{1};
			}
			cal.holidays.insert(d);
			if (want == 4) {
				cal.holidays.insert(d + days{1});
			}
			cal.special_eves.insert(d - days{1});
		}
	}

	// School year: full term, a spring break, reduced schedule near the end, then summer.
	const int n = spec.days;
	const auto at = [&](int off) { return first + days{off}; };
	if (n < 60) {
		cal.school_periods.push_back({cal.coverage_first, cal.coverage_last, SchoolKind::Full});
	} else {
		const int break_start = n * 45 / 100;
		const int break_end = break_start + 9;
		const int reduced_start = n * 80 / 100;
		const int summer_start = n * 90 / 100;
		cal.school_periods.push_back({cal.coverage_first, at(break_start - 1), SchoolKind::Full});
		cal.school_periods.push_back({at(break_start), at(break_end - 1), SchoolKind::None});
		cal.school_periods.push_back({at(break_end), at(reduced_start - 1), SchoolKind::Full});
		cal.school_periods.push_back({at(reduced_start), at(summer_start - 1), SchoolKind::Reduced});
		cal.school_periods.push_back({at(summer_start), cal.coverage_last, SchoolKind::None});
	}
	cal.validate();
	return cal;
}

double synthetic_deterministic_log(const SyntheticSpec &spec, const CalendarConfig &calendar, std::size_t station,
                                   TimeStamp utc) {
	const LocalDateTime local = utc_to_local(utc, calendar.tz);
	const double h = local.hour;
	const bool working = calendar.is_working(local.date);
	double cycle = spec.daily_amp1 * std::cos(kTwoPi * (h - spec.daily_peak1) / 24.0) +
	               spec.daily_amp2 * std::cos(2.0 * kTwoPi * (h - spec.daily_peak2) / 24.0);
	if (!working) {
		cycle *= 1.0 - spec.nonworking_cycle_damp;
	}
	const double week_hour = (iso_weekday(local.date) - 1) * 24.0 + h;
	double value = station_base(spec, station) + cycle + spec.weekly_amp * std::cos(kTwoPi * (week_hour - 60.0) / 168.0);
	if (!working) {
		value -= spec.dip_nonworking;
	}
	if (calendar.is_holiday(local.date)) {
		value -= spec.dip_holiday;
	}
	if (working) {
		const SchoolKind school = calendar.school_kind(local.date);
		if (school == SchoolKind::None) {
			value -= spec.dip_school_break;
		} else if (school == SchoolKind::Reduced) {
			value -= 0.5 * spec.dip_school_break;
		}
	}
	return value;
}

SyntheticData synthetic_generate(const SyntheticSpec &spec) {
	spec.validate();
	SyntheticData data;
	data.calendar = synthetic_calendar(spec);
	const CalendarConfig &cal = data.calendar;

	for (int s = 0; s < spec.stations; ++s) {
		StationMeta meta;
		meta.code = s + 1;
		meta.zone = 1 + s % spec.zones;
		meta.lon = -3.70 + 0.03 * std::cos(kTwoPi * s / spec.stations);
		meta.lat = 40.42 + 0.03 * std::sin(kTwoPi * s / spec.stations);
		data.stations.push_back(meta);
	}

	const TimeStamp start = local_to_utc({spec.start_date, 0}, cal.tz, Disambiguation::Earlier);
	const TimeStamp end = local_to_utc({spec.start_date + days{spec.days}, 0}, cal.tz, Disambiguation::Earlier);
	const auto T = static_cast<std::size_t>(end - start);
	const auto S = static_cast<std::size_t>(spec.stations);

	SpatioTemporalFrame truth({kPollutionVar}, start, T, data.stations);
	SpatioTemporalFrame weather(kWeatherVars, start, T, data.stations);
	SpatioTemporalFrame npp({kForecastVar}, start, T, data.stations);

	NormalStream weather_regional(stream_seed(spec.seed, kWeatherRegional));
	NormalStream weather_station(stream_seed(spec.seed, kWeatherStation));
	NormalStream nwp_noise(stream_seed(spec.seed, kNwpNoise));
	NormalStream noise_regional(stream_seed(spec.seed, kNoiseRegional));
	NormalStream noise_station(stream_seed(spec.seed, kNoiseStation));
	NormalStream npp_bias_rng(stream_seed(spec.seed, kNppBias));
	NormalStream npp_noise(stream_seed(spec.seed, kNppNoise));

	const double wphi = spec.weather_phi;
	const double winnov = std::sqrt(1.0 - wphi * wphi);
	std::array<double, 4> factor{};
	for (auto &f : factor) {
		f = weather_regional();
	}
	double regional_noise = 0.0;
	std::vector<double> station_noise(S, 0.0);
	const double stationary_reg = spec.noise_sigma_regional / std::sqrt(1.0 - spec.noise_phi * spec.noise_phi);
	const double stationary_sta = spec.noise_sigma_station / std::sqrt(1.0 - spec.noise_phi * spec.noise_phi);
	regional_noise = stationary_reg * noise_regional();
	for (auto &n : station_noise) {
		n = stationary_sta * noise_station();
	}
	std::vector<double> npp_bias(S, 0.0);

	for (std::size_t t = 0; t < T; ++t) {
		const TimeStamp ts = start + static_cast<std::int64_t>(t);
		const LocalDateTime local = utc_to_local(ts, cal.tz);
		const double h = local.hour;
		const double day_of_year = static_cast<double>((local.date - spec.start_date).count()) + 14.0;
		if (t > 0) {
			for (auto &f : factor) {
				f = wphi * f + winnov * weather_regional();
			}
			regional_noise = spec.noise_phi * regional_noise + spec.noise_sigma_regional * noise_regional();
			for (auto &n : station_noise) {
				n = spec.noise_phi * n + spec.noise_sigma_station * noise_station();
			}
		}
		for (std::size_t s = 0; s < S; ++s) {
			const double wind_anom = factor[0] + spec.weather_sigma * weather_station();
			const double blh_anom = factor[1] + spec.weather_sigma * weather_station();
			const double rain_drive = factor[2] + spec.weather_sigma * weather_station();
			const double temp_anom = factor[3] + spec.weather_sigma * weather_station();

			const double wind = std::exp(1.0 + 0.45 * wind_anom + 0.15 * std::cos(kTwoPi * (h - 15.0) / 24.0));
			const double blh = std::exp(6.3 + 0.35 * blh_anom + 0.6 * std::cos(kTwoPi * (h - 14.0) / 24.0));
			const double precip = std::max(0.0, rain_drive - 1.3) * 1.5;
			const double temp = 12.0 + 8.0 * std::sin(kTwoPi * (day_of_year - 100.0) / 365.25) +
			                    5.0 * std::cos(kTwoPi * (h - 15.0) / 24.0) + 3.0 * temp_anom;

			const double nwp = spec.nwp_noise;
			weather.set(0, t, s, wind * std::exp(nwp * nwp_noise()));
			weather.set(1, t, s, blh * std::exp(nwp * nwp_noise()));
			weather.set(2, t, s, std::max(0.0, precip + 1.5 * nwp * nwp_noise()));
			weather.set(3, t, s, temp + 5.0 * nwp * nwp_noise());

			double log_y = synthetic_deterministic_log(spec, cal, s, ts);
			log_y -= spec.coupling_wind * wind_anom;
			log_y -= spec.coupling_blh * blh_anom;
			log_y -= spec.coupling_precip * precip / 1.5;
			log_y += regional_noise + station_noise[s];
			const double y = std::exp(log_y);
			truth.set(0, t, s, y);

			npp_bias[s] = spec.npp_bias_phi * npp_bias[s] + spec.npp_bias_sigma * npp_bias_rng();
			npp.set(0, t, s, y * std::exp(npp_bias[s] + spec.npp_noise * npp_noise()));
		}
	}

	data.truth_pollution = truth;
	data.weather_forecast = weather;
	data.pollution_forecast = npp;

	NormalStream mask_pollution(stream_seed(spec.seed, kMaskPollution));
	NormalStream mask_weather(stream_seed(spec.seed, kMaskWeather));
	NormalStream mask_forecast(stream_seed(spec.seed, kMaskForecast));
	data.observed_pollution = truth;
	apply_missingness(data.observed_pollution, spec.sporadic_rate, spec.block_rate, spec.block_min_hours,
	                  spec.block_max_hours, mask_pollution);
	data.observed_weather = weather;
	apply_missingness(data.observed_weather, spec.weather_sporadic_rate, 0.0, 1, 1, mask_weather);
	data.observed_forecast = npp;
	apply_missingness(data.observed_forecast, spec.sporadic_rate, spec.block_rate, spec.block_min_hours,
	                  spec.block_max_hours, mask_forecast);
	return data;
}

// ---------------------------------------------------------------- JSON

SyntheticSpec synthetic_spec_from_json(const nlohmann::json &doc) {
	SyntheticSpec spec;
#define AQ_FIELD(name) spec.name = doc.value(#name, spec.name)
	AQ_FIELD(stations);
	AQ_FIELD(zones);
	AQ_FIELD(days);
	AQ_FIELD(standard_offset_minutes);
	AQ_FIELD(daylight_saving);
	AQ_FIELD(base_level);
	AQ_FIELD(base_spread);
	AQ_FIELD(daily_amp1);
	AQ_FIELD(daily_peak1);
	AQ_FIELD(daily_amp2);
	AQ_FIELD(daily_peak2);
	AQ_FIELD(weekly_amp);
	AQ_FIELD(weather_phi);
	AQ_FIELD(weather_sigma);
	AQ_FIELD(nwp_noise);
	AQ_FIELD(coupling_wind);
	AQ_FIELD(coupling_blh);
	AQ_FIELD(coupling_precip);
	AQ_FIELD(dip_nonworking);
	AQ_FIELD(dip_holiday);
	AQ_FIELD(dip_school_break);
	AQ_FIELD(nonworking_cycle_damp);
	AQ_FIELD(noise_phi);
	AQ_FIELD(noise_sigma_regional);
	AQ_FIELD(noise_sigma_station);
	AQ_FIELD(npp_bias_phi);
	AQ_FIELD(npp_bias_sigma);
	AQ_FIELD(npp_noise);
	AQ_FIELD(sporadic_rate);
	AQ_FIELD(weather_sporadic_rate);
	AQ_FIELD(block_rate);
	AQ_FIELD(block_min_hours);
	AQ_FIELD(block_max_hours);
	AQ_FIELD(holiday_offsets);
	AQ_FIELD(auto_holidays);
	AQ_FIELD(seed);
#undef AQ_FIELD
	if (doc.contains("start_date")) {
		spec.start_date = parse_date(doc.at("start_date").get<std::string>());
	}
	spec.validate();
	return spec;
}

nlohmann::json synthetic_spec_to_json(const SyntheticSpec &spec) {
	nlohmann::json doc;
#define AQ_FIELD(name) doc[#name] = spec.name
	AQ_FIELD(stations);
	AQ_FIELD(zones);
	AQ_FIELD(days);
	AQ_FIELD(standard_offset_minutes);
	AQ_FIELD(daylight_saving);
	AQ_FIELD(base_level);
	AQ_FIELD(base_spread);
	AQ_FIELD(daily_amp1);
	AQ_FIELD(daily_peak1);
	AQ_FIELD(daily_amp2);
	AQ_FIELD(daily_peak2);
	AQ_FIELD(weekly_amp);
	AQ_FIELD(weather_phi);
	AQ_FIELD(weather_sigma);
	AQ_FIELD(nwp_noise);
	AQ_FIELD(coupling_wind);
	AQ_FIELD(coupling_blh);
	AQ_FIELD(coupling_precip);
	AQ_FIELD(dip_nonworking);
	AQ_FIELD(dip_holiday);
	AQ_FIELD(dip_school_break);
	AQ_FIELD(nonworking_cycle_damp);
	AQ_FIELD(noise_phi);
	AQ_FIELD(noise_sigma_regional);
	AQ_FIELD(noise_sigma_station);
	AQ_FIELD(npp_bias_phi);
	AQ_FIELD(npp_bias_sigma);
	AQ_FIELD(npp_noise);
	AQ_FIELD(sporadic_rate);
	AQ_FIELD(weather_sporadic_rate);
	AQ_FIELD(block_rate);
	AQ_FIELD(block_min_hours);
	AQ_FIELD(block_max_hours);
	AQ_FIELD(holiday_offsets);
	AQ_FIELD(auto_holidays);
	AQ_FIELD(seed);
#undef AQ_FIELD
	doc["start_date"] = format_date(spec.start_date);
	return doc;
}

void inject_block_outages(SpatioTemporalFrame &frame, double fraction, int min_len, int max_len, std::uint64_t seed) {
	if (!(fraction >= 0.0 && fraction < 1.0) || min_len < 1 || max_len < min_len) {
		throw DataError("inject_block_outages: invalid arguments");
	}
	const std::size_t T = frame.hours();
	const auto target = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(T)));
	for (std::size_t c = 0; c < frame.channels(); ++c) {
		for (std::size_t s = 0; s < frame.stations(); ++s) {
			NormalStream rng(stream_seed(seed, c * 65537 + s));
			std::size_t missing = 0;
			for (std::size_t t = 0; t < T; ++t) {
				missing += frame.observed(c, t, s) ? 0 : 1;
			}
			while (missing < target) {
				const auto len = static_cast<std::size_t>(min_len) +
				                 static_cast<std::size_t>(rng.engine()() % static_cast<std::uint64_t>(max_len - min_len + 1));
				const auto start = static_cast<std::size_t>(rng.engine()() % T);
				for (std::size_t t = start; t < std::min(T, start + len) && missing < target; ++t) {
					if (frame.observed(c, t, s)) {
						frame.set_missing(c, t, s);
						++missing;
					}
				}
			}
		}
	}
}

} // namespace aqcast
