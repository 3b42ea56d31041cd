#pragma once

#include "aqcast/dataset.hpp"
#include "aqcast/timegrid.hpp"

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace aqcast {

/// Parameters of the synthetic city. Log-concentration of station s at hour t is
///   base_s + daily + weekly + coupling . weather + calendar dips + AR noise
/// and the concentration is its exponential.
struct SyntheticSpec {
	int stations = 6;
	int zones = 2;
	int days = 180;
	Date start_date = Date{std::chrono::year{2023} / 1 / 2};
	int standard_offset_minutes = 60;
	bool daylight_saving = true;

	double base_level = 3.7;
	double base_spread = 0.25;
	/// Cosine amplitudes/phases (peak local hour) of daily harmonics 1 and 2.
	double daily_amp1 = 0.35;
	double daily_peak1 = 9.0;
	double daily_amp2 = 0.25;
	double daily_peak2 = 20.0;
	double weekly_amp = 0.05;

	// Weather: AR(1) regional factors plus station-level noise.
	double weather_phi = 0.985;
	double weather_sigma = 0.12;
	double nwp_noise = 0.05;

	// Coupling of log-concentration to standardized weather anomalies.
	double coupling_wind = 0.25;
	double coupling_blh = 0.15;
	double coupling_precip = 0.10;

	// Calendar effects (log units, negative = cleaner air).
	double dip_nonworking = 0.35;
	double dip_holiday = 0.10;
	double dip_school_break = 0.08;
	/// Reduction of the daily-harmonic amplitude on non-working days (fraction).
	double nonworking_cycle_damp = 0.5;

	// Noise: regional AR(1) shared by all stations plus station AR(1).
	double noise_phi = 0.92;
	double noise_sigma_regional = 0.07;
	double noise_sigma_station = 0.06;

	// Numerical pollution prediction: truth times exp(smooth bias + noise).
	double npp_bias_phi = 0.995;
	double npp_bias_sigma = 0.01;
	double npp_noise = 0.15;

	// Missingness.
	double sporadic_rate = 0.01;
	double weather_sporadic_rate = 0.005;
	/// Probability per hour that a block outage starts (pollution and NPP only).
	double block_rate = 0.0;
	int block_min_hours = 12;
	int block_max_hours = 96;

	/// Holidays as day offsets from start_date; empty means an automatic pattern.
	std::vector<int> holiday_offsets;
	bool auto_holidays = true;

	std::uint64_t seed = 1;

	void validate() const;
};

SyntheticSpec synthetic_spec_from_json(const nlohmann::json &doc);
nlohmann::json synthetic_spec_to_json(const SyntheticSpec &spec);

struct SyntheticData {
	CalendarConfig calendar;
	std::vector<StationMeta> stations;
	SpatioTemporalFrame truth_pollution;   // var "NO2"
	SpatioTemporalFrame weather_forecast;  // vars wind_speed, blh, precip, temperature
	SpatioTemporalFrame pollution_forecast; // var "NO2_npp"
	SpatioTemporalFrame observed_pollution;
	SpatioTemporalFrame observed_weather;
	SpatioTemporalFrame observed_forecast;
};

inline const std::vector<std::string> kWeatherVars{"wind_speed", "blh", "precip", "temperature"};
inline const std::string kPollutionVar = "NO2";
inline const std::string kForecastVar = "NO2_npp";

SyntheticData synthetic_generate(const SyntheticSpec &spec);

/// Deterministic log-concentration without weather coupling or noise; the closed
/// form used when every stochastic term is switched off.
double synthetic_deterministic_log(const SyntheticSpec &spec, const CalendarConfig &calendar, std::size_t station,
                                   TimeStamp utc);

/// Calendar the generator builds for a spec (holidays, school periods, time zone).
CalendarConfig synthetic_calendar(const SyntheticSpec &spec);

/// Masks whole blocks of [min_len, max_len] hours in every series of `frame` until
/// at least `fraction` of its cells are missing.
void inject_block_outages(SpatioTemporalFrame &frame, double fraction, int min_len, int max_len, std::uint64_t seed);

} // namespace aqcast
