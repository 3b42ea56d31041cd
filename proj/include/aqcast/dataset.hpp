#pragma once

#include "aqcast/timegrid.hpp"

#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace aqcast {

class DataError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

enum class Pollutant { NO2, O3, PM10, PM25 };

const char *to_string(Pollutant p);
Pollutant pollutant_from_string(const std::string &name);

struct StationMeta {
	int code = 0;
	double lon = 0.0;
	double lat = 0.0;
	std::set<Pollutant> pollutants{Pollutant::NO2};
	int zone = 1;

	friend bool operator==(const StationMeta &, const StationMeta &) = default;
};

/// Throws DataError on duplicate codes or zones outside 1..5.
void validate_stations(std::span<const StationMeta> stations);

/// A univariate hourly series with an observation mask. Missing cells hold NaN.
struct MaskedSeries {
	std::vector<double> values;
	std::vector<std::uint8_t> observed;

	MaskedSeries() = default;
	explicit MaskedSeries(std::vector<double> full);
	MaskedSeries(std::vector<double> v, std::vector<std::uint8_t> m);

	std::size_t size() const { return values.size(); }
	bool is_observed(std::size_t t) const { return observed[t] != 0; }
	std::size_t observed_count() const;
	bool complete() const { return observed_count() == size(); }
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// C variables x T hours x S stations with an observation mask. Cells that are
/// not observed always carry NaN.
class SpatioTemporalFrame {
public:
	SpatioTemporalFrame() = default;
	SpatioTemporalFrame(std::vector<std::string> var_names, TimeStamp start, std::size_t hours,
	                    std::vector<StationMeta> stations);

	std::size_t channels() const { return var_names_.size(); }
	std::size_t hours() const { return hours_; }
	std::size_t stations() const { return stations_.size(); }
	TimeStamp start() const { return start_; }
	TimeStamp time_at(std::size_t t) const { return start_ + static_cast<std::int64_t>(t); }
	/// Hour offset of `ts` inside the frame; throws when outside.
	std::size_t offset_of(TimeStamp ts) const;

	const std::vector<std::string> &var_names() const { return var_names_; }
	const std::vector<StationMeta> &station_meta() const { return stations_; }
	std::size_t var_index(const std::string &name) const;
	bool has_var(const std::string &name) const;
	std::size_t station_index(int code) const;

	bool observed(std::size_t c, std::size_t t, std::size_t s) const { return mask_[index(c, t, s)] != 0; }
	/// Value of an observed cell; throws DataError when the cell is masked.
	double value(std::size_t c, std::size_t t, std::size_t s) const;
	/// Raw storage access; masked cells read as NaN.
	double raw(std::size_t c, std::size_t t, std::size_t s) const { return values_[index(c, t, s)]; }

	void set(std::size_t c, std::size_t t, std::size_t s, double v);
	void set_missing(std::size_t c, std::size_t t, std::size_t s);

	MaskedSeries series(std::size_t c, std::size_t s) const;
	void set_series(std::size_t c, std::size_t s, const MaskedSeries &series);

	/// New frame holding the given channels (by name) in the given order.
	SpatioTemporalFrame select(const std::vector<std::string> &names) const;
	/// New frame holding hours [first, first + count).
	SpatioTemporalFrame slice_hours(std::size_t first, std::size_t count) const;
	/// Appends channels of another frame with an identical time axis and station list.
	SpatioTemporalFrame concat(const SpatioTemporalFrame &other) const;

	std::size_t missing_count() const;
	std::span<const double> values() const { return values_; }
	std::span<const std::uint8_t> mask() const { return mask_; }

	friend bool operator==(const SpatioTemporalFrame &, const SpatioTemporalFrame &);

private:
	std::size_t index(std::size_t c, std::size_t t, std::size_t s) const {
		return (c * hours_ + t) * stations_.size() + s;
	}

	std::vector<std::string> var_names_;
	TimeStamp start_;
	std::size_t hours_ = 0;
	std::vector<StationMeta> stations_;
	std::vector<double> values_;
	std::vector<std::uint8_t> mask_;
};

struct GridNode {
	double lon = 0.0;
	double lat = 0.0;
};

/// Haversine distance in kilometres.
double great_circle_km(double lon1, double lat1, double lon2, double lat2);

/// Index of the nearest grid node; ties go to the lowest index.
std::size_t nearest_grid_point(const StationMeta &station, std::span<const GridNode> grid);

struct GridPointMap {
	std::vector<GridNode> nodes;
	std::vector<std::size_t> station_node;
};

GridPointMap map_stations_to_grid(std::span<const StationMeta> stations, std::vector<GridNode> grid);

struct Wind {
	double speed = 0.0;
	/// Meteorological bearing the wind blows FROM, degrees in [0, 360).
	double direction = 0.0;
};

Wind derive_wind(double u, double v);

/// Adds channels `<var>_lag1` .. `<var>_lag<max_lag>`.
SpatioTemporalFrame add_lags(const SpatioTemporalFrame &frame, const std::string &var, int max_lag = 4);

inline constexpr double kLogEpsilon = 1.0;

SpatioTemporalFrame log_transform(const SpatioTemporalFrame &frame, const std::vector<std::string> &vars,
                                  double epsilon = kLogEpsilon);
SpatioTemporalFrame inverse_log_transform(const SpatioTemporalFrame &frame, const std::vector<std::string> &vars,
                                          double epsilon = kLogEpsilon);

/// Per-deployment unit harmonisation: values of `var` at hours in [from, to) are multiplied by `factor`.
struct ScaleChange {
	std::string var;
	TimeStamp from;
	TimeStamp to;
	double factor = 1.0;
};

SpatioTemporalFrame apply_scale_changes(const SpatioTemporalFrame &frame, const std::vector<ScaleChange> &changes);

struct FrameSchema {
	/// Expected variables in channel order; empty means "discover from file" (sorted).
	std::vector<std::string> vars;
	/// Station metadata in station order; empty means "discover codes from file" (sorted).
	std::vector<StationMeta> stations;
	/// Insert all-missing rows for hours absent from the file instead of rejecting.
	bool fill_gaps_as_missing = false;
};

/// Long-format CSV: `timestamp_utc,station_code,var,value`, empty value = missing.
SpatioTemporalFrame read_frame_csv(const std::string &path, const FrameSchema &schema);
void write_frame_csv(const SpatioTemporalFrame &frame, const std::string &path);

/// `<base>.json` header plus `<base>.bin` payload (little-endian float64 values then mask bytes).
void save_frame(const SpatioTemporalFrame &frame, const std::string &base);
SpatioTemporalFrame load_frame(const std::string &base);

nlohmann::json station_to_json(const StationMeta &meta);
StationMeta station_from_json(const nlohmann::json &doc);

} // namespace aqcast
