#include "aqcast/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

namespace aqcast {

namespace {

constexpr double kEarthRadiusKm = 6371.0088;

std::uint64_t to_little_endian(std::uint64_t bits) {
	if constexpr (std::endian::native == std::endian::big) {
		return __builtin_bswap64(bits);
	}
	return bits;
}

std::vector<std::string> split_csv_line(const std::string &line) {
	std::vector<std::string> fields;
	std::string field;
	std::istringstream in(line);
	while (std::getline(in, field, ',')) {
		fields.push_back(field);
	}
	if (!line.empty() && line.back() == ',') {
		fields.emplace_back();
	}
	return fields;
}

std::string trim(std::string s) {
	const auto not_space = [](unsigned char c) { return !std::isspace(c); };
	s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
	s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
	return s;
}

} // namespace

const char *to_string(Pollutant p) {
	switch (p) {
	case Pollutant::NO2: return "NO2";
	case Pollutant::O3: return "O3";
	case Pollutant::PM10: return "PM10";
	case Pollutant::PM25: return "PM25";
	}
	return "?";
}

Pollutant pollutant_from_string(const std::string &name) {
	for (auto p : {Pollutant::NO2, Pollutant::O3, Pollutant::PM10, Pollutant::PM25}) {
		if (name == to_string(p)) {
			return p;
		}
	}
	throw DataError("unknown pollutant: " + name);
}

void validate_stations(std::span<const StationMeta> stations) {
	std::set<int> codes;
	for (const auto &s : stations) {
		if (!codes.insert(s.code).second) {
			throw DataError("duplicate station code " + std::to_string(s.code));
		}
		if (s.zone < 1 || s.zone > 5) {
			throw DataError("station " + std::to_string(s.code) + " has zone outside 1..5");
		}
	}
}

// ---------------------------------------------------------------- MaskedSeries

MaskedSeries::MaskedSeries(std::vector<double> full) : values(std::move(full)), observed(values.size(), 1) {}

MaskedSeries::MaskedSeries(std::vector<double> v, std::vector<std::uint8_t> m)
    : values(std::move(v)), observed(std::move(m)) {
	if (values.size() != observed.size()) {
		throw DataError("series values and mask differ in length");
	}
	for (std::size_t t = 0; t < values.size(); ++t) {
		if (!observed[t]) {
			values[t] = kMissing;
		}
	}
}

std::size_t MaskedSeries::observed_count() const {
	return static_cast<std::size_t>(std::count_if(observed.begin(), observed.end(), [](auto m) { return m != 0; }));
}

// ---------------------------------------------------------------- frame

SpatioTemporalFrame::SpatioTemporalFrame(std::vector<std::string> var_names, TimeStamp start, std::size_t hours,
                                         std::vector<StationMeta> stations)
    : var_names_(std::move(var_names)), start_(start), hours_(hours), stations_(std::move(stations)) {
	validate_stations(stations_);
	std::set<std::string> unique(var_names_.begin(), var_names_.end());
	if (unique.size() != var_names_.size()) {
		throw DataError("duplicate variable names in frame");
	}
	const std::size_t n = var_names_.size() * hours_ * stations_.size();
	values_.assign(n, kMissing);
	mask_.assign(n, 0);
}

std::size_t SpatioTemporalFrame::offset_of(TimeStamp ts) const {
	const std::int64_t off = ts - start_;
	if (off < 0 || off >= static_cast<std::int64_t>(hours_)) {
		throw DataError("timestamp " + format_timestamp(ts) + " outside frame time axis");
	}
	return static_cast<std::size_t>(off);
}

std::size_t SpatioTemporalFrame::var_index(const std::string &name) const {
	const auto it = std::find(var_names_.begin(), var_names_.end(), name);
	if (it == var_names_.end()) {
		throw DataError("unknown variable '" + name + "'");
	}
	return static_cast<std::size_t>(it - var_names_.begin());
}

bool SpatioTemporalFrame::has_var(const std::string &name) const {
	return std::find(var_names_.begin(), var_names_.end(), name) != var_names_.end();
}

std::size_t SpatioTemporalFrame::station_index(int code) const {
	for (std::size_t s = 0; s < stations_.size(); ++s) {
		if (stations_[s].code == code) {
			return s;
		}
	}
	throw DataError("unknown station code " + std::to_string(code));
}

double SpatioTemporalFrame::value(std::size_t c, std::size_t t, std::size_t s) const {
	const std::size_t i = index(c, t, s);
	if (!mask_[i]) {
		throw DataError("read of masked cell (" + var_names_[c] + ", " + format_timestamp(time_at(t)) + ", station " +
		                std::to_string(stations_[s].code) + ")");
	}
	return values_[i];
}

void SpatioTemporalFrame::set(std::size_t c, std::size_t t, std::size_t s, double v) {
	if (!std::isfinite(v)) {
		throw DataError("non-finite value written to frame channel " + var_names_[c]);
	}
	const std::size_t i = index(c, t, s);
	values_[i] = v;
	mask_[i] = 1;
}

void SpatioTemporalFrame::set_missing(std::size_t c, std::size_t t, std::size_t s) {
	const std::size_t i = index(c, t, s);
	values_[i] = kMissing;
	mask_[i] = 0;
}

MaskedSeries SpatioTemporalFrame::series(std::size_t c, std::size_t s) const {
	std::vector<double> v(hours_);
	std::vector<std::uint8_t> m(hours_);
	for (std::size_t t = 0; t < hours_; ++t) {
		v[t] = values_[index(c, t, s)];
		m[t] = mask_[index(c, t, s)];
	}
	return {std::move(v), std::move(m)};
}

void SpatioTemporalFrame::set_series(std::size_t c, std::size_t s, const MaskedSeries &series) {
	if (series.size() != hours_) {
		throw DataError("series length does not match frame hours");
	}
	for (std::size_t t = 0; t < hours_; ++t) {
		if (series.is_observed(t)) {
			set(c, t, s, series.values[t]);
		} else {
			set_missing(c, t, s);
		}
	}
}

SpatioTemporalFrame SpatioTemporalFrame::select(const std::vector<std::string> &names) const {
	SpatioTemporalFrame out(names, start_, hours_, stations_);
	for (std::size_t k = 0; k < names.size(); ++k) {
		const std::size_t c = var_index(names[k]);
		std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(index(c, 0, 0)), hours_ * stations(),
		            out.values_.begin() + static_cast<std::ptrdiff_t>(out.index(k, 0, 0)));
		std::copy_n(mask_.begin() + static_cast<std::ptrdiff_t>(index(c, 0, 0)), hours_ * stations(),
		            out.mask_.begin() + static_cast<std::ptrdiff_t>(out.index(k, 0, 0)));
	}
	return out;
}

SpatioTemporalFrame SpatioTemporalFrame::slice_hours(std::size_t first, std::size_t count) const {
	if (first + count > hours_) {
		throw DataError("hour slice exceeds frame length");
	}
	SpatioTemporalFrame out(var_names_, time_at(first), count, stations_);
	for (std::size_t c = 0; c < channels(); ++c) {
		for (std::size_t t = 0; t < count; ++t) {
			for (std::size_t s = 0; s < stations(); ++s) {
				out.values_[out.index(c, t, s)] = values_[index(c, first + t, s)];
				out.mask_[out.index(c, t, s)] = mask_[index(c, first + t, s)];
			}
		}
	}
	return out;
}

SpatioTemporalFrame SpatioTemporalFrame::concat(const SpatioTemporalFrame &other) const {
	if (other.start_ != start_ || other.hours_ != hours_ || other.stations_ != stations_) {
		throw DataError("cannot concatenate frames with different axes");
	}
	std::vector<std::string> names = var_names_;
	names.insert(names.end(), other.var_names_.begin(), other.var_names_.end());
	SpatioTemporalFrame out(names, start_, hours_, stations_);
	std::copy(values_.begin(), values_.end(), out.values_.begin());
	std::copy(mask_.begin(), mask_.end(), out.mask_.begin());
	std::copy(other.values_.begin(), other.values_.end(), out.values_.begin() + static_cast<std::ptrdiff_t>(values_.size()));
	std::copy(other.mask_.begin(), other.mask_.end(), out.mask_.begin() + static_cast<std::ptrdiff_t>(mask_.size()));
	return out;
}

std::size_t SpatioTemporalFrame::missing_count() const {
	return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{0}));
}

bool operator==(const SpatioTemporalFrame &a, const SpatioTemporalFrame &b) {
	if (a.var_names_ != b.var_names_ || a.start_ != b.start_ || a.hours_ != b.hours_ || a.stations_ != b.stations_ ||
	    a.mask_ != b.mask_) {
		return false;
	}
	// Bitwise comparison so that NaN sentinels compare equal.
	return std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------- geometry

double great_circle_km(double lon1, double lat1, double lon2, double lat2) {
	constexpr double rad = std::numbers::pi / 180.0;
	const double dlat = (lat2 - lat1) * rad;
	const double dlon = (lon2 - lon1) * rad;
	const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
	                 std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
	return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

std::size_t nearest_grid_point(const StationMeta &station, std::span<const GridNode> grid) {
	if (grid.empty()) {
		throw DataError("nearest_grid_point: empty grid");
	}
	std::size_t best = 0;
	double best_d = great_circle_km(station.lon, station.lat, grid[0].lon, grid[0].lat);
	for (std::size_t i = 1; i < grid.size(); ++i) {
		const double d = great_circle_km(station.lon, station.lat, grid[i].lon, grid[i].lat);
		// Sub-millimetre differences count as ties.
		if (d < best_d - 1e-9) {
			best = i;
			best_d = d;
		}
	}
	return best;
}

GridPointMap map_stations_to_grid(std::span<const StationMeta> stations, std::vector<GridNode> grid) {
	GridPointMap map;
	map.nodes = std::move(grid);
	for (const auto &s : stations) {
		map.station_node.push_back(nearest_grid_point(s, map.nodes));
	}
	return map;
}

Wind derive_wind(double u, double v) {
	Wind w;
	w.speed = std::hypot(u, v);
	if (w.speed == 0.0) {
		return w;
	}
	// (u, v) is the vector the air moves along; the bearing it comes from is opposite.
	double deg = std::atan2(-u, -v) * 180.0 / std::numbers::pi;
	if (deg < 0.0) {
		deg += 360.0;
	}
	if (deg >= 360.0) {
		deg -= 360.0;
	}
	w.direction = deg;
	return w;
}

// ---------------------------------------------------------------- transforms

SpatioTemporalFrame add_lags(const SpatioTemporalFrame &frame, const std::string &var, int max_lag) {
	if (max_lag < 1) {
		throw DataError("add_lags: max_lag must be >= 1");
	}
	const std::size_t c = frame.var_index(var);
	std::vector<std::string> names;
	for (int lag = 1; lag <= max_lag; ++lag) {
		names.push_back(var + "_lag" + std::to_string(lag));
	}
	SpatioTemporalFrame lags(names, frame.start(), frame.hours(), frame.station_meta());
	for (int lag = 1; lag <= max_lag; ++lag) {
		const auto L = static_cast<std::size_t>(lag);
		for (std::size_t t = L; t < frame.hours(); ++t) {
			for (std::size_t s = 0; s < frame.stations(); ++s) {
				if (frame.observed(c, t - L, s)) {
					lags.set(L - 1, t, s, frame.value(c, t - L, s));
				}
			}
		}
	}
	return frame.concat(lags);
}

SpatioTemporalFrame log_transform(const SpatioTemporalFrame &frame, const std::vector<std::string> &vars,
                                  double epsilon) {
	SpatioTemporalFrame out = frame;
	for (const auto &name : vars) {
		const std::size_t c = frame.var_index(name);
		for (std::size_t t = 0; t < frame.hours(); ++t) {
			for (std::size_t s = 0; s < frame.stations(); ++s) {
				if (!frame.observed(c, t, s)) {
					continue;
				}
				const double y = frame.value(c, t, s);
				if (y < 0.0) {
					throw DataError("log_transform: negative value in '" + name + "'");
				}
				out.set(c, t, s, std::log(y + epsilon));
			}
		}
	}
	return out;
}

SpatioTemporalFrame inverse_log_transform(const SpatioTemporalFrame &frame, const std::vector<std::string> &vars,
                                          double epsilon) {
	SpatioTemporalFrame out = frame;
	for (const auto &name : vars) {
		const std::size_t c = frame.var_index(name);
		for (std::size_t t = 0; t < frame.hours(); ++t) {
			for (std::size_t s = 0; s < frame.stations(); ++s) {
				if (frame.observed(c, t, s)) {
					out.set(c, t, s, std::exp(frame.value(c, t, s)) - epsilon);
				}
			}
		}
	}
	return out;
}

// ---------------------------------------------------------------- CSV

SpatioTemporalFrame read_frame_csv(const std::string &path, const FrameSchema &schema) {
	std::ifstream in(path);
	if (!in) {
		throw DataError("cannot open " + path);
	}
	std::string line;
	if (!std::getline(in, line)) {
		throw DataError(path + ": empty file");
	}
	if (trim(line) != "timestamp_utc,station_code,var,value") {
		throw DataError(path + ": schema mismatch, expected header 'timestamp_utc,station_code,var,value'");
	}

	struct Row {
		TimeStamp ts;
		int station;
		std::string var;
		std::optional<double> value;
	};
	std::vector<Row> rows;
	std::set<std::tuple<std::int64_t, int, std::string>> seen;
	std::size_t line_no = 1;
	while (std::getline(in, line)) {
		++line_no;
		if (trim(line).empty()) {
			continue;
		}
		const auto fields = split_csv_line(trim(line));
		if (fields.size() != 4) {
			throw DataError(path + ":" + std::to_string(line_no) + ": expected 4 fields");
		}
		Row row;
		try {
			row.ts = parse_timestamp(trim(fields[0]));
		} catch (const CalendarError &e) {
			throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
		}
		try {
			row.station = std::stoi(trim(fields[1]));
		} catch (const std::exception &) {
			throw DataError(path + ":" + std::to_string(line_no) + ": bad station code '" + fields[1] + "'");
		}
		row.var = trim(fields[2]);
		const std::string value = trim(fields[3]);
		if (!value.empty()) {
			std::size_t used = 0;
			try {
				row.value = std::stod(value, &used);
			} catch (const std::exception &) {
				used = 0;
			}
			if (used != value.size() || !std::isfinite(*row.value)) {
				throw DataError(path + ":" + std::to_string(line_no) + ": bad value '" + value + "'");
			}
		}
		if (!seen.emplace(row.ts.utc_hour_index, row.station, row.var).second) {
			throw DataError(path + ":" + std::to_string(line_no) + ": duplicate row for " + format_timestamp(row.ts) +
			                ", station " + std::to_string(row.station) + ", var " + row.var);
		}
		rows.push_back(std::move(row));
	}
	if (rows.empty()) {
		throw DataError(path + ": no data rows");
	}

	std::vector<std::string> vars = schema.vars;
	if (vars.empty()) {
		std::set<std::string> found;
		for (const auto &r : rows) {
			found.insert(r.var);
		}
		vars.assign(found.begin(), found.end());
	}
	std::vector<StationMeta> stations = schema.stations;
	if (stations.empty()) {
		std::set<int> found;
		for (const auto &r : rows) {
			found.insert(r.station);
		}
		for (int code : found) {
			StationMeta meta;
			meta.code = code;
			stations.push_back(meta);
		}
	}

	std::set<std::int64_t> hours;
	for (const auto &r : rows) {
		hours.insert(r.ts.utc_hour_index);
	}
	const TimeStamp first{*hours.begin()};
	const auto span = static_cast<std::size_t>(*hours.rbegin() - *hours.begin() + 1);
	if (span != hours.size() && !schema.fill_gaps_as_missing) {
		throw DataError(path + ": time axis is not contiguous hourly (" + std::to_string(span - hours.size()) +
		                " hours absent)");
	}

	SpatioTemporalFrame frame(vars, first, span, stations);
	for (const auto &r : rows) {
		const auto c = std::find(vars.begin(), vars.end(), r.var);
		if (c == vars.end()) {
			throw DataError(path + ": variable '" + r.var + "' not in schema");
		}
		const std::size_t s = frame.station_index(r.station);
		if (r.value) {
			frame.set(static_cast<std::size_t>(c - vars.begin()), frame.offset_of(r.ts), s, *r.value);
		}
	}
	return frame;
}

void write_frame_csv(const SpatioTemporalFrame &frame, const std::string &path) {
	std::ofstream out(path);
	if (!out) {
		throw DataError("cannot write " + path);
	}
	out << "timestamp_utc,station_code,var,value\n";
	out.precision(17);
	for (std::size_t t = 0; t < frame.hours(); ++t) {
		for (std::size_t s = 0; s < frame.stations(); ++s) {
			for (std::size_t c = 0; c < frame.channels(); ++c) {
				out << format_timestamp(frame.time_at(t)) << ',' << frame.station_meta()[s].code << ','
				    << frame.var_names()[c] << ',';
				if (frame.observed(c, t, s)) {
					out << frame.value(c, t, s);
				}
				out << '\n';
			}
		}
	}
}

// ---------------------------------------------------------------- binary

nlohmann::json station_to_json(const StationMeta &meta) {
	nlohmann::json pollutants = nlohmann::json::array();
	for (auto p : meta.pollutants) {
		pollutants.push_back(to_string(p));
	}
	return {{"code", meta.code}, {"lon", meta.lon}, {"lat", meta.lat}, {"zone", meta.zone}, {"pollutants", pollutants}};
}

StationMeta station_from_json(const nlohmann::json &doc) {
	StationMeta meta;
	meta.code = doc.at("code").get<int>();
	meta.lon = doc.value("lon", 0.0);
	meta.lat = doc.value("lat", 0.0);
	meta.zone = doc.value("zone", 1);
	if (doc.contains("pollutants")) {
		meta.pollutants.clear();
		for (const auto &p : doc.at("pollutants")) {
			meta.pollutants.insert(pollutant_from_string(p.get<std::string>()));
		}
	}
	return meta;
}

void save_frame(const SpatioTemporalFrame &frame, const std::string &base) {
	nlohmann::json header;
	header["format"] = "aqcast-frame";
	header["version"] = 1;
	header["epoch"] = "1970-01-01T00:00Z";
	header["start"] = format_timestamp(frame.start());
	header["start_hour_index"] = frame.start().utc_hour_index;
	header["dims"] = {frame.channels(), frame.hours(), frame.stations()};
	header["var_names"] = frame.var_names();
	header["layout"] = "values float64 little-endian [C][T][S], then mask uint8 [C][T][S]";
	header["stations"] = nlohmann::json::array();
	for (const auto &s : frame.station_meta()) {
		header["stations"].push_back(station_to_json(s));
	}
	{
		std::ofstream out(base + ".json");
		if (!out) {
			throw DataError("cannot write " + base + ".json");
		}
		out << header.dump(2) << '\n';
	}
	std::ofstream bin(base + ".bin", std::ios::binary);
	if (!bin) {
		throw DataError("cannot write " + base + ".bin");
	}
	for (double v : frame.values()) {
		const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
		bin.write(reinterpret_cast<const char *>(&bits), sizeof(bits));
	}
	bin.write(reinterpret_cast<const char *>(frame.mask().data()), static_cast<std::streamsize>(frame.mask().size()));
}

SpatioTemporalFrame load_frame(const std::string &base) {
	std::ifstream in(base + ".json");
	if (!in) {
		throw DataError("cannot open " + base + ".json");
	}
	const auto header = nlohmann::json::parse(in);
	if (header.value("format", "") != "aqcast-frame") {
		throw DataError(base + ".json is not a frame header");
	}
	std::vector<StationMeta> stations;
	for (const auto &s : header.at("stations")) {
		stations.push_back(station_from_json(s));
	}
	const auto dims = header.at("dims").get<std::vector<std::size_t>>();
	const auto names = header.at("var_names").get<std::vector<std::string>>();
	SpatioTemporalFrame frame(names, TimeStamp{header.at("start_hour_index").get<std::int64_t>()}, dims.at(1),
	                          stations);
	if (dims.at(0) != names.size() || dims.at(2) != stations.size()) {
		throw DataError(base + ".json: inconsistent dims");
	}
	std::ifstream bin(base + ".bin", std::ios::binary);
	if (!bin) {
		throw DataError("cannot open " + base + ".bin");
	}
	const std::size_t n = frame.values().size();
	std::vector<double> values(n);
	for (auto &v : values) {
		std::uint64_t bits = 0;
		bin.read(reinterpret_cast<char *>(&bits), sizeof(bits));
		v = std::bit_cast<double>(to_little_endian(bits));
	}
	std::vector<std::uint8_t> mask(n);
	bin.read(reinterpret_cast<char *>(mask.data()), static_cast<std::streamsize>(n));
	if (!bin || bin.peek() != std::char_traits<char>::eof()) {
		throw DataError(base + ".bin: payload size does not match header");
	}
	for (std::size_t c = 0; c < frame.channels(); ++c) {
		for (std::size_t t = 0; t < frame.hours(); ++t) {
			for (std::size_t s = 0; s < frame.stations(); ++s) {
				const std::size_t i = (c * frame.hours() + t) * frame.stations() + s;
				if (mask[i]) {
					frame.set(c, t, s, values[i]);
				}
			}
		}
	}
	return frame;
}

SpatioTemporalFrame apply_scale_changes(const SpatioTemporalFrame &frame, const std::vector<ScaleChange> &changes) {
	SpatioTemporalFrame out = frame;
	for (const auto &ch : changes) {
		if (!std::isfinite(ch.factor) || ch.factor <= 0.0) {
			throw DataError("scale change factor must be positive: " + ch.var);
		}
		const std::size_t c = frame.var_index(ch.var);
		for (std::size_t t = 0; t < frame.hours(); ++t) {
			const TimeStamp ts = frame.time_at(t);
			if (ts < ch.from || !(ts < ch.to)) {
				continue;
			}
			for (std::size_t s = 0; s < frame.stations(); ++s) {
				if (out.observed(c, t, s)) {
					out.set(c, t, s, out.raw(c, t, s) * ch.factor);
				}
			}
		}
	}
	return out;
}

} // namespace aqcast
