#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace aqcast {

using Date = std::chrono::sys_days;

/// Hours since 1970-01-01T00:00 UTC.
struct TimeStamp {
	std::int64_t utc_hour_index = 0;

	friend auto operator<=>(const TimeStamp &, const TimeStamp &) = default;
	TimeStamp operator+(std::int64_t hours) const { return {utc_hour_index + hours}; }
	TimeStamp operator-(std::int64_t hours) const { return {utc_hour_index - hours}; }
	std::int64_t operator-(const TimeStamp &other) const { return utc_hour_index - other.utc_hour_index; }
};

struct LocalDateTime {
	Date date;
	int hour = 0;

	friend bool operator==(const LocalDateTime &, const LocalDateTime &) = default;
};

class CalendarError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class NonexistentLocalTime : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class AmbiguousLocalTime : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Fixed standard offset plus a DST shift that is active between pairs of
/// UTC transition instants: [t0, t1), [t2, t3), ...
struct TzRules {
	int standard_offset_minutes = 0;
	int dst_offset_minutes = 0;
	std::vector<TimeStamp> transitions;

	bool in_dst(TimeStamp utc) const;
	int offset_hours(TimeStamp utc) const;

	/// EU convention: DST from last Sunday of March 01:00 UTC to last Sunday of October 01:00 UTC.
	static TzRules european(int standard_offset_minutes, int first_year, int last_year);
};

enum class Disambiguation { Reject, Earlier, Later };

/// True when the local hour falls in a spring-forward gap or a fall-back overlap.
bool is_transition_hour(const LocalDateTime &local, const TzRules &tz);

TimeStamp local_to_utc(const LocalDateTime &local, const TzRules &tz,
                       Disambiguation policy = Disambiguation::Reject);
LocalDateTime utc_to_local(TimeStamp utc, const TzRules &tz);

TimeStamp utc_from_civil(Date date, int hour);
Date utc_date(TimeStamp ts);
int utc_hour(TimeStamp ts);

/// ISO-8601 "YYYY-MM-DD".
Date parse_date(const std::string &text);
std::string format_date(Date date);
/// Accepts "YYYY-MM-DDTHH:MM[:SS][Z]" or with a space separator; minutes and seconds must be zero.
TimeStamp parse_timestamp(const std::string &text);
std::string format_timestamp(TimeStamp ts);

/// ISO weekday, Monday = 1 .. Sunday = 7.
int iso_weekday(Date date);

enum class DayType { Post, Ext, Prev, First, Int, Last };
inline constexpr int kDayTypeCount = 6;

const char *to_string(DayType type);
DayType day_type_from_string(const std::string &name);

enum class SchoolKind { Full, Reduced, None };

enum class WindowKind { DepartureEve, DepartureMorning, ReturnEvening };

struct SchoolPeriod {
	Date first;
	Date last;
	SchoolKind kind = SchoolKind::Full;
};

struct TravelWindow {
	Date date;
	WindowKind kind = WindowKind::DepartureEve;
};

struct WindowHours {
	int departure_eve_start = 17;
	int departure_eve_end = 23;       // inclusive
	int departure_morning_start = 8;
	int departure_morning_end = 11;   // inclusive
	int return_start = 17;
	int return_end_next_day = 1;      // exclusive, hour on the following day
};

struct CalendarConfig {
	Date coverage_first;
	Date coverage_last;
	std::set<Date> holidays;
	std::set<Date> special_eves;
	std::vector<SchoolPeriod> school_periods;
	std::vector<TravelWindow> travel_windows;
	/// Extra holidays that apply only to one station.
	std::map<int, std::set<Date>> local_holidays;
	std::set<int> weekend_days{6, 7};
	DayType isolated_workday = DayType::Post;
	DayType isolated_holiday = DayType::Last;
	/// Runs of at least this many non-working days get automatic departure/return windows.
	int long_weekend_min_length = 3;
	WindowHours window_hours;
	TzRules tz;

	bool covers(Date date) const { return date >= coverage_first && date <= coverage_last; }
	bool is_holiday(Date date, std::optional<int> station = std::nullopt) const;
	bool is_working(Date date, std::optional<int> station = std::nullopt) const;
	SchoolKind school_kind(Date date) const;

	/// Throws CalendarError when school periods overlap or the coverage range is inverted.
	void validate() const;
};

CalendarConfig calendar_from_json(const nlohmann::json &doc);
nlohmann::json calendar_to_json(const CalendarConfig &cal);
CalendarConfig load_calendar(const std::string &path);
void save_calendar(const CalendarConfig &cal, const std::string &path);

/// Classification from the working status of the date and its neighbours plus
/// the position of the date inside its maximal non-working run.
DayType classify_day(Date date, const CalendarConfig &calendar,
                     std::optional<int> station = std::nullopt);

/// Length of the maximal non-working run containing `date` (0 for working days).
int nonworking_run_length(Date date, const CalendarConfig &calendar,
                          std::optional<int> station = std::nullopt);

struct AnthroFeatures {
	enum Column {
		Holiday,
		Eve,
		Departure,
		Return,
		SchoolFull,
		SchoolReduced,
		SchoolNone,
		Workday,
		kColumnCount
	};

	TimeStamp start;
	/// Row-major [hours x kColumnCount].
	std::vector<double> values;

	std::size_t hours() const { return values.size() / kColumnCount; }
	double at(std::size_t hour, Column column) const { return values[hour * kColumnCount + column]; }
	static const char *column_name(Column column);
};

/// Hourly features for local dates [first, last] inclusive. Rows are indexed by
/// consecutive UTC hours starting at local midnight of `first`.
AnthroFeatures anthro_features(Date first, Date last, const CalendarConfig &calendar, int station);

} // namespace aqcast
