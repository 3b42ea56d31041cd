#include "aqcast/timegrid.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace aqcast {

namespace {

using namespace std::chrono;

constexpr std::int64_t kHoursPerDay = 24;

std::int64_t days_since_epoch(Date date) { return date.time_since_epoch().count(); }

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
	std::int64_t q = a / b;
	if ((a % b != 0) && ((a < 0) != (b < 0))) {
		--q;
	}
	return q;
}

int whole_hours(int minutes) {
	if (minutes % 60 != 0) {
		throw CalendarError("timezone offsets must be whole hours, got " + std::to_string(minutes) + " minutes");
	}
	return minutes / 60;
}

int parse_int(const std::string &text, std::size_t pos, std::size_t len, const std::string &whole) {
	if (pos + len > text.size()) {
		throw CalendarError("truncated date/time: '" + whole + "'");
	}
	int value = 0;
	for (std::size_t i = pos; i < pos + len; ++i) {
		const char c = text[i];
		if (c < '0' || c > '9') {
			throw CalendarError("invalid digit in date/time: '" + whole + "'");
		}
		value = value * 10 + (c - '0');
	}
	return value;
}

SchoolKind school_kind_from_string(const std::string &name) {
	if (name == "full") return SchoolKind::Full;
	if (name == "reduced") return SchoolKind::Reduced;
	if (name == "none") return SchoolKind::None;
	throw CalendarError("unknown school kind: " + name);
}

const char *school_kind_name(SchoolKind kind) {
	switch (kind) {
	case SchoolKind::Full: return "full";
	case SchoolKind::Reduced: return "reduced";
	case SchoolKind::None: return "none";
	}
	return "none";
}

WindowKind window_kind_from_string(const std::string &name) {
	if (name == "departure-eve") return WindowKind::DepartureEve;
	if (name == "departure-morning") return WindowKind::DepartureMorning;
	if (name == "return-evening") return WindowKind::ReturnEvening;
	throw CalendarError("unknown travel window kind: " + name);
}

const char *window_kind_name(WindowKind kind) {
	switch (kind) {
	case WindowKind::DepartureEve: return "departure-eve";
	case WindowKind::DepartureMorning: return "departure-morning";
	case WindowKind::ReturnEvening: return "return-evening";
	}
	return "departure-eve";
}

// Bound on the scan for the ends of a non-working run.
constexpr int kMaxRunScan = 400;

} // namespace

// ---------------------------------------------------------------- time zones

bool TzRules::in_dst(TimeStamp utc) const {
	if (dst_offset_minutes == 0 || transitions.empty()) {
		return false;
	}
	// Number of transitions at or before utc; odd count means DST is active.
	const auto it = std::upper_bound(transitions.begin(), transitions.end(), utc);
	return (std::distance(transitions.begin(), it) % 2) == 1;
}

int TzRules::offset_hours(TimeStamp utc) const {
	return whole_hours(standard_offset_minutes) + (in_dst(utc) ? whole_hours(dst_offset_minutes) : 0);
}

TzRules TzRules::european(int standard_offset_minutes, int first_year, int last_year) {
	TzRules tz;
	tz.standard_offset_minutes = standard_offset_minutes;
	tz.dst_offset_minutes = 60;
	for (int y = first_year; y <= last_year; ++y) {
		for (unsigned m : {3U, 10U}) {
			const year_month_day_last last_of_month{year{y}, month_day_last{month{m}}};
			Date d{last_of_month};
			while (weekday{d} != Sunday) {
				d -= days{1};
			}
			tz.transitions.push_back(utc_from_civil(d, 1));
		}
	}
	return tz;
}

namespace {

struct Candidates {
	std::optional<TimeStamp> standard;
	std::optional<TimeStamp> daylight;
};

Candidates local_candidates(const LocalDateTime &local, const TzRules &tz) {
	const TimeStamp naive = utc_from_civil(local.date, local.hour);
	const int std_h = whole_hours(tz.standard_offset_minutes);
	const int dst_h = whole_hours(tz.dst_offset_minutes);
	Candidates out;
	const TimeStamp as_standard = naive - std_h;
	if (!tz.in_dst(as_standard)) {
		out.standard = as_standard;
	}
	if (dst_h != 0) {
		const TimeStamp as_daylight = naive - (std_h + dst_h);
		if (tz.in_dst(as_daylight)) {
			out.daylight = as_daylight;
		}
	}
	return out;
}

} // namespace

bool is_transition_hour(const LocalDateTime &local, const TzRules &tz) {
	const Candidates c = local_candidates(local, tz);
	return c.standard.has_value() == c.daylight.has_value();
}

TimeStamp local_to_utc(const LocalDateTime &local, const TzRules &tz, Disambiguation policy) {
	if (local.hour < 0 || local.hour > 23) {
		throw CalendarError("local hour out of range: " + std::to_string(local.hour));
	}
	const Candidates c = local_candidates(local, tz);
	if (!c.standard && !c.daylight) {
		throw NonexistentLocalTime("local time " + format_date(local.date) + " " + std::to_string(local.hour) +
		                           ":00 falls in a spring-forward gap");
	}
	if (c.standard && c.daylight) {
		switch (policy) {
		case Disambiguation::Earlier: return std::min(*c.standard, *c.daylight);
		case Disambiguation::Later: return std::max(*c.standard, *c.daylight);
		case Disambiguation::Reject:
			throw AmbiguousLocalTime("local time " + format_date(local.date) + " " + std::to_string(local.hour) +
			                         ":00 is ambiguous (fall-back overlap)");
		}
	}
	return c.standard ? *c.standard : *c.daylight;
}

LocalDateTime utc_to_local(TimeStamp utc, const TzRules &tz) {
	const TimeStamp shifted = utc + tz.offset_hours(utc);
	return {utc_date(shifted), utc_hour(shifted)};
}

TimeStamp utc_from_civil(Date date, int hour) { return {days_since_epoch(date) * kHoursPerDay + hour}; }

Date utc_date(TimeStamp ts) { return Date{days{floor_div(ts.utc_hour_index, kHoursPerDay)}}; }

int utc_hour(TimeStamp ts) {
	return static_cast<int>(ts.utc_hour_index - floor_div(ts.utc_hour_index, kHoursPerDay) * kHoursPerDay);
}

Date parse_date(const std::string &text) {
	if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
		throw CalendarError("expected YYYY-MM-DD, got '" + text + "'");
	}
	const year_month_day ymd{year{parse_int(text, 0, 4, text)},
	                         month{static_cast<unsigned>(parse_int(text, 5, 2, text))},
	                         day{static_cast<unsigned>(parse_int(text, 8, 2, text))}};
	if (!ymd.ok()) {
		throw CalendarError("invalid calendar date: '" + text + "'");
	}
	return Date{ymd};
}

std::string format_date(Date date) {
	const year_month_day ymd{date};
	char buf[16];
	std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
	              static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
	return buf;
}

TimeStamp parse_timestamp(const std::string &text) {
	if (text.size() < 13 || (text[10] != 'T' && text[10] != ' ')) {
		throw CalendarError("expected YYYY-MM-DDTHH[:MM[:SS]][Z], got '" + text + "'");
	}
	const Date date = parse_date(text.substr(0, 10));
	const int hour = parse_int(text, 11, 2, text);
	std::size_t pos = 13;
	for (int field = 0; field < 2 && pos < text.size() && text[pos] == ':'; ++field) {
		if (parse_int(text, pos + 1, 2, text) != 0) {
			throw CalendarError("timestamps must fall on whole hours: '" + text + "'");
		}
		pos += 3;
	}
	if (pos < text.size() && text[pos] == 'Z') {
		++pos;
	}
	if (pos != text.size() || hour > 23) {
		throw CalendarError("unparseable timestamp: '" + text + "'");
	}
	return utc_from_civil(date, hour);
}

std::string format_timestamp(TimeStamp ts) {
	char buf[8];
	std::snprintf(buf, sizeof(buf), "T%02d:00Z", utc_hour(ts));
	return format_date(utc_date(ts)) + buf;
}

int iso_weekday(Date date) { return static_cast<int>(weekday{date}.iso_encoding()); }

// ---------------------------------------------------------------- day types

const char *to_string(DayType type) {
	switch (type) {
	case DayType::Post: return "Post";
	case DayType::Ext: return "Ext";
	case DayType::Prev: return "Prev";
	case DayType::First: return "First";
	case DayType::Int: return "Int";
	case DayType::Last: return "Last";
	}
	return "?";
}

DayType day_type_from_string(const std::string &name) {
	for (int i = 0; i < kDayTypeCount; ++i) {
		const auto type = static_cast<DayType>(i);
		if (name == to_string(type)) {
			return type;
		}
	}
	throw CalendarError("unknown day type: " + name);
}

bool CalendarConfig::is_holiday(Date date, std::optional<int> station) const {
	if (holidays.contains(date)) {
		return true;
	}
	if (station) {
		const auto it = local_holidays.find(*station);
		return it != local_holidays.end() && it->second.contains(date);
	}
	return false;
}

bool CalendarConfig::is_working(Date date, std::optional<int> station) const {
	return !weekend_days.contains(iso_weekday(date)) && !is_holiday(date, station);
}

SchoolKind CalendarConfig::school_kind(Date date) const {
	for (const auto &period : school_periods) {
		if (date >= period.first && date <= period.last) {
			return period.kind;
		}
	}
	return SchoolKind::None;
}

void CalendarConfig::validate() const {
	if (coverage_last < coverage_first) {
		throw CalendarError("calendar coverage range is inverted");
	}
	std::vector<SchoolPeriod> sorted = school_periods;
	std::sort(sorted.begin(), sorted.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
	for (std::size_t i = 0; i < sorted.size(); ++i) {
		if (sorted[i].last < sorted[i].first) {
			throw CalendarError("school period " + format_date(sorted[i].first) + " is inverted");
		}
		if (i > 0 && sorted[i].first <= sorted[i - 1].last) {
			throw CalendarError("school periods overlap at " + format_date(sorted[i].first));
		}
	}
	if (isolated_holiday != DayType::First && isolated_holiday != DayType::Last) {
		throw CalendarError("isolated_holiday must be First or Last");
	}
	if (isolated_workday != DayType::Post && isolated_workday != DayType::Prev) {
		throw CalendarError("isolated_workday must be Post or Prev");
	}
}

int nonworking_run_length(Date date, const CalendarConfig &calendar, std::optional<int> station) {
	if (calendar.is_working(date, station)) {
		return 0;
	}
	int before = 0;
	while (before < kMaxRunScan && !calendar.is_working(date - days{before + 1}, station)) {
		++before;
	}
	int after = 0;
	while (after < kMaxRunScan && !calendar.is_working(date + days{after + 1}, station)) {
		++after;
	}
	return before + after + 1;
}

DayType classify_day(Date date, const CalendarConfig &calendar, std::optional<int> station) {
	if (!calendar.covers(date)) {
		throw CalendarError("date " + format_date(date) + " outside calendar coverage " +
		                    format_date(calendar.coverage_first) + ".." + format_date(calendar.coverage_last));
	}
	const bool prev_working = calendar.is_working(date - days{1}, station);
	const bool next_working = calendar.is_working(date + days{1}, station);
	if (calendar.is_working(date, station)) {
		if (!prev_working && !next_working) {
			return calendar.isolated_workday;
		}
		if (!prev_working) {
			return DayType::Post;
		}
		if (!next_working) {
			return DayType::Prev;
		}
		return DayType::Ext;
	}
	if (prev_working && next_working) {
		return calendar.isolated_holiday;
	}
	if (prev_working) {
		return DayType::First;
	}
	if (next_working) {
		return DayType::Last;
	}
	return DayType::Int;
}

// ---------------------------------------------------------------- features

const char *AnthroFeatures::column_name(Column column) {
	switch (column) {
	case Holiday: return "holiday";
	case Eve: return "eve";
	case Departure: return "departure";
	case Return: return "return";
	case SchoolFull: return "school_full";
	case SchoolReduced: return "school_reduced";
	case SchoolNone: return "school_none";
	case Workday: return "workday";
	case kColumnCount: break;
	}
	return "?";
}

AnthroFeatures anthro_features(Date first, Date last, const CalendarConfig &calendar, int station) {
	AnthroFeatures out;
	if (last < first) {
		return out;
	}
	if (!calendar.covers(first) || !calendar.covers(last)) {
		throw CalendarError("feature range " + format_date(first) + ".." + format_date(last) +
		                    " outside calendar coverage");
	}
	const TimeStamp begin = local_to_utc({first, 0}, calendar.tz, Disambiguation::Earlier);
	const TimeStamp end = local_to_utc({last + days{1}, 0}, calendar.tz, Disambiguation::Earlier);
	out.start = begin;
	const auto hours = static_cast<std::size_t>(end - begin);
	out.values.assign(hours * AnthroFeatures::kColumnCount, 0.0);

	const WindowHours &wh = calendar.window_hours;
	auto in_window = [&](Date local_date, int hour, Date window_date, WindowKind kind) {
		switch (kind) {
		case WindowKind::DepartureEve:
			return local_date == window_date && hour >= wh.departure_eve_start && hour <= wh.departure_eve_end;
		case WindowKind::DepartureMorning:
			return local_date == window_date && hour >= wh.departure_morning_start &&
			       hour <= wh.departure_morning_end;
		case WindowKind::ReturnEvening:
			return (local_date == window_date && hour >= wh.return_start) ||
			       (local_date == window_date + days{1} && hour < wh.return_end_next_day);
		}
		return false;
	};

	// Automatic windows around long non-working runs, plus explicit ones.
	std::vector<TravelWindow> windows = calendar.travel_windows;
	for (Date d = first - days{1}; d <= last + days{1}; d += days{1}) {
		const bool working = calendar.is_working(d, station);
		if (working && !calendar.is_working(d + days{1}, station) &&
		    nonworking_run_length(d + days{1}, calendar, station) >= calendar.long_weekend_min_length) {
			windows.push_back({d, WindowKind::DepartureEve});
		}
		if (!working && calendar.is_working(d + days{1}, station) &&
		    nonworking_run_length(d, calendar, station) >= calendar.long_weekend_min_length) {
			windows.push_back({d, WindowKind::ReturnEvening});
		}
	}

	for (std::size_t i = 0; i < hours; ++i) {
		const LocalDateTime local = utc_to_local(begin + static_cast<std::int64_t>(i), calendar.tz);
		double *row = &out.values[i * AnthroFeatures::kColumnCount];
		const bool working = calendar.is_working(local.date, station);
		row[AnthroFeatures::Holiday] = calendar.is_holiday(local.date, station) ? 1.0 : 0.0;
		row[AnthroFeatures::Eve] = calendar.special_eves.contains(local.date) ? 1.0 : 0.0;
		for (const auto &w : windows) {
			if (in_window(local.date, local.hour, w.date, w.kind)) {
				const auto col = w.kind == WindowKind::ReturnEvening ? AnthroFeatures::Return : AnthroFeatures::Departure;
				row[col] = 1.0;
			}
		}
		const SchoolKind school = working ? calendar.school_kind(local.date) : SchoolKind::None;
		row[AnthroFeatures::SchoolFull] = school == SchoolKind::Full ? 1.0 : 0.0;
		row[AnthroFeatures::SchoolReduced] = school == SchoolKind::Reduced ? 1.0 : 0.0;
		row[AnthroFeatures::SchoolNone] = school == SchoolKind::None ? 1.0 : 0.0;
		row[AnthroFeatures::Workday] = working ? 1.0 : 0.0;
	}
	return out;
}

// ---------------------------------------------------------------- JSON

CalendarConfig calendar_from_json(const nlohmann::json &doc) {
	CalendarConfig cal;
	const auto &coverage = doc.at("coverage");
	cal.coverage_first = parse_date(coverage.at(0).get<std::string>());
	cal.coverage_last = parse_date(coverage.at(1).get<std::string>());
	for (const auto &d : doc.value("holidays", nlohmann::json::array())) {
		cal.holidays.insert(parse_date(d.get<std::string>()));
	}
	for (const auto &d : doc.value("special_eves", nlohmann::json::array())) {
		cal.special_eves.insert(parse_date(d.get<std::string>()));
	}
	for (const auto &p : doc.value("school_periods", nlohmann::json::array())) {
		cal.school_periods.push_back({parse_date(p.at("from").get<std::string>()),
		                              parse_date(p.at("to").get<std::string>()),
		                              school_kind_from_string(p.at("kind").get<std::string>())});
	}
	for (const auto &w : doc.value("travel_windows", nlohmann::json::array())) {
		cal.travel_windows.push_back(
		    {parse_date(w.at("date").get<std::string>()), window_kind_from_string(w.at("kind").get<std::string>())});
	}
	if (doc.contains("local_holidays")) {
		for (const auto &[code, dates] : doc.at("local_holidays").items()) {
			auto &set = cal.local_holidays[std::stoi(code)];
			for (const auto &d : dates) {
				set.insert(parse_date(d.get<std::string>()));
			}
		}
	}
	if (doc.contains("weekend_days")) {
		cal.weekend_days = doc.at("weekend_days").get<std::set<int>>();
	}
	if (doc.contains("isolated_workday")) {
		cal.isolated_workday = day_type_from_string(doc.at("isolated_workday").get<std::string>());
	}
	if (doc.contains("isolated_holiday")) {
		cal.isolated_holiday = day_type_from_string(doc.at("isolated_holiday").get<std::string>());
	}
	cal.long_weekend_min_length = doc.value("long_weekend_min_length", cal.long_weekend_min_length);
	if (doc.contains("window_hours")) {
		const auto &w = doc.at("window_hours");
		auto &wh = cal.window_hours;
		wh.departure_eve_start = w.value("departure_eve_start", wh.departure_eve_start);
		wh.departure_eve_end = w.value("departure_eve_end", wh.departure_eve_end);
		wh.departure_morning_start = w.value("departure_morning_start", wh.departure_morning_start);
		wh.departure_morning_end = w.value("departure_morning_end", wh.departure_morning_end);
		wh.return_start = w.value("return_start", wh.return_start);
		wh.return_end_next_day = w.value("return_end_next_day", wh.return_end_next_day);
	}
	if (doc.contains("timezone")) {
		const auto &tz = doc.at("timezone");
		cal.tz.standard_offset_minutes = tz.value("standard_offset_minutes", 0);
		cal.tz.dst_offset_minutes = tz.value("dst_offset_minutes", 0);
		for (const auto &t : tz.value("transitions", nlohmann::json::array())) {
			cal.tz.transitions.push_back(parse_timestamp(t.get<std::string>()));
		}
		if (!std::is_sorted(cal.tz.transitions.begin(), cal.tz.transitions.end())) {
			throw CalendarError("timezone transitions must be sorted");
		}
	}
	cal.validate();
	return cal;
}

nlohmann::json calendar_to_json(const CalendarConfig &cal) {
	using nlohmann::json;
	json doc;
	doc["coverage"] = {format_date(cal.coverage_first), format_date(cal.coverage_last)};
	auto dates = [](const std::set<Date> &set) {
		json arr = json::array();
		for (const auto &d : set) {
			arr.push_back(format_date(d));
		}
		return arr;
	};
	doc["holidays"] = dates(cal.holidays);
	doc["special_eves"] = dates(cal.special_eves);
	doc["school_periods"] = json::array();
	for (const auto &p : cal.school_periods) {
		doc["school_periods"].push_back(
		    {{"from", format_date(p.first)}, {"to", format_date(p.last)}, {"kind", school_kind_name(p.kind)}});
	}
	doc["travel_windows"] = json::array();
	for (const auto &w : cal.travel_windows) {
		doc["travel_windows"].push_back({{"date", format_date(w.date)}, {"kind", window_kind_name(w.kind)}});
	}
	doc["local_holidays"] = json::object();
	for (const auto &[code, set] : cal.local_holidays) {
		doc["local_holidays"][std::to_string(code)] = dates(set);
	}
	doc["weekend_days"] = cal.weekend_days;
	doc["isolated_workday"] = to_string(cal.isolated_workday);
	doc["isolated_holiday"] = to_string(cal.isolated_holiday);
	doc["long_weekend_min_length"] = cal.long_weekend_min_length;
	const auto &wh = cal.window_hours;
	doc["window_hours"] = {{"departure_eve_start", wh.departure_eve_start},
	                       {"departure_eve_end", wh.departure_eve_end},
	                       {"departure_morning_start", wh.departure_morning_start},
	                       {"departure_morning_end", wh.departure_morning_end},
	                       {"return_start", wh.return_start},
	                       {"return_end_next_day", wh.return_end_next_day}};
	json transitions = json::array();
	for (const auto &t : cal.tz.transitions) {
		transitions.push_back(format_timestamp(t));
	}
	doc["timezone"] = {{"standard_offset_minutes", cal.tz.standard_offset_minutes},
	                   {"dst_offset_minutes", cal.tz.dst_offset_minutes},
	                   {"transitions", transitions}};
	return doc;
}

CalendarConfig load_calendar(const std::string &path) {
	std::ifstream in(path);
	if (!in) {
		throw CalendarError("cannot open calendar file: " + path);
	}
	return calendar_from_json(nlohmann::json::parse(in));
}

void save_calendar(const CalendarConfig &cal, const std::string &path) {
	std::ofstream out(path);
	if (!out) {
		throw CalendarError("cannot write calendar file: " + path);
	}
	out << calendar_to_json(cal).dump(2) << '\n';
}

} // namespace aqcast
