#include "aqcast/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace aqcast {

namespace {

constexpr const char *kDriverNames[kDriverCount] = {
    "nned",         "nned_tue",         "nned_wed", "nned_thu", "inertia_24", "inertia_48", "correction_24",
    "correction_48", "short_inertia", "short_correction", "protocol", "workday",  "school",
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

} // namespace

const char *to_string(Driver d) { return kDriverNames[static_cast<std::size_t>(d)]; }

int driver_sign(Driver d) {
	switch (d) {
	case Driver::Correction24:
	case Driver::Correction48:
	case Driver::ShortCorrection:
	case Driver::Protocol:
	case Driver::School:
		return -1;
	default:
		return 1;
	}
}

DriverSet build_drivers(const DriverContext &ctx, std::size_t origin, std::span<const double> nned_log) {
	if (!ctx.calendar) {
		throw ChainError("build_drivers: calendar required");
	}
	if (origin >= ctx.y_log.size()) {
		throw ChainError("build_drivers: origin outside the series");
	}
	if (origin + 1 < 49) {
		std::ostringstream msg;
		msg << "build_drivers: missing history at lags";
		for (std::size_t k = origin + 2; k <= 49; ++k) {
			msg << ' ' << k;
		}
		throw ChainError(msg.str());
	}
	const auto &cal = *ctx.calendar;
	const std::size_t H = nned_log.size();
	auto y_at = [&](std::size_t u) { return u <= origin ? ctx.y_log[u] : nned_log[u - origin - 1]; };
	auto e_at = [&](std::size_t u) {
		if (ctx.errors.empty() || u > origin || std::isnan(ctx.errors[u])) {
			return 0.0;
		}
		return ctx.errors[u];
	};
	auto mean3 = [](auto f, std::size_t t, std::size_t lag) { return (f(t - lag + 1) + f(t - lag) + f(t - lag - 1)) / 3.0; };

	DriverSet out;
	for (std::size_t h = 1; h <= H; ++h) {
		const std::size_t t = origin + h;
		const TimeStamp ts = ctx.frame_start + static_cast<std::int64_t>(t);
		const Date date = utc_to_local(ts, cal.tz).date;
		const DayType dt = classify_day(date, cal, ctx.station_code);
		DriverRow row{};
		const double nn = nned_log[h - 1];
		if (dt == DayType::Ext) {
			const int wd = iso_weekday(date);
			const Driver col = wd <= 2 ? Driver::NnedTue : wd == 3 ? Driver::NnedWed : Driver::NnedThu;
			row[static_cast<std::size_t>(col)] = nn;
		} else {
			row[static_cast<std::size_t>(Driver::Nned)] = nn;
		}
		row[static_cast<std::size_t>(Driver::Inertia24)] = mean3(y_at, t, 24);
		row[static_cast<std::size_t>(Driver::Inertia48)] = mean3(y_at, t, 48);
		row[static_cast<std::size_t>(Driver::Correction24)] = mean3(e_at, t, 24);
		row[static_cast<std::size_t>(Driver::Correction48)] = mean3(e_at, t, 48);
		if (h <= static_cast<std::size_t>(ctx.morning_horizons)) {
			row[static_cast<std::size_t>(Driver::ShortInertia)] = ctx.y_log[origin];
			row[static_cast<std::size_t>(Driver::ShortCorrection)] = e_at(origin);
		}
		if (!ctx.protocol.empty() && t < ctx.protocol.size()) {
			row[static_cast<std::size_t>(Driver::Protocol)] = ctx.protocol[t];
		}
		if (dt == DayType::Int && !cal.is_holiday(date, ctx.station_code)) {
			row[static_cast<std::size_t>(Driver::Workday)] = 1.0;
		}
		const SchoolKind sk = cal.school_kind(date);
		row[static_cast<std::size_t>(Driver::School)] = sk == SchoolKind::Full ? 0.0 : sk == SchoolKind::Reduced ? 0.5 : 1.0;
		out.hours.push_back(ts);
		out.day_types.push_back(dt);
		out.rows.push_back(row);
	}
	return out;
}

std::size_t issue_origin(const ChainInputs &in, const ChainConfig &cfg, Date issue) {
	if (!in.pollution || !in.calendar) {
		throw ChainError("issue_origin: pollution and calendar required");
	}
	const TimeStamp ts = local_to_utc({issue, cfg.origin_hour}, in.calendar->tz, Disambiguation::Earlier);
	const std::size_t o = in.pollution->offset_of(ts);
	if (o + static_cast<std::size_t>(cfg.horizons) >= in.pollution->hours()) {
		throw ChainError("issue_origin: forecast window leaves the frame on " + format_date(issue));
	}
	return o;
}

namespace {

struct DayPlan {
	Date issue;
	std::size_t origin = 0;
	std::vector<double> nned; // [T_out][S]
};

std::vector<DayPlan> plan_days(const ChainInputs &in, const ChainConfig &cfg, Date first, Date last) {
	if (!in.pollution || !in.weather || !in.forecast || !in.calendar || !in.nned) {
		throw ChainError("chain: pollution, weather, forecast, calendar and NNED model are required");
	}
	if (in.nned->config.T_out < cfg.horizons) {
		throw ChainError("chain: NNED output shorter than the forecast horizon");
	}
	if (last < first) {
		throw ChainError("chain: empty date range");
	}
	const NnedInputs ni{in.pollution, in.weather, in.forecast};
	std::vector<DayPlan> days;
	for (Date d = first; d <= last; d += std::chrono::days{1}) {
		DayPlan p;
		p.issue = d;
		p.origin = issue_origin(in, cfg, d);
		p.nned = nned_predict(*in.nned, nned_raw_input(in.nned->config, ni, p.origin));
		days.push_back(std::move(p));
	}
	return days;
}

std::vector<double> station_log(const SpatioTemporalFrame &f, std::size_t s) {
	std::vector<double> y(f.hours());
	for (std::size_t t = 0; t < y.size(); ++t) {
		const double v = f.raw(0, t, s);
		if (std::isnan(v)) {
			throw ChainError("chain: pollution frame must be complete");
		}
		y[t] = std::log(std::max(v, 0.0) + 1.0);
	}
	return y;
}

std::vector<double> station_nned(const DayPlan &p, std::size_t S, std::size_t s, int horizons) {
	std::vector<double> out(static_cast<std::size_t>(horizons));
	for (std::size_t h = 0; h < out.size(); ++h) {
		out[h] = p.nned[h * S + s];
	}
	return out;
}

struct StationContext {
	std::vector<double> y_log;
	std::vector<double> protocol;
	DriverContext ctx;
};

StationContext station_context(const ChainInputs &in, const ChainConfig &cfg, std::size_t s) {
	StationContext sc;
	sc.y_log = station_log(*in.pollution, s);
	if (in.protocol) {
		sc.protocol.resize(in.protocol->hours());
		for (std::size_t t = 0; t < sc.protocol.size(); ++t) {
			const double v = in.protocol->raw(0, t, s);
			sc.protocol[t] = std::isnan(v) ? 0.0 : v;
		}
	}
	sc.ctx.y_log = sc.y_log;
	sc.ctx.protocol = sc.protocol;
	sc.ctx.calendar = in.calendar;
	sc.ctx.frame_start = in.pollution->start();
	sc.ctx.station_code = in.pollution->station_meta()[s].code;
	sc.ctx.morning_horizons = cfg.morning_horizons;
	return sc;
}

template <class Model>
const Model &model_for(const std::map<DayType, Model> &m, DayType dt) {
	const auto it = m.find(dt);
	if (it == m.end()) {
		throw ChainError(std::string("chain: no fitted model for day type ") + to_string(dt));
	}
	return it->second;
}

std::vector<double> predict(const std::map<DayType, FslrModel> &models, const DriverSet &ds) {
	std::vector<double> out(ds.rows.size());
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = fslr_predict(model_for(models, ds.day_types[i]), ds.rows[i]);
	}
	return out;
}

struct RowBank {
	std::vector<DriverRow> rows;
	std::vector<double> target;
	std::vector<DayType> types;

	void add(const DriverSet &ds, std::span<const double> y_log, std::size_t origin) {
		for (std::size_t i = 0; i < ds.rows.size(); ++i) {
			rows.push_back(ds.rows[i]);
			target.push_back(y_log[origin + 1 + i]);
			types.push_back(ds.day_types[i]);
		}
	}
};

std::map<DayType, FslrModel> fit_by_type(const RowBank &bank, std::size_t min_rows) {
	std::map<DayType, FslrModel> out;
	const FslrModel pooled = [&] {
		auto m = fslr_fit(bank.rows, bank.target);
		m.pooled = true;
		return m;
	}();
	for (std::size_t k = 0; k < kDayTypeCount; ++k) {
		const auto dt = static_cast<DayType>(k);
		std::vector<DriverRow> rows;
		std::vector<double> target;
		for (std::size_t i = 0; i < bank.rows.size(); ++i) {
			if (bank.types[i] == dt) {
				rows.push_back(bank.rows[i]);
				target.push_back(bank.target[i]);
			}
		}
		out[dt] = rows.size() >= min_rows ? fslr_fit(rows, target) : pooled;
	}
	return out;
}

std::size_t fslr_min_rows(const ChainConfig &cfg) { return std::max<std::size_t>(cfg.fslr_rows_factor * kDriverCount, 100); }

/// Error series from consecutive day tiles (horizons 1..24), NaN elsewhere.
void write_tile(std::vector<double> &e, std::span<const double> y_log, std::size_t origin, std::span<const double> pred) {
	for (std::size_t h = 0; h < 24 && h < pred.size(); ++h) {
		e[origin + 1 + h] = y_log[origin + 1 + h] - pred[h];
	}
}

std::vector<double> history(const std::vector<double> &e, std::size_t from, std::size_t origin) {
	std::vector<double> out;
	if (origin < from) {
		return out;
	}
	for (std::size_t t = from; t <= origin; ++t) {
		out.push_back(std::isnan(e[t]) ? 0.0 : e[t]);
	}
	return out;
}

} // namespace

ChainModel chain_fit(const ChainInputs &in, Date first_issue, Date last_issue, const ChainConfig &cfg) {
	const auto days = plan_days(in, cfg, first_issue, last_issue);
	const std::size_t S = in.pollution->stations();
	const std::size_t T = in.pollution->hours();
	ChainModel model;
	model.config = cfg;
	model.fit_first = first_issue;
	model.fit_last = last_issue;
	const std::size_t start = days.front().origin + 1;

	for (std::size_t s = 0; s < S; ++s) {
		auto sc = station_context(in, cfg, s);
		StationChain st;
		st.station = sc.ctx.station_code;
		std::vector<std::vector<double>> nn(days.size());
		for (std::size_t d = 0; d < days.size(); ++d) {
			nn[d] = station_nned(days[d], S, s, cfg.horizons);
		}

		RowBank base_bank;
		std::vector<DriverSet> base_sets;
		for (std::size_t d = 0; d < days.size(); ++d) {
			base_sets.push_back(build_drivers(sc.ctx, days[d].origin, nn[d]));
			base_bank.add(base_sets.back(), sc.y_log, days[d].origin);
		}
		st.base = fit_by_type(base_bank, fslr_min_rows(cfg));

		std::vector<double> e_base(T, kNaN);
		for (std::size_t d = 0; d < days.size(); ++d) {
			write_tile(e_base, sc.y_log, days[d].origin, predict(st.base, base_sets[d]));
		}

		sc.ctx.errors = e_base;
		RowBank full_bank;
		std::vector<DriverSet> full_sets;
		for (std::size_t d = 0; d < days.size(); ++d) {
			full_sets.push_back(build_drivers(sc.ctx, days[d].origin, nn[d]));
			full_bank.add(full_sets.back(), sc.y_log, days[d].origin);
		}
		st.full = fit_by_type(full_bank, fslr_min_rows(cfg));

		std::vector<std::vector<double>> full_pred(days.size());
		std::vector<double> e_full(T, kNaN);
		for (std::size_t d = 0; d < days.size(); ++d) {
			full_pred[d] = predict(st.full, full_sets[d]);
			write_tile(e_full, sc.y_log, days[d].origin, full_pred[d]);
		}
		const auto series = history(e_full, start, std::min(T - 1, days.back().origin + 24));
		st.arfima = arfima_fit(series, cfg.arfima_M);

		auto qr_pred = full_pred;
		auto e_qr = e_full;
		const auto folds = static_cast<std::size_t>(std::max(cfg.qr_folds, 1));
		if (folds > 1 && days.size() >= 2 * folds) {
			for (std::size_t k = 0; k < folds; ++k) {
				const std::size_t lo = k * days.size() / folds;
				const std::size_t hi = (k + 1) * days.size() / folds;
				RowBank bank;
				for (std::size_t d = 0; d < days.size(); ++d) {
					if (d < lo || d >= hi) {
						bank.add(full_sets[d], sc.y_log, days[d].origin);
					}
				}
				const auto held = fit_by_type(bank, fslr_min_rows(cfg));
				for (std::size_t d = lo; d < hi; ++d) {
					qr_pred[d] = predict(held, full_sets[d]);
					write_tile(e_qr, sc.y_log, days[d].origin, qr_pred[d]);
				}
			}
		}

		std::vector<double> pts;
		std::vector<double> obs;
		std::vector<DayType> types;
		for (std::size_t d = 0; d < days.size(); ++d) {
			const auto hist = history(e_qr, start, days[d].origin);
			const auto af = arfima_forecast(st.arfima, hist, static_cast<std::size_t>(cfg.horizons));
			for (std::size_t h = 0; h < qr_pred[d].size(); ++h) {
				pts.push_back(std::exp(qr_pred[d][h] + af[h]) - 1.0);
				obs.push_back(in.pollution->raw(0, days[d].origin + 1 + h, s));
				types.push_back(full_sets[d].day_types[h]);
			}
		}
		QrModel pooled = qr_fit(pts, obs);
		pooled.pooled = true;
		for (std::size_t k = 0; k < kDayTypeCount; ++k) {
			const auto dt = static_cast<DayType>(k);
			std::vector<double> x;
			std::vector<double> y;
			for (std::size_t i = 0; i < pts.size(); ++i) {
				if (types[i] == dt) {
					x.push_back(pts[i]);
					y.push_back(obs[i]);
				}
			}
			st.qr[dt] = x.size() >= cfg.qr_min_samples ? qr_fit(x, y) : pooled;
		}
		model.stations.push_back(std::move(st));
	}
	return model;
}

std::vector<QuantileForecast> chain_forecast(const ChainModel &model, const ChainInputs &in, Date first, Date last) {
	const auto &cfg = model.config;
	if (first < model.fit_first) {
		throw ChainError("chain_forecast: range starts before the fitted window");
	}
	const auto days = plan_days(in, cfg, model.fit_first, last);
	const std::size_t S = in.pollution->stations();
	const std::size_t T = in.pollution->hours();
	const std::size_t start = days.front().origin + 1;
	std::vector<QuantileForecast> out;
	for (std::size_t s = 0; s < S; ++s) {
		auto sc = station_context(in, cfg, s);
		const auto it = std::find_if(model.stations.begin(), model.stations.end(),
		                             [&](const StationChain &c) { return c.station == sc.ctx.station_code; });
		if (it == model.stations.end()) {
			throw ChainError("chain_forecast: no chain for station " + std::to_string(sc.ctx.station_code));
		}
		const StationChain &st = *it;
		std::vector<double> e_base(T, kNaN);
		std::vector<double> e_full(T, kNaN);
		for (const auto &day : days) {
			const auto nn = station_nned(day, S, s, cfg.horizons);
			sc.ctx.errors = {};
			const auto base_set = build_drivers(sc.ctx, day.origin, nn);
			const auto base_pred = predict(st.base, base_set);
			sc.ctx.errors = e_base;
			const auto full_set = build_drivers(sc.ctx, day.origin, nn);
			const auto full_pred = predict(st.full, full_set);
			if (day.issue >= first) {
				const auto af = arfima_forecast(st.arfima, history(e_full, start, day.origin),
				                                static_cast<std::size_t>(cfg.horizons));
				QuantileForecast fc;
				fc.station = st.station;
				fc.issue = day.issue;
				fc.hours = full_set.hours;
				fc.day_types = full_set.day_types;
				for (std::size_t h = 0; h < full_pred.size(); ++h) {
					const double point = std::exp(full_pred[h] + af[h]) - 1.0;
					fc.point.push_back(point);
					fc.q.push_back(monotone_repair(qr_predict(model_for(st.qr, full_set.day_types[h]), point)));
				}
				out.push_back(std::move(fc));
			}
			write_tile(e_base, sc.y_log, day.origin, base_pred);
			write_tile(e_full, sc.y_log, day.origin, full_pred);
		}
	}
	std::stable_sort(out.begin(), out.end(), [](const QuantileForecast &a, const QuantileForecast &b) {
		return a.issue < b.issue;
	});
	return out;
}

namespace {

nlohmann::json fslr_json(const FslrModel &m) {
	nlohmann::json beta = nlohmann::json::object();
	for (std::size_t k = 0; k < kDriverCount; ++k) {
		beta[kDriverNames[k]] = m.beta[k];
	}
	return {{"intercept", m.intercept}, {"beta", beta}, {"rows", m.rows}, {"pooled", m.pooled}};
}

FslrModel fslr_from(const nlohmann::json &j) {
	FslrModel m;
	m.intercept = j.at("intercept").get<double>();
	for (std::size_t k = 0; k < kDriverCount; ++k) {
		m.beta[k] = j.at("beta").at(kDriverNames[k]).get<double>();
	}
	m.rows = j.at("rows").get<std::size_t>();
	m.pooled = j.at("pooled").get<bool>();
	return m;
}

nlohmann::json qr_json(const QrModel &m) {
	nlohmann::json a = nlohmann::json::array();
	nlohmann::json b = nlohmann::json::array();
	nlohmann::json c = nlohmann::json::array();
	for (const auto &l : m.lines) {
		a.push_back(l.intercept);
		b.push_back(l.slope);
		c.push_back(l.converged);
	}
	return {{"intercept", a}, {"slope", b}, {"converged", c}, {"samples", m.samples}, {"pooled", m.pooled}};
}

QrModel qr_from(const nlohmann::json &j) {
	QrModel m;
	for (std::size_t k = 0; k < m.lines.size(); ++k) {
		m.lines[k].intercept = j.at("intercept").at(k).get<double>();
		m.lines[k].slope = j.at("slope").at(k).get<double>();
		m.lines[k].converged = j.at("converged").at(k).get<bool>();
	}
	m.samples = j.at("samples").get<std::size_t>();
	m.pooled = j.at("pooled").get<bool>();
	return m;
}

} // namespace

nlohmann::json chain_to_json(const ChainModel &model) {
	nlohmann::json j;
	j["format"] = "aqcast-chain";
	j["drivers"] = nlohmann::json::array();
	for (std::size_t k = 0; k < kDriverCount; ++k) {
		j["drivers"].push_back({{"name", kDriverNames[k]}, {"sign", driver_sign(static_cast<Driver>(k))}});
	}
	const auto &c = model.config;
	j["config"] = {{"origin_hour", c.origin_hour},       {"horizons", c.horizons},
	               {"morning_horizons", c.morning_horizons}, {"arfima_M", c.arfima_M},
	               {"qr_min_samples", c.qr_min_samples}, {"fslr_rows_factor", c.fslr_rows_factor}, {"qr_folds", c.qr_folds}};
	j["ispline"] = {{"degree", 3}, {"interior_knots", 12}, {"range", {0.01, 0.99}}};
	j["fit_first"] = format_date(model.fit_first);
	j["fit_last"] = format_date(model.fit_last);
	j["stations"] = nlohmann::json::array();
	for (const auto &st : model.stations) {
		nlohmann::json sj;
		sj["station"] = st.station;
		for (const auto &[dt, m] : st.base) {
			sj["base"][to_string(dt)] = fslr_json(m);
		}
		for (const auto &[dt, m] : st.full) {
			sj["full"][to_string(dt)] = fslr_json(m);
		}
		for (const auto &[dt, m] : st.qr) {
			sj["qr"][to_string(dt)] = qr_json(m);
		}
		const auto &a = st.arfima;
		sj["arfima"] = {{"d", a.d},         {"mu", a.mu},   {"ar", a.ar},   {"ma", a.ma},
		                {"sigma", a.sigma}, {"M", a.M},     {"aic", a.aic}, {"fallback", a.fallback}};
		j["stations"].push_back(std::move(sj));
	}
	return j;
}

ChainModel chain_from_json(const nlohmann::json &j) {
	if (j.value("format", "") != "aqcast-chain") {
		throw ChainError("chain_from_json: not a chain model");
	}
	ChainModel m;
	const auto &c = j.at("config");
	m.config.origin_hour = c.at("origin_hour").get<int>();
	m.config.horizons = c.at("horizons").get<int>();
	m.config.morning_horizons = c.at("morning_horizons").get<int>();
	m.config.arfima_M = c.at("arfima_M").get<int>();
	m.config.qr_min_samples = c.at("qr_min_samples").get<std::size_t>();
	m.config.fslr_rows_factor = c.at("fslr_rows_factor").get<std::size_t>();
	m.config.qr_folds = c.value("qr_folds", 1);
	m.fit_first = parse_date(j.at("fit_first").get<std::string>());
	m.fit_last = parse_date(j.at("fit_last").get<std::string>());
	for (const auto &sj : j.at("stations")) {
		StationChain st;
		st.station = sj.at("station").get<int>();
		for (const auto &[k, v] : sj.at("base").items()) {
			st.base[day_type_from_string(k)] = fslr_from(v);
		}
		for (const auto &[k, v] : sj.at("full").items()) {
			st.full[day_type_from_string(k)] = fslr_from(v);
		}
		for (const auto &[k, v] : sj.at("qr").items()) {
			st.qr[day_type_from_string(k)] = qr_from(v);
		}
		const auto &a = sj.at("arfima");
		st.arfima.d = a.at("d").get<double>();
		st.arfima.mu = a.at("mu").get<double>();
		st.arfima.ar = a.at("ar").get<std::vector<double>>();
		st.arfima.ma = a.at("ma").get<std::vector<double>>();
		st.arfima.sigma = a.at("sigma").get<double>();
		st.arfima.M = a.at("M").get<int>();
		st.arfima.aic = a.at("aic").get<double>();
		st.arfima.fallback = a.at("fallback").get<bool>();
		m.stations.push_back(std::move(st));
	}
	return m;
}

nlohmann::json forecasts_to_json(const std::vector<QuantileForecast> &fc) {
	nlohmann::json arr = nlohmann::json::array();
	for (const auto &f : fc) {
		nlohmann::json hours = nlohmann::json::array();
		nlohmann::json types = nlohmann::json::array();
		for (std::size_t h = 0; h < f.hours.size(); ++h) {
			hours.push_back(format_timestamp(f.hours[h]));
			types.push_back(to_string(f.day_types[h]));
		}
		arr.push_back({{"station", f.station},
		               {"issue", format_date(f.issue)},
		               {"hours", hours},
		               {"day_types", types},
		               {"point", f.point},
		               {"q", f.q}});
	}
	return {{"format", "aqcast-quantiles"}, {"forecasts", arr}};
}

std::vector<QuantileForecast> forecasts_from_json(const nlohmann::json &j) {
	if (j.value("format", "") != "aqcast-quantiles") {
		throw ChainError("forecasts_from_json: not a quantile forecast file");
	}
	std::vector<QuantileForecast> out;
	for (const auto &fj : j.at("forecasts")) {
		QuantileForecast f;
		f.station = fj.at("station").get<int>();
		f.issue = parse_date(fj.at("issue").get<std::string>());
		for (const auto &h : fj.at("hours")) {
			f.hours.push_back(parse_timestamp(h.get<std::string>()));
		}
		for (const auto &t : fj.at("day_types")) {
			f.day_types.push_back(day_type_from_string(t.get<std::string>()));
		}
		f.point = fj.at("point").get<std::vector<double>>();
		f.q = fj.at("q").get<std::vector<Percentiles>>();
		out.push_back(std::move(f));
	}
	return out;
}

} // namespace aqcast
