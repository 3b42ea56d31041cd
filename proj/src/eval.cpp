#include "aqcast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

namespace aqcast {

namespace {

void check_aligned(std::span<const double> a, std::span<const double> b) {
	if (a.size() != b.size()) {
		throw EvalError("length mismatch");
	}
	if (a.empty()) {
		throw EvalError("empty input");
	}
}

double spread(const std::vector<double> &v) {
	if (v.size() < 2) {
		return 0.0;
	}
	const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
	double s = 0.0;
	for (double x : v) {
		s += (x - m) * (x - m);
	}
	return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double average(const std::vector<double> &v) {
	return v.empty() ? std::numeric_limits<double>::quiet_NaN()
	                 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

double rmse(std::span<const double> pred, std::span<const double> obs) {
	check_aligned(pred, obs);
	double s = 0.0;
	for (std::size_t i = 0; i < pred.size(); ++i) {
		s += (pred[i] - obs[i]) * (pred[i] - obs[i]);
	}
	return std::sqrt(s / static_cast<double>(pred.size()));
}

double bias(std::span<const double> pred, std::span<const double> obs) {
	check_aligned(pred, obs);
	double s = 0.0;
	for (std::size_t i = 0; i < pred.size(); ++i) {
		s += pred[i] - obs[i];
	}
	return s / static_cast<double>(pred.size());
}

double crps_from_quantiles(std::span<const double> q, double obs) {
	if (q.size() != static_cast<std::size_t>(kPercentiles)) {
		throw EvalError("crps: 99 quantiles required");
	}
	double s = 0.0;
	for (std::size_t k = 0; k < q.size(); ++k) {
		if (k > 0 && q[k] < q[k - 1]) {
			throw EvalError("crps: quantiles must be non-decreasing");
		}
		s += pinball_loss(obs - q[k], static_cast<double>(k + 1) / 100.0);
	}
	return 2.0 * s / static_cast<double>(kPercentiles);
}

std::vector<double> persistence_forecast(std::span<const double> history, std::size_t horizons) {
	const std::size_t n = history.size();
	if (n < 169) {
		throw EvalError("persistence: at least 169 hours of history required");
	}
	if (horizons > 168) {
		throw EvalError("persistence: horizon longer than one week");
	}
	const std::size_t m = std::min<std::size_t>(24, n - 168);
	double recent = 0.0;
	double before = 0.0;
	for (std::size_t i = n - m; i < n; ++i) {
		recent += history[i];
		before += history[i - 168];
	}
	const double ratio = before > 0.0 ? recent / before : 1.0;
	std::vector<double> out(horizons);
	for (std::size_t h = 1; h <= horizons; ++h) {
		out[h - 1] = history[n + h - 1 - 168] * ratio;
	}
	return out;
}

std::vector<double> calibration_coverage(const std::vector<Percentiles> &q, std::span<const double> obs) {
	if (q.size() != obs.size() || q.empty()) {
		throw EvalError("coverage: aligned non-empty input required");
	}
	std::vector<double> cov(kPercentiles, 0.0);
	for (std::size_t i = 0; i < q.size(); ++i) {
		for (std::size_t k = 0; k < cov.size(); ++k) {
			cov[k] += obs[i] <= q[i][k] ? 1.0 : 0.0;
		}
	}
	for (auto &c : cov) {
		c /= static_cast<double>(q.size());
	}
	return cov;
}

double interval_coverage(const std::vector<Percentiles> &q, std::span<const double> obs, int lo, int hi) {
	if (q.size() != obs.size() || q.empty()) {
		throw EvalError("coverage: aligned non-empty input required");
	}
	std::size_t in = 0;
	for (std::size_t i = 0; i < q.size(); ++i) {
		in += (obs[i] >= q[i][static_cast<std::size_t>(lo - 1)] && obs[i] <= q[i][static_cast<std::size_t>(hi - 1)]) ? 1 : 0;
	}
	return static_cast<double>(in) / static_cast<double>(q.size());
}

double MetricReport::rmse_mean() const {
	std::vector<double> v;
	for (const auto &[s, c] : per_station) {
		v.push_back(c.rmse);
	}
	return average(v);
}

double MetricReport::rmse_std() const {
	std::vector<double> v;
	for (const auto &[s, c] : per_station) {
		v.push_back(c.rmse);
	}
	return spread(v);
}

double MetricReport::bias_mean() const {
	std::vector<double> v;
	for (const auto &[s, c] : per_station) {
		v.push_back(c.bias);
	}
	return average(v);
}

double MetricReport::bias_std() const {
	std::vector<double> v;
	for (const auto &[s, c] : per_station) {
		v.push_back(c.bias);
	}
	return spread(v);
}

double MetricReport::crps_mean() const {
	std::vector<double> v;
	for (const auto &[s, c] : per_station) {
		v.push_back(c.crps);
	}
	return average(v);
}

double MetricReport::crps_std() const {
	std::vector<double> v;
	for (const auto &[s, c] : per_station) {
		v.push_back(c.crps);
	}
	return spread(v);
}

MetricReport evaluate_forecasts(const std::string &label, const std::string &pollutant,
                                const std::vector<QuantileForecast> &forecasts, const SpatioTemporalFrame &observed) {
	MetricReport rep;
	rep.label = label;
	rep.pollutant = pollutant;
	const std::size_t c = observed.var_index(pollutant);
	struct Acc {
		std::vector<double> pred;
		std::vector<double> obs;
		std::vector<double> crps;
	};
	std::map<int, std::vector<Acc>> acc;
	std::map<int, Acc> pooled;
	for (const auto &f : forecasts) {
		const std::size_t s = observed.station_index(f.station);
		const auto H = f.hours.size();
		rep.horizons = std::max(rep.horizons, static_cast<int>(H));
		auto &per_h = acc[f.station];
		per_h.resize(std::max(per_h.size(), H));
		for (std::size_t h = 0; h < H; ++h) {
			const auto ts = f.hours[h];
			if (ts < observed.start() || ts >= observed.time_at(observed.hours())) {
				continue;
			}
			const std::size_t t = observed.offset_of(ts);
			if (!observed.observed(c, t, s)) {
				continue;
			}
			const double y = observed.value(c, t, s);
			const double p = f.q.empty() ? f.point[h] : f.q[h][49];
			const double cr = f.q.empty() ? std::numeric_limits<double>::quiet_NaN() : crps_from_quantiles(f.q[h], y);
			per_h[h].pred.push_back(p);
			per_h[h].obs.push_back(y);
			per_h[h].crps.push_back(cr);
			pooled[f.station].pred.push_back(p);
			pooled[f.station].obs.push_back(y);
			pooled[f.station].crps.push_back(cr);
		}
	}
	auto cell = [](const Acc &a) {
		MetricCell m;
		m.n = a.pred.size();
		if (m.n == 0) {
			m.rmse = m.bias = m.crps = std::numeric_limits<double>::quiet_NaN();
			return m;
		}
		m.rmse = rmse(a.pred, a.obs);
		m.bias = bias(a.pred, a.obs);
		m.crps = average(a.crps);
		return m;
	};
	for (const auto &[st, per_h] : acc) {
		auto &cells = rep.cells[st];
		for (const auto &a : per_h) {
			cells.push_back(cell(a));
		}
		rep.per_station[st] = cell(pooled[st]);
	}
	return rep;
}

std::vector<QuantileForecast> persistence_like(const std::vector<QuantileForecast> &like,
                                               const SpatioTemporalFrame &history) {
	std::vector<QuantileForecast> out;
	for (const auto &f : like) {
		const std::size_t s = history.station_index(f.station);
		const std::size_t first = history.offset_of(f.hours.front());
		if (first < 169) {
			throw EvalError("persistence: not enough history before " + format_timestamp(f.hours.front()));
		}
		std::vector<double> hist(first);
		for (std::size_t t = 0; t < first; ++t) {
			hist[t] = history.raw(0, t, s);
			if (std::isnan(hist[t])) {
				throw EvalError("persistence: history must be complete");
			}
		}
		QuantileForecast p;
		p.station = f.station;
		p.issue = f.issue;
		p.hours = f.hours;
		p.day_types = f.day_types;
		p.point = persistence_forecast(hist, f.hours.size());
		out.push_back(std::move(p));
	}
	return out;
}

std::vector<double> rmse_by_horizon(const std::vector<QuantileForecast> &forecasts, const SpatioTemporalFrame &observed,
                                    const std::string &var) {
	const std::size_t c = observed.var_index(var);
	std::vector<double> sse;
	std::vector<std::size_t> n;
	for (const auto &f : forecasts) {
		const std::size_t s = observed.station_index(f.station);
		if (sse.size() < f.hours.size()) {
			sse.resize(f.hours.size(), 0.0);
			n.resize(f.hours.size(), 0);
		}
		for (std::size_t h = 0; h < f.hours.size(); ++h) {
			const auto ts = f.hours[h];
			if (ts < observed.start() || ts >= observed.time_at(observed.hours())) {
				continue;
			}
			const std::size_t t = observed.offset_of(ts);
			if (!observed.observed(c, t, s)) {
				continue;
			}
			const double p = f.q.empty() ? f.point[h] : f.q[h][49];
			const double e = p - observed.value(c, t, s);
			sse[h] += e * e;
			++n[h];
		}
	}
	std::vector<double> out(sse.size());
	for (std::size_t h = 0; h < sse.size(); ++h) {
		out[h] = n[h] > 0 ? std::sqrt(sse[h] / static_cast<double>(n[h])) : std::numeric_limits<double>::quiet_NaN();
	}
	return out;
}

nlohmann::json evaluation_to_json(const Evaluation &ev) {
	nlohmann::json j;
	j["reports"] = nlohmann::json::array();
	for (const auto &r : ev.reports) {
		auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
		j["reports"].push_back({{"label", r.label},
		                        {"pollutant", r.pollutant},
		                        {"rmse_mean", num(r.rmse_mean())},
		                        {"rmse_std", num(r.rmse_std())},
		                        {"bias_mean", num(r.bias_mean())},
		                        {"bias_std", num(r.bias_std())},
		                        {"crps_mean", num(r.crps_mean())},
		                        {"crps_std", num(r.crps_std())}});
	}
	j["rmse_model"] = ev.rmse_model;
	j["rmse_persistence"] = ev.rmse_persistence;
	j["skill"] = ev.skill;
	j["coverage"] = ev.coverage;
	j["band_10_90"] = ev.band_10_90;
	j["series_std"] = ev.series_std;
	j["q50_bias"] = ev.q50_bias;
	j["pairs"] = ev.pairs;
	return j;
}

namespace {

std::ofstream open_out(const std::filesystem::path &p) {
	std::ofstream f(p);
	if (!f) {
		throw EvalError("cannot write " + p.string());
	}
	f << std::setprecision(10);
	return f;
}

} // namespace

std::vector<std::string> report_emit(const std::string &dir, const Evaluation &ev, const nlohmann::json *events,
                                     const std::vector<QuantileForecast> &forecasts,
                                     const SpatioTemporalFrame &observed) {
	namespace fs = std::filesystem;
	std::error_code ec;
	fs::create_directories(dir, ec);
	if (ec) {
		throw EvalError("cannot create " + dir + ": " + ec.message());
	}
	std::vector<std::string> written;
	const fs::path base(dir);

	{
		auto f = open_out(base / "metrics.csv");
		f << "label,pollutant,station,horizon,rmse,bias,crps,n\n";
		for (const auto &r : ev.reports) {
			for (const auto &[st, cells] : r.cells) {
				for (std::size_t h = 0; h < cells.size(); ++h) {
					const auto &c = cells[h];
					f << r.label << ',' << r.pollutant << ',' << st << ',' << h + 1 << ',' << c.rmse << ',' << c.bias << ',';
					if (!std::isnan(c.crps)) {
						f << c.crps;
					}
					f << ',' << c.n << '\n';
				}
			}
		}
		written.push_back((base / "metrics.csv").string());
	}
	{
		auto f = open_out(base / "summary.csv");
		f << "label,pollutant,rmse_mean,rmse_std,bias_mean,bias_std,crps_mean,crps_std\n";
		for (const auto &r : ev.reports) {
			f << r.label << ',' << r.pollutant << ',' << r.rmse_mean() << ',' << r.rmse_std() << ',' << r.bias_mean() << ','
			  << r.bias_std() << ',';
			if (!std::isnan(r.crps_mean())) {
				f << r.crps_mean() << ',' << r.crps_std();
			} else {
				f << ',';
			}
			f << '\n';
		}
		written.push_back((base / "summary.csv").string());
	}
	{
		auto f = open_out(base / "coverage.csv");
		f << "percentile,coverage\n";
		for (std::size_t k = 0; k < ev.coverage.size(); ++k) {
			f << k + 1 << ',' << ev.coverage[k] << '\n';
		}
		written.push_back((base / "coverage.csv").string());
	}
	{
		auto f = open_out(base / "evaluation.json");
		f << evaluation_to_json(ev).dump(2) << '\n';
		written.push_back((base / "evaluation.json").string());
	}
	if (events) {
		auto f = open_out(base / "events.json");
		f << (events->is_null() ? nlohmann::json::object() : *events).dump(2) << '\n';
		written.push_back((base / "events.json").string());
	}
	if (!forecasts.empty()) {
		Date last = forecasts.front().issue;
		for (const auto &fc : forecasts) {
			last = std::max(last, fc.issue);
		}
		const std::size_t c = 0;
		for (const auto &fc : forecasts) {
			if (fc.issue != last || fc.q.empty()) {
				continue;
			}
			const auto path = base / ("fan_" + std::to_string(fc.station) + ".csv");
			auto f = open_out(path);
			f << "horizon,timestamp";
			for (int k = 5; k <= 95; k += 5) {
				f << ",q" << std::setw(2) << std::setfill('0') << k << std::setfill(' ');
			}
			f << ",obs\n";
			const std::size_t s = observed.station_index(fc.station);
			for (std::size_t h = 0; h < fc.q.size(); ++h) {
				f << h + 1 << ',' << format_timestamp(fc.hours[h]);
				for (int k = 5; k <= 95; k += 5) {
					f << ',' << fc.q[h][static_cast<std::size_t>(k - 1)];
				}
				f << ',';
				const auto ts = fc.hours[h];
				if (ts >= observed.start() && ts < observed.time_at(observed.hours())) {
					const std::size_t t = observed.offset_of(ts);
					if (observed.observed(c, t, s)) {
						f << observed.value(c, t, s);
					}
				}
				f << '\n';
			}
			written.push_back(path.string());
		}
	}
	return written;
}

} // namespace aqcast
