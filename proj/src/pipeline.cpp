#include "aqcast/pipeline.hpp"

#include "aqcast/dataset.hpp"
#include "aqcast/impute.hpp"
#include "aqcast/nned.hpp"
#include "aqcast/numeric.hpp"
#include "aqcast/synthetic.hpp"
#include "aqcast/timegrid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace aqcast {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string &s) {
	const auto a = s.find_first_not_of(" \t\r");
	if (a == std::string::npos) {
		return "";
	}
	const auto b = s.find_last_not_of(" \t\r");
	return s.substr(a, b - a + 1);
}

int to_int(const std::string &key, const std::string &v) {
	try {
		std::size_t used = 0;
		const int x = std::stoi(v, &used);
		if (used != v.size()) {
			throw std::invalid_argument(v);
		}
		return x;
	} catch (const std::exception &) {
		throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
	}
}

double to_double(const std::string &key, const std::string &v) {
	try {
		std::size_t used = 0;
		const double x = std::stod(v, &used);
		if (used != v.size()) {
			throw std::invalid_argument(v);
		}
		return x;
	} catch (const std::exception &) {
		throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
	}
}

bool to_bool(const std::string &key, const std::string &v) {
	if (v == "true" || v == "1" || v == "yes") {
		return true;
	}
	if (v == "false" || v == "0" || v == "no") {
		return false;
	}
	throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

void log_line(const RunConfig &cfg, const std::string &stage, const std::string &msg) {
	if (!cfg.quiet) {
		std::cerr << "[" << stage << "] " << msg << '\n';
	}
}

void write_json(const std::string &path, const nlohmann::json &j, int indent = -1) {
	fs::create_directories(fs::path(path).parent_path());
	std::ofstream f(path);
	if (!f) {
		throw ConfigError("cannot write " + path);
	}
	f << j.dump(indent) << '\n';
}

void require(const std::string &path, const std::string &what, const std::string &stage) {
	if (!fs::exists(path)) {
		throw DependencyError("missing " + what + " (" + path + "); run the '" + stage + "' stage first");
	}
}

nlohmann::json read_json(const std::string &path, const std::string &what, const std::string &stage) {
	require(path, what, stage);
	std::ifstream f(path);
	try {
		return nlohmann::json::parse(f);
	} catch (const nlohmann::json::exception &e) {
		throw DependencyError("unreadable " + what + " (" + path + "): " + e.what() + "; rerun the '" + stage +
		                      "' stage");
	}
}

SpatioTemporalFrame read_frame(const RunConfig &cfg, const std::string &name, const std::string &stage) {
	const auto base = cfg.data_path(name);
	require(base + ".json", name, stage);
	return load_frame(base);
}

SyntheticSpec load_spec(const RunConfig &cfg) {
	return synthetic_spec_from_json(read_json(cfg.data_path("synthetic.json"), "synthetic spec", "generate"));
}

CalendarConfig load_calendar(const RunConfig &cfg) {
	return calendar_from_json(read_json(cfg.data_path("calendar.json"), "calendar", "generate"));
}

Date day_of(const SyntheticSpec &spec, int k) { return spec.start_date + std::chrono::days{k}; }

struct Imputed {
	SpatioTemporalFrame pollution;
	SpatioTemporalFrame weather;
	SpatioTemporalFrame forecast;
};

Imputed load_imputed(const RunConfig &cfg) {
	return {read_frame(cfg, "imputed_pollution", "impute"), read_frame(cfg, "imputed_weather", "impute"),
	        read_frame(cfg, "imputed_forecast", "impute")};
}

NnedModel load_nned(const RunConfig &cfg) {
	const auto base = cfg.model_path("nned");
	require(base + ".json", "NNED model", "train-nned");
	return nned_load(base);
}

std::vector<QuantileForecast> load_forecasts(const RunConfig &cfg) {
	return forecasts_from_json(read_json(cfg.output_path("forecasts.json"), "quantile forecasts", "forecast"));
}

std::vector<QuantileForecast> issues_between(const std::vector<QuantileForecast> &fc, Date first, Date last) {
	std::vector<QuantileForecast> out;
	for (const auto &f : fc) {
		if (f.issue >= first && f.issue <= last) {
			out.push_back(f);
		}
	}
	return out;
}

constexpr double kQuantileFloor = 0.1;

MarginalTransform marginal_for(const Percentiles &q) {
	Percentiles p = q;
	for (auto &v : p) {
		v = std::max(v, kQuantileFloor);
	}
	return fit_marginal(p);
}

nlohmann::json matrix_json(const Eigen::MatrixXd &m) {
	nlohmann::json rows = nlohmann::json::array();
	for (Eigen::Index i = 0; i < m.rows(); ++i) {
		std::vector<double> r(static_cast<std::size_t>(m.cols()));
		for (Eigen::Index j = 0; j < m.cols(); ++j) {
			r[static_cast<std::size_t>(j)] = m(i, j);
		}
		rows.push_back(r);
	}
	return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json &j) {
	const auto n = static_cast<Eigen::Index>(j.size());
	const auto m = n > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
	Eigen::MatrixXd out(n, m);
	for (Eigen::Index i = 0; i < n; ++i) {
		for (Eigen::Index k = 0; k < m; ++k) {
			out(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
		}
	}
	return out;
}

ChainInputs chain_inputs(const Imputed &im, const CalendarConfig &cal, const NnedModel &nned) {
	ChainInputs in;
	in.pollution = &im.pollution;
	in.weather = &im.weather;
	in.forecast = &im.forecast;
	in.calendar = &cal;
	in.nned = &nned;
	return in;
}

Evaluation compute_evaluation(const RunConfig &cfg) {
	const auto spec = load_spec(cfg);
	const auto observed = read_frame(cfg, "observed_pollution", "generate");
	const auto history = read_frame(cfg, "imputed_pollution", "impute");
	const auto fc = issues_between(load_forecasts(cfg), day_of(spec, cfg.eval_first_day), day_of(spec, cfg.eval_last_day));
	if (fc.empty()) {
		throw DependencyError("no forecasts in the evaluation window; rerun the 'forecast' stage");
	}
	const auto persistence = persistence_like(fc, history);
	Evaluation ev;
	ev.reports.push_back(evaluate_forecasts("model", kPollutionVar, fc, observed));
	ev.reports.push_back(evaluate_forecasts("persistence", kPollutionVar, persistence, observed));
	ev.rmse_model = rmse_by_horizon(fc, observed, kPollutionVar);
	ev.rmse_persistence = rmse_by_horizon(persistence, observed, kPollutionVar);
	auto mean = [](const std::vector<double> &v) {
		double s = 0.0;
		for (double x : v) {
			s += x;
		}
		return s / static_cast<double>(v.size());
	};
	ev.skill = 1.0 - mean(ev.rmse_model) / mean(ev.rmse_persistence);

	const std::size_t c = observed.var_index(kPollutionVar);
	std::vector<Percentiles> q;
	std::vector<double> y;
	std::vector<double> pred;
	for (const auto &f : fc) {
		const std::size_t s = observed.station_index(f.station);
		for (std::size_t h = 0; h < f.hours.size(); ++h) {
			const std::size_t t = observed.offset_of(f.hours[h]);
			if (!observed.observed(c, t, s)) {
				continue;
			}
			q.push_back(f.q[h]);
			y.push_back(observed.value(c, t, s));
			pred.push_back(f.q[h][49]);
		}
	}
	ev.pairs = y.size();
	ev.coverage = calibration_coverage(q, y);
	ev.band_10_90 = interval_coverage(q, y, 10, 90);
	ev.q50_bias = bias(pred, y);

	// Spread of observed concentrations over the hours the window covers.
	const auto first = observed.offset_of(fc.front().hours.front());
	std::size_t last = first;
	for (const auto &f : fc) {
		last = std::max(last, observed.offset_of(f.hours.back()));
	}
	std::vector<double> vals;
	for (std::size_t s = 0; s < observed.stations(); ++s) {
		for (std::size_t t = first; t <= last; ++t) {
			if (observed.observed(c, t, s)) {
				vals.push_back(observed.value(c, t, s));
			}
		}
	}
	const double m = mean(vals);
	double ss = 0.0;
	for (double v : vals) {
		ss += (v - m) * (v - m);
	}
	ev.series_std = std::sqrt(ss / static_cast<double>(vals.size() - 1));
	return ev;
}

} // namespace

RunConfig RunConfig::load(const std::string &path) {
	std::ifstream f(path);
	if (!f) {
		throw ConfigError("cannot open config " + path);
	}
	RunConfig cfg;
	std::string line;
	int no = 0;
	while (std::getline(f, line)) {
		++no;
		const auto hash = line.find('#');
		if (hash != std::string::npos) {
			line = line.substr(0, hash);
		}
		line = trim(line);
		if (line.empty()) {
			continue;
		}
		const auto eq = line.find('=');
		if (eq == std::string::npos) {
			throw ConfigError(path + ":" + std::to_string(no) + ": expected key = value");
		}
		cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
	}
	return cfg;
}

void RunConfig::set(const std::string &key, const std::string &value) {
	if (key == "workdir") {
		workdir = value;
	} else if (key == "data_dir") {
		data_dir = value;
	} else if (key == "models_dir") {
		models_dir = value;
	} else if (key == "output_dir") {
		output_dir = value;
	} else if (key == "seed") {
		try {
			seed = std::stoull(value);
		} catch (const std::exception &) {
			throw ConfigError("config: seed expects a non-negative integer, got '" + value + "'");
		}
	} else if (key == "quiet") {
		quiet = to_bool(key, value);
	} else if (key.rfind("synthetic.", 0) == 0) {
		const auto field = key.substr(10);
		try {
			synthetic[field] = nlohmann::json::parse(value);
		} catch (const nlohmann::json::exception &) {
			synthetic[field] = value;
		}
	} else if (key == "nned.hidden") {
		nned_hidden = to_int(key, value);
	} else if (key == "nned.t_past") {
		nned_t_past = to_int(key, value);
	} else if (key == "nned.window") {
		nned_window = to_int(key, value);
	} else if (key == "nned.head") {
		nned_head.clear();
		std::stringstream ss(value);
		std::string item;
		while (std::getline(ss, item, ',')) {
			if (!trim(item).empty()) {
				nned_head.push_back(to_int(key, trim(item)));
			}
		}
	} else if (key == "nned.epochs") {
		nned_epochs = to_int(key, value);
	} else if (key == "nned.learning_rate") {
		nned_learning_rate = to_double(key, value);
	} else if (key == "nned.batch") {
		nned_batch = to_int(key, value);
	} else if (key == "nned.stride") {
		nned_stride = to_int(key, value);
	} else if (key == "nned.first_day") {
		nned_first_day = to_int(key, value);
	} else if (key == "nned.last_day") {
		nned_last_day = to_int(key, value);
	} else if (key == "chain.first_day") {
		chain_first_day = to_int(key, value);
	} else if (key == "chain.last_day") {
		chain_last_day = to_int(key, value);
	} else if (key == "chain.origin_hour") {
		chain_origin_hour = to_int(key, value);
	} else if (key == "chain.qr_min_samples") {
		chain_qr_min_samples = to_int(key, value);
	} else if (key == "chain.qr_folds") {
		chain_qr_folds = to_int(key, value);
	} else if (key == "chain.arfima_M") {
		chain_arfima_M = to_int(key, value);
	} else if (key == "eval.first_day") {
		eval_first_day = to_int(key, value);
	} else if (key == "eval.last_day") {
		eval_last_day = to_int(key, value);
	} else if (key == "joint.first_day") {
		joint_first_day = to_int(key, value);
	} else if (key == "simulate.day") {
		simulate_day = to_int(key, value);
	} else if (key == "simulate.paths") {
		paths = to_int(key, value);
	} else if (key == "protocol.strict") {
		protocol_strict = to_bool(key, value);
	} else if (key.rfind("protocol.", 0) == 0 && key.size() > 19 && key.substr(key.size() - 10) == ".threshold") {
		thresholds[key.substr(9, key.size() - 19)] = to_double(key, value);
	} else {
		throw ConfigError("config: unknown key '" + key + "'");
	}
}

void RunConfig::validate() const {
	if (workdir.empty()) {
		throw ConfigError("config: workdir must not be empty");
	}
	try {
		synthetic_spec_from_json(synthetic).validate();
	} catch (const ConfigError &) {
		throw;
	} catch (const std::exception &e) {
		throw ConfigError(std::string("config: synthetic: ") + e.what());
	}
	const int days = synthetic.value("days", SyntheticSpec{}.days);
	auto in_range = [&](const char *name, int d) {
		if (d < 0 || d >= days) {
			throw ConfigError(std::string("config: ") + name + " = " + std::to_string(d) + " outside [0, " +
			                  std::to_string(days - 1) + "]");
		}
	};
	in_range("nned.first_day", nned_first_day);
	in_range("nned.last_day", nned_last_day);
	in_range("chain.first_day", chain_first_day);
	in_range("chain.last_day", chain_last_day);
	in_range("eval.first_day", eval_first_day);
	in_range("eval.last_day", eval_last_day);
	in_range("joint.first_day", joint_first_day);
	in_range("simulate.day", simulate_day);
	if (eval_last_day + 2 >= days) {
		throw ConfigError("config: eval.last_day leaves no room for a 48 h window");
	}
	if (nned_first_day > nned_last_day || chain_first_day > chain_last_day || eval_first_day > eval_last_day) {
		throw ConfigError("config: day ranges must satisfy first_day <= last_day");
	}
	if (chain_last_day >= eval_first_day) {
		throw ConfigError("config: evaluation window must start after chain.last_day");
	}
	if (joint_first_day <= chain_last_day) {
		throw ConfigError("config: joint.first_day must be after chain.last_day");
	}
	if (simulate_day < joint_first_day + 2 || simulate_day + 2 >= days) {
		throw ConfigError("config: simulate.day needs residual history before it and 48 h after it");
	}
	if (paths <= 0) {
		throw ConfigError("config: simulate.paths must be positive");
	}
	if (nned_epochs <= 0 || nned_batch <= 0 || nned_stride <= 0 || nned_hidden <= 0 || nned_t_past <= 0 ||
	    nned_window <= 0 || !(nned_learning_rate > 0.0)) {
		throw ConfigError("config: nned settings must be positive");
	}
	if (chain_origin_hour < 0 || chain_origin_hour > 23) {
		throw ConfigError("config: chain.origin_hour outside [0, 23]");
	}
	for (const auto &[name, t] : thresholds) {
		if (name != "prewarning" && name != "warning" && name != "alert") {
			throw ConfigError("config: unknown protocol level '" + name + "'");
		}
		if (!(t > 0.0)) {
			throw ConfigError("config: protocol threshold must be positive");
		}
	}
}

std::string RunConfig::data_path(const std::string &name) const {
	return ((data_dir.empty() ? fs::path(workdir) / "data" : fs::path(data_dir)) / name).string();
}

std::string RunConfig::model_path(const std::string &name) const {
	return ((models_dir.empty() ? fs::path(workdir) / "models" : fs::path(models_dir)) / name).string();
}

std::string RunConfig::output_path(const std::string &name) const {
	return ((output_dir.empty() ? fs::path(workdir) / "output" : fs::path(output_dir)) / name).string();
}

void cmd_generate(const RunConfig &cfg) {
	auto doc = cfg.synthetic;
	if (!doc.contains("seed")) {
		doc["seed"] = cfg.seed;
	}
	const auto spec = synthetic_spec_from_json(doc);
	const auto data = synthetic_generate(spec);
	fs::create_directories(cfg.data_path(""));
	save_frame(data.truth_pollution, cfg.data_path("truth_pollution"));
	save_frame(data.observed_pollution, cfg.data_path("observed_pollution"));
	save_frame(data.observed_weather, cfg.data_path("observed_weather"));
	save_frame(data.observed_forecast, cfg.data_path("observed_forecast"));
	write_json(cfg.data_path("calendar.json"), calendar_to_json(data.calendar), 2);
	write_json(cfg.data_path("synthetic.json"), synthetic_spec_to_json(spec), 2);
	log_line(cfg, "generate",
	         std::to_string(spec.stations) + " stations, " + std::to_string(spec.days) + " days, " +
	             std::to_string(data.observed_pollution.missing_count()) + " missing pollution cells");
}

void cmd_impute(const RunConfig &cfg) {
	const auto pollution = read_frame(cfg, "observed_pollution", "generate");
	const auto weather = read_frame(cfg, "observed_weather", "generate");
	const auto forecast = read_frame(cfg, "observed_forecast", "generate");
	ImputeOptions opt;
	opt.seed = cfg.seed;
	const auto res = impute_pipeline(weather, forecast, pollution, opt);
	save_frame(res.pollution, cfg.data_path("imputed_pollution"));
	save_frame(res.weather, cfg.data_path("imputed_weather"));
	save_frame(res.forecast, cfg.data_path("imputed_forecast"));
	write_json(cfg.data_path("impute_report.json"), impute_report_json(res), 2);
	log_line(cfg, "impute", std::to_string(res.records.size()) + " series processed");
}

void cmd_train_nned(const RunConfig &cfg) {
	const auto spec = load_spec(cfg);
	const auto im = load_imputed(cfg);
	NnedInputs in{&im.pollution, &im.weather, &im.forecast};
	NnedConfig nc;
	nc.C = nned_channel_count(in);
	nc.T = cfg.nned_window;
	nc.S = static_cast<int>(im.pollution.stations());
	nc.H = cfg.nned_hidden;
	nc.t_past = cfg.nned_t_past;
	nc.T_out = 48;
	nc.head_hidden = cfg.nned_head;
	nc.validate();
	const auto frame_start = im.pollution.start();
	auto offset = [&](int day, int hour) {
		const auto ts = utc_from_civil(day_of(spec, day), hour);
		return static_cast<std::size_t>(std::max<std::int64_t>(0, ts - frame_start));
	};
	const auto origins = nned_valid_origins(nc, im.pollution.hours(), offset(cfg.nned_first_day, 0),
	                                        offset(cfg.nned_last_day, 23), static_cast<std::size_t>(cfg.nned_stride));
	if (origins.empty()) {
		throw ConfigError("config: no complete NNED training windows in the nned day range");
	}
	std::vector<NnedSample> raw;
	raw.reserve(origins.size());
	for (auto o : origins) {
		raw.push_back({nned_raw_input(nc, in, o), nned_raw_target(nc, in, o)});
	}
	auto model = nned_init(nc, cfg.seed);
	const auto samples = nned_standardise(model, raw);
	TrainConfig tc;
	tc.learning_rate = cfg.nned_learning_rate;
	tc.batch_size = cfg.nned_batch;
	tc.epochs = cfg.nned_epochs;
	tc.seed = cfg.seed;
	const auto res = nned_train(model, samples, tc);
	fs::create_directories(cfg.model_path(""));
	nned_save(model, cfg.model_path("nned"));
	write_json(cfg.model_path("nned_training.json"),
	           {{"samples", samples.size()},
	            {"best_epoch", res.best_epoch},
	            {"early_stopped", res.early_stopped},
	            {"train_loss", res.train_loss},
	            {"validation_loss", res.validation_loss}},
	           2);
	log_line(cfg, "train-nned",
	         std::to_string(samples.size()) + " samples, best epoch " + std::to_string(res.best_epoch) +
	             ", validation loss " +
	             (res.validation_loss.empty() ? std::string("n/a")
	                                          : std::to_string(res.validation_loss[static_cast<std::size_t>(
	                                                std::max(0, res.best_epoch - 1))])));
}

void cmd_fit_chain(const RunConfig &cfg) {
	const auto spec = load_spec(cfg);
	const auto cal = load_calendar(cfg);
	const auto im = load_imputed(cfg);
	const auto nned = load_nned(cfg);
	ChainConfig cc;
	cc.origin_hour = cfg.chain_origin_hour;
	cc.qr_min_samples = static_cast<std::size_t>(cfg.chain_qr_min_samples);
	cc.arfima_M = cfg.chain_arfima_M;
	cc.qr_folds = cfg.chain_qr_folds;
	const auto model =
	    chain_fit(chain_inputs(im, cal, nned), day_of(spec, cfg.chain_first_day), day_of(spec, cfg.chain_last_day), cc);
	fs::create_directories(cfg.model_path(""));
	write_json(cfg.model_path("chain.json"), chain_to_json(model));
	std::size_t fallback = 0;
	for (const auto &st : model.stations) {
		fallback += st.arfima.fallback ? 1 : 0;
	}
	log_line(cfg, "fit-chain",
	         std::to_string(model.stations.size()) + " stations, " + std::to_string(fallback) + " ARFIMA fallbacks");
}

void cmd_forecast(const RunConfig &cfg) {
	const auto spec = load_spec(cfg);
	const auto cal = load_calendar(cfg);
	const auto im = load_imputed(cfg);
	const auto nned = load_nned(cfg);
	const auto model = chain_from_json(read_json(cfg.model_path("chain.json"), "chain model", "fit-chain"));
	const int first = std::min(cfg.eval_first_day, cfg.joint_first_day);
	const int last = std::max(cfg.eval_last_day, cfg.simulate_day);
	const auto fc = chain_forecast(model, chain_inputs(im, cal, nned), day_of(spec, first), day_of(spec, last));
	write_json(cfg.output_path("forecasts.json"), forecasts_to_json(fc));
	log_line(cfg, "forecast", std::to_string(fc.size()) + " station-days of 48 x 99 quantiles");
}

void cmd_fit_joint(const RunConfig &cfg) {
	const auto spec = load_spec(cfg);
	const auto truth = read_frame(cfg, "imputed_pollution", "impute");
	const auto all = load_forecasts(cfg);
	const auto fc = issues_between(all, day_of(spec, cfg.joint_first_day), day_of(spec, cfg.simulate_day - 2));
	std::vector<int> codes;
	for (const auto &m : truth.station_meta()) {
		codes.push_back(m.code);
	}
	const int S = static_cast<int>(codes.size());
	std::map<Date, std::vector<const QuantileForecast *>> by_day;
	for (const auto &f : fc) {
		auto &slot = by_day[f.issue];
		slot.resize(codes.size(), nullptr);
		slot[truth.station_index(f.station)] = &f;
	}
	int H = 0;
	std::vector<std::vector<double>> rows;
	for (const auto &[day, slot] : by_day) {
		if (std::any_of(slot.begin(), slot.end(), [](const auto *p) { return p == nullptr; })) {
			continue;
		}
		H = static_cast<int>(slot.front()->hours.size());
		std::vector<double> row(static_cast<std::size_t>(H * S));
		for (int s = 0; s < S; ++s) {
			const auto &f = *slot[static_cast<std::size_t>(s)];
			for (int h = 0; h < H; ++h) {
				const auto t = truth.offset_of(f.hours[static_cast<std::size_t>(h)]);
				const double y = std::max(truth.raw(0, t, static_cast<std::size_t>(s)), kQuantileFloor);
				row[static_cast<std::size_t>(h * S + s)] =
				    standardize_residual(marginal_for(f.q[static_cast<std::size_t>(h)]), y);
			}
		}
		rows.push_back(std::move(row));
	}
	if (rows.size() < 20) {
		throw ConfigError("config: joint residual history has " + std::to_string(rows.size()) +
		                  " complete dates, at least 20 are needed; move joint.first_day earlier or simulate.day later");
	}
	Eigen::MatrixXd R(static_cast<Eigen::Index>(rows.size()), H * S);
	for (std::size_t i = 0; i < rows.size(); ++i) {
		for (int k = 0; k < H * S; ++k) {
			R(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
		}
	}
	const auto corr = estimate_corr(R, S, H);
	nlohmann::json j;
	j["format"] = "aqcast-joint";
	j["stations"] = codes;
	j["horizons"] = H;
	j["rows"] = rows.size();
	j["shrinkage"] = corr.shrinkage;
	j["same"] = nlohmann::json::array();
	j["cross"] = nlohmann::json::array();
	for (int h = 0; h < H; ++h) {
		j["same"].push_back(matrix_json(corr.same[static_cast<std::size_t>(h)]));
		j["cross"].push_back(h == 0 ? nlohmann::json::array() : matrix_json(corr.cross[static_cast<std::size_t>(h)]));
	}
	write_json(cfg.model_path("joint.json"), j);
	log_line(cfg, "fit-joint", std::to_string(rows.size()) + " residual dates, shrinkage " + std::to_string(corr.shrinkage));
}

void cmd_simulate(const RunConfig &cfg) {
	const auto spec = load_spec(cfg);
	const auto pollution = read_frame(cfg, "observed_pollution", "generate");
	const auto j = read_json(cfg.model_path("joint.json"), "joint model", "fit-joint");
	const auto fc = issues_between(load_forecasts(cfg), day_of(spec, cfg.simulate_day), day_of(spec, cfg.simulate_day));
	const auto codes = j.at("stations").get<std::vector<int>>();
	const int S = static_cast<int>(codes.size());
	const int H = j.at("horizons").get<int>();
	std::vector<Eigen::MatrixXd> same;
	std::vector<Eigen::MatrixXd> cross;
	for (int h = 0; h < H; ++h) {
		same.push_back(matrix_from(j["same"][static_cast<std::size_t>(h)]));
		cross.push_back(h == 0 ? Eigen::MatrixXd::Zero(S, S) : matrix_from(j["cross"][static_cast<std::size_t>(h)]));
	}
	const auto corr = corr_from_blocks(std::move(same), std::move(cross));
	std::vector<MarginalTransform> transforms(static_cast<std::size_t>(S * H));
	std::vector<int> seen(static_cast<std::size_t>(S), 0);
	for (const auto &f : fc) {
		const auto it = std::find(codes.begin(), codes.end(), f.station);
		if (it == codes.end() || static_cast<int>(f.q.size()) != H) {
			continue;
		}
		const auto s = static_cast<std::size_t>(it - codes.begin());
		seen[s] = 1;
		for (int h = 0; h < H; ++h) {
			transforms[s * static_cast<std::size_t>(H) + static_cast<std::size_t>(h)] =
			    marginal_for(f.q[static_cast<std::size_t>(h)]);
		}
	}
	if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
		throw DependencyError("forecasts for simulate.day are incomplete; rerun the 'forecast' stage");
	}
	std::map<int, int> zone_of;
	for (const auto &m : pollution.station_meta()) {
		zone_of[m.code] = m.zone;
	}
	auto pc = ProtocolConfig::defaults(zone_of);
	pc.strict = cfg.protocol_strict;
	for (auto &level : pc.levels) {
		if (const auto it = cfg.thresholds.find(level.name); it != cfg.thresholds.end()) {
			level.threshold = it->second;
		}
	}
	pc.validate();
	const auto paths = simulate_paths(transforms, corr, cfg.paths, cfg.seed);
	const auto ev = protocol_probability(paths, codes, pc);
	auto out = event_probabilities_to_json(ev);
	write_json(cfg.output_path("events.json"), out, 2);
	std::ostringstream msg;
	msg << cfg.paths << " paths for " << format_date(day_of(spec, cfg.simulate_day));
	for (const auto &name : ev.order) {
		msg << ", " << name << " " << ev.levels.at(name).city;
	}
	log_line(cfg, "simulate", msg.str());
}

void cmd_evaluate(const RunConfig &cfg) {
	const auto ev = compute_evaluation(cfg);
	write_json(cfg.output_path("evaluation.json"), evaluation_to_json(ev), 2);
	std::ostringstream msg;
	msg << "skill vs persistence " << ev.skill << ", q50 bias " << ev.q50_bias << " (series std " << ev.series_std
	    << "), [q10, q90] coverage " << ev.band_10_90;
	log_line(cfg, "evaluate", msg.str());
}

void cmd_report(const RunConfig &cfg) {
	const auto spec = load_spec(cfg);
	const auto ev = compute_evaluation(cfg);
	const auto observed = read_frame(cfg, "observed_pollution", "generate");
	const auto fc = issues_between(load_forecasts(cfg), day_of(spec, cfg.eval_first_day), day_of(spec, cfg.eval_last_day));
	nlohmann::json events;
	const bool have_events = fs::exists(cfg.output_path("events.json"));
	if (have_events) {
		events = read_json(cfg.output_path("events.json"), "event probabilities", "simulate");
	}
	const auto files = report_emit(cfg.output_path("report"), ev, have_events ? &events : nullptr, fc, observed);
	log_line(cfg, "report", std::to_string(files.size()) + " files in " + cfg.output_path("report"));
}

const std::vector<std::string> &stage_names() {
	static const std::vector<std::string> names{"generate", "impute",   "train-nned", "fit-chain", "forecast",
	                                            "fit-joint", "simulate", "evaluate",   "report"};
	return names;
}

void run_stage(const std::string &name, const RunConfig &cfg) {
	if (name == "generate") {
		cmd_generate(cfg);
	} else if (name == "impute") {
		cmd_impute(cfg);
	} else if (name == "train-nned") {
		cmd_train_nned(cfg);
	} else if (name == "fit-chain") {
		cmd_fit_chain(cfg);
	} else if (name == "forecast") {
		cmd_forecast(cfg);
	} else if (name == "fit-joint") {
		cmd_fit_joint(cfg);
	} else if (name == "simulate") {
		cmd_simulate(cfg);
	} else if (name == "evaluate") {
		cmd_evaluate(cfg);
	} else if (name == "report") {
		cmd_report(cfg);
	} else if (name == "run-all") {
		cmd_run_all(cfg);
	} else {
		throw ConfigError("unknown stage '" + name + "'");
	}
}

void cmd_run_all(const RunConfig &cfg) {
	for (const auto &s : stage_names()) {
		const auto t0 = std::chrono::steady_clock::now();
		run_stage(s, cfg);
		const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
		std::ostringstream msg;
		msg << std::fixed << std::setprecision(1) << dt.count() << " s";
		log_line(cfg, s, msg.str());
	}
}

int exit_code_for(const std::exception &e) {
	if (dynamic_cast<const ConfigError *>(&e) || dynamic_cast<const DataError *>(&e) ||
	    dynamic_cast<const CalendarError *>(&e)) {
		return 2;
	}
	if (dynamic_cast<const DependencyError *>(&e)) {
		return 3;
	}
	return 4;
}

} // namespace aqcast
