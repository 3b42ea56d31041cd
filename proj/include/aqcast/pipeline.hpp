#pragma once

#include "aqcast/chain.hpp"
#include "aqcast/eval.hpp"
#include "aqcast/jointdist.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqcast {

class ConfigError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// An upstream artifact is missing.
class DependencyError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Key-value run configuration. Day keys are offsets from the synthetic start date.
struct RunConfig {
	std::string workdir = "aqcast_run";
	std::string data_dir;   // default <workdir>/data
	std::string models_dir; // default <workdir>/models
	std::string output_dir; // default <workdir>/output
	std::uint64_t seed = 1;
	bool quiet = false;

	/// synthetic.<field> overrides, as JSON values.
	nlohmann::json synthetic = nlohmann::json::object();

	int nned_hidden = 8;
	int nned_t_past = 24;
	int nned_window = 48;
	std::vector<int> nned_head;
	int nned_epochs = 60;
	double nned_learning_rate = 1e-3;
	int nned_batch = 16;
	int nned_stride = 3;
	int nned_first_day = 7;
	int nned_last_day = 88;

	int chain_first_day = 90;
	int chain_last_day = 139;
	int chain_origin_hour = 9;
	int chain_qr_min_samples = 300;
	int chain_arfima_M = 500;
	int chain_qr_folds = 5;

	int eval_first_day = 140;
	int eval_last_day = 177;

	int joint_first_day = 140;
	int simulate_day = 177;
	int paths = 2000;
	bool protocol_strict = true;
	/// level name -> threshold override
	std::map<std::string, double> thresholds;

	static RunConfig load(const std::string &path);
	/// Applies one `key = value` assignment.
	void set(const std::string &key, const std::string &value);
	void validate() const;

	std::string data_path(const std::string &name) const;
	std::string model_path(const std::string &name) const;
	std::string output_path(const std::string &name) const;
};

void cmd_generate(const RunConfig &cfg);
void cmd_impute(const RunConfig &cfg);
void cmd_train_nned(const RunConfig &cfg);
void cmd_fit_chain(const RunConfig &cfg);
void cmd_forecast(const RunConfig &cfg);
void cmd_fit_joint(const RunConfig &cfg);
void cmd_simulate(const RunConfig &cfg);
void cmd_evaluate(const RunConfig &cfg);
void cmd_report(const RunConfig &cfg);
void cmd_run_all(const RunConfig &cfg);

/// Stage names in run-all order.
const std::vector<std::string> &stage_names();
void run_stage(const std::string &name, const RunConfig &cfg);

/// 0 ok, 2 config error, 3 missing upstream artifact, 4 numeric failure.
int exit_code_for(const std::exception &e);

} // namespace aqcast
