#include "aqcast/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char **argv) {
	CLI::App app{"aqcast: probabilistic air-quality forecasting pipeline"};
	app.require_subcommand(1, 1);
	app.fallthrough();

	std::string config_path;
	std::vector<std::string> overrides;
	std::string workdir;
	std::uint64_t seed = 0;
	bool quiet = false;
	app.add_option("-c,--config", config_path, "Key-value run configuration file");
	app.add_option("--set", overrides, "Override one config key, key=value (repeatable)");
	app.add_option("-w,--workdir", workdir, "Working directory for artifacts");
	auto *seed_opt = app.add_option("-s,--seed", seed, "Random seed");
	app.add_flag("-q,--quiet", quiet, "Suppress progress lines");

	for (const auto &name : aqcast::stage_names()) {
		app.add_subcommand(name, "Run the " + name + " stage");
	}
	app.add_subcommand("run-all", "Run every stage in order");

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError &e) {
		const int rc = app.exit(e);
		return rc == 0 ? 0 : 2;
	}

	try {
		aqcast::RunConfig cfg = config_path.empty() ? aqcast::RunConfig{} : aqcast::RunConfig::load(config_path);
		for (const auto &kv : overrides) {
			const auto eq = kv.find('=');
			if (eq == std::string::npos) {
				throw aqcast::ConfigError("--set expects key=value, got '" + kv + "'");
			}
			cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
		}
		if (!workdir.empty()) {
			cfg.workdir = workdir;
		}
		if (seed_opt->count() > 0) {
			cfg.seed = seed;
		}
		if (quiet) {
			cfg.quiet = true;
		}
		cfg.validate();
		aqcast::run_stage(app.get_subcommands().front()->get_name(), cfg);
	} catch (const std::exception &e) {
		std::cerr << "aqcast: " << e.what() << '\n';
		return aqcast::exit_code_for(e);
	}
	return 0;
}
