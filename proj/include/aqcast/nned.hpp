#pragma once

#include "aqcast/dataset.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqcast {

class NnedError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

enum class Activation { Relu, Linear };

struct NnedConfig {
	int C = 6;
	int T = 48;
	int S = 6;
	int H = 16;
	int t_past = 24;
	int T_out = 48;
	Activation activation = Activation::Relu;
	/// Widths of hidden layers in the dense head; empty gives a single affine map.
	std::vector<int> head_hidden;

	void validate() const;
	std::size_t input_size() const { return static_cast<std::size_t>(C * T * S); }
	std::size_t output_size() const { return static_cast<std::size_t>(T_out * S); }
};

/// Offsets of each parameter block inside the flat parameter vector.
struct NnedLayout {
	std::size_t enc_w = 0; // [H][S][C][t_past][S]
	std::size_t enc_b = 0; // [H][S]
	std::size_t dec_w = 0; // [H]
	std::size_t dec_b = 0; // [1]
	std::vector<std::size_t> head_w; // per layer [out][in]
	std::vector<std::size_t> head_b; // per layer [out]
	std::vector<std::size_t> head_in;
	std::vector<std::size_t> head_out;
	std::size_t total = 0;
};

NnedLayout nned_layout(const NnedConfig &cfg);

struct NnedModel {
	NnedConfig config;
	std::vector<double> params;
	/// Per-channel standardisation of inputs and of the target.
	std::vector<double> in_mean;
	std::vector<double> in_std;
	double out_mean = 0.0;
	double out_std = 1.0;
	std::uint64_t seed = 0;
	int epoch = 0;
};

NnedModel nned_init(const NnedConfig &cfg, std::uint64_t seed);

/// Causal agnostic convolution, pre-activation. x is [C][T][S]; result is [H][T][S].
std::vector<double> agnostic_conv_forward(const NnedConfig &cfg, std::span<const double> x,
                                          std::span<const double> kernels, std::span<const double> biases);
/// Per-position merge of H channels: [H][T][S] -> [T][S], pre-activation.
std::vector<double> decode(const NnedConfig &cfg, std::span<const double> hidden, std::span<const double> weights,
                           double bias);
/// Dense head: [T][S] -> [T_out][S].
std::vector<double> mlp_head(const NnedConfig &cfg, std::span<const double> decoded, std::span<const double> params);

/// Full network on standardised input, standardised output.
std::vector<double> nned_forward(const NnedModel &model, std::span<const double> x);
/// Mean squared error over outputs and its exact gradient; returns the loss.
double nned_backward(const NnedModel &model, std::span<const double> x, std::span<const double> y,
                     std::vector<double> &grad);

struct NnedSample {
	std::vector<double> x;
	std::vector<double> y;
};

struct TrainConfig {
	double learning_rate = 1e-3;
	int batch_size = 16;
	int epochs = 30;
	std::uint64_t seed = 1;
	double validation_fraction = 0.15;
	int patience = 5;
	bool adam = true;
};

struct TrainResult {
	std::vector<double> train_loss;
	std::vector<double> validation_loss;
	int best_epoch = 0;
	bool early_stopped = false;
};

/// Trains on standardised samples. Validation uses the chronologically last fraction.
TrainResult nned_train(NnedModel &model, const std::vector<NnedSample> &samples, const TrainConfig &cfg);

/// Input channel order: pollution (log), each weather variable, pollution forecast (log).
struct NnedInputs {
	const SpatioTemporalFrame *pollution = nullptr; // complete, one channel, raw units
	const SpatioTemporalFrame *weather = nullptr;   // complete
	const SpatioTemporalFrame *forecast = nullptr;  // complete, one channel, raw units
};

int nned_channel_count(const NnedInputs &in);
/// Raw (unstandardised) input for forecast origin `origin` (frame offset of the last observed hour).
/// Pollution covers [origin - T + 1, origin]; exogenous channels cover [origin + 1, origin + T].
std::vector<double> nned_raw_input(const NnedConfig &cfg, const NnedInputs &in, std::size_t origin);
/// log(x + 1) pollution over [origin + 1, origin + T_out], [T_out][S].
std::vector<double> nned_raw_target(const NnedConfig &cfg, const NnedInputs &in, std::size_t origin);
/// Origins with full input and target windows in [first, last].
std::vector<std::size_t> nned_valid_origins(const NnedConfig &cfg, std::size_t hours, std::size_t first,
                                            std::size_t last, std::size_t stride);

/// Fits standardisation from raw samples and returns standardised copies.
std::vector<NnedSample> nned_standardise(NnedModel &model, const std::vector<NnedSample> &raw);
std::vector<double> nned_standardise_input(const NnedModel &model, std::span<const double> raw);
/// Forecast in log(x + 1) units, [T_out][S].
std::vector<double> nned_predict(const NnedModel &model, std::span<const double> raw_input);

void nned_save(const NnedModel &model, const std::string &base);
NnedModel nned_load(const std::string &base);

std::string to_string(Activation a);
Activation activation_from_string(const std::string &s);

} // namespace aqcast
