#include "aqcast/nned.hpp"

#include "aqcast/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace aqcast {

void NnedConfig::validate() const {
	if (C <= 0 || T <= 0 || S <= 0 || H <= 0 || t_past <= 0 || T_out <= 0) {
		throw NnedError("nned config: all dimensions must be positive");
	}
	if (t_past > T) {
		throw NnedError("nned config: t_past must not exceed T");
	}
	for (int w : head_hidden) {
		if (w <= 0) {
			throw NnedError("nned config: head widths must be positive");
		}
	}
}

NnedLayout nned_layout(const NnedConfig &cfg) {
	cfg.validate();
	NnedLayout l;
	const auto H = static_cast<std::size_t>(cfg.H);
	const auto S = static_cast<std::size_t>(cfg.S);
	std::size_t off = 0;
	l.enc_w = off;
	off += H * S * static_cast<std::size_t>(cfg.C * cfg.t_past) * S;
	l.enc_b = off;
	off += H * S;
	l.dec_w = off;
	off += H;
	l.dec_b = off;
	off += 1;
	std::size_t in = static_cast<std::size_t>(cfg.T) * S;
	std::vector<std::size_t> widths;
	for (int w : cfg.head_hidden) {
		widths.push_back(static_cast<std::size_t>(w));
	}
	widths.push_back(cfg.output_size());
	for (std::size_t out : widths) {
		l.head_in.push_back(in);
		l.head_out.push_back(out);
		l.head_w.push_back(off);
		off += out * in;
		l.head_b.push_back(off);
		off += out;
		in = out;
	}
	l.total = off;
	return l;
}

NnedModel nned_init(const NnedConfig &cfg, std::uint64_t seed) {
	const auto l = nned_layout(cfg);
	NnedModel m;
	m.config = cfg;
	m.seed = seed;
	m.params.assign(l.total, 0.0);
	m.in_mean.assign(static_cast<std::size_t>(cfg.C), 0.0);
	m.in_std.assign(static_cast<std::size_t>(cfg.C), 1.0);
	std::mt19937_64 engine(stream_seed(seed, 0x4e4e4544ULL));
	auto fill = [&](std::size_t off, std::size_t n, double fan_in) {
		std::uniform_real_distribution<double> u(-std::sqrt(3.0 / fan_in), std::sqrt(3.0 / fan_in));
		for (std::size_t i = 0; i < n; ++i) {
			m.params[off + i] = u(engine);
		}
	};
	fill(l.enc_w, l.enc_b - l.enc_w, static_cast<double>(cfg.C * cfg.t_past * cfg.S));
	fill(l.dec_w, static_cast<std::size_t>(cfg.H), static_cast<double>(cfg.H));
	for (std::size_t k = 0; k < l.head_w.size(); ++k) {
		fill(l.head_w[k], l.head_in[k] * l.head_out[k], static_cast<double>(l.head_in[k]));
	}
	return m;
}

std::vector<double> agnostic_conv_forward(const NnedConfig &cfg, std::span<const double> x,
                                          std::span<const double> kernels, std::span<const double> biases) {
	const auto C = static_cast<std::size_t>(cfg.C);
	const auto T = static_cast<std::size_t>(cfg.T);
	const auto S = static_cast<std::size_t>(cfg.S);
	const auto H = static_cast<std::size_t>(cfg.H);
	const auto tp = static_cast<std::size_t>(cfg.t_past);
	if (x.size() != C * T * S || kernels.size() != H * S * C * tp * S || biases.size() != H * S) {
		throw NnedError("agnostic_conv_forward: shape mismatch");
	}
	const std::size_t P = tp - 1;
	std::vector<double> out(H * T * S);
	for (std::size_t h = 0; h < H; ++h) {
		for (std::size_t so = 0; so < S; ++so) {
			const double *k = kernels.data() + (h * S + so) * C * tp * S;
			for (std::size_t t = 0; t < T; ++t) {
				double acc = biases[h * S + so];
				for (std::size_t c = 0; c < C; ++c) {
					for (std::size_t tau = 0; tau < tp; ++tau) {
						if (t + tau < P) {
							continue; // top padding
						}
						const std::size_t ti = t + tau - P;
						const double *xr = x.data() + (c * T + ti) * S;
						const double *kr = k + (c * tp + tau) * S;
						for (std::size_t s = 0; s < S; ++s) {
							acc += kr[s] * xr[s];
						}
					}
				}
				out[(h * T + t) * S + so] = acc;
			}
		}
	}
	return out;
}

std::vector<double> decode(const NnedConfig &cfg, std::span<const double> hidden, std::span<const double> weights,
                           double bias) {
	const auto TS = static_cast<std::size_t>(cfg.T * cfg.S);
	const auto H = static_cast<std::size_t>(cfg.H);
	if (hidden.size() != H * TS || weights.size() != H) {
		throw NnedError("decode: shape mismatch");
	}
	std::vector<double> out(TS, bias);
	for (std::size_t h = 0; h < H; ++h) {
		for (std::size_t i = 0; i < TS; ++i) {
			out[i] += weights[h] * hidden[h * TS + i];
		}
	}
	return out;
}

namespace {

double act(Activation a, double v) { return a == Activation::Relu ? (v > 0.0 ? v : 0.0) : v; }
double act_grad(Activation a, double v) { return a == Activation::Relu ? (v > 0.0 ? 1.0 : 0.0) : 1.0; }

void affine(std::span<const double> W, std::span<const double> b, std::span<const double> in, std::vector<double> &out) {
	const std::size_t n_in = in.size();
	out.assign(b.begin(), b.end());
	for (std::size_t o = 0; o < out.size(); ++o) {
		const double *w = W.data() + o * n_in;
		double acc = 0.0;
		for (std::size_t i = 0; i < n_in; ++i) {
			acc += w[i] * in[i];
		}
		out[o] += acc;
	}
}

struct Cache {
	std::vector<double> enc_pre;
	std::vector<double> enc_act;
	std::vector<double> dec_pre;
	std::vector<double> dec_act;
	std::vector<std::vector<double>> head_pre; // per layer
	std::vector<std::vector<double>> head_in;  // per layer input
};

std::vector<double> forward_cached(const NnedModel &m, std::span<const double> x, Cache &c) {
	const auto &cfg = m.config;
	const auto l = nned_layout(cfg);
	if (m.params.size() != l.total) {
		throw NnedError("nned: parameter vector does not match config");
	}
	if (x.size() != cfg.input_size()) {
		throw NnedError("nned: input shape mismatch");
	}
	std::span<const double> p(m.params);
	c.enc_pre = agnostic_conv_forward(cfg, x, p.subspan(l.enc_w, l.enc_b - l.enc_w), p.subspan(l.enc_b, l.dec_w - l.enc_b));
	c.enc_act.resize(c.enc_pre.size());
	std::transform(c.enc_pre.begin(), c.enc_pre.end(), c.enc_act.begin(), [&](double v) { return act(cfg.activation, v); });
	c.dec_pre = decode(cfg, c.enc_act, p.subspan(l.dec_w, static_cast<std::size_t>(cfg.H)), p[l.dec_b]);
	c.dec_act.resize(c.dec_pre.size());
	std::transform(c.dec_pre.begin(), c.dec_pre.end(), c.dec_act.begin(), [&](double v) { return act(cfg.activation, v); });
	const std::size_t L = l.head_w.size();
	c.head_pre.resize(L);
	c.head_in.resize(L);
	std::vector<double> in = c.dec_act;
	for (std::size_t k = 0; k < L; ++k) {
		c.head_in[k] = in;
		affine(p.subspan(l.head_w[k], l.head_in[k] * l.head_out[k]), p.subspan(l.head_b[k], l.head_out[k]), in,
		       c.head_pre[k]);
		if (k + 1 < L) {
			in.resize(c.head_pre[k].size());
			std::transform(c.head_pre[k].begin(), c.head_pre[k].end(), in.begin(),
			               [&](double v) { return act(cfg.activation, v); });
		}
	}
	return c.head_pre.back();
}

} // namespace

std::vector<double> mlp_head(const NnedConfig &cfg, std::span<const double> decoded, std::span<const double> params) {
	const auto l = nned_layout(cfg);
	if (decoded.size() != static_cast<std::size_t>(cfg.T * cfg.S)) {
		throw NnedError("mlp_head: input shape mismatch");
	}
	const std::size_t base = l.head_w.front();
	if (params.size() != l.total - base) {
		throw NnedError("mlp_head: parameter shape mismatch");
	}
	std::vector<double> in(decoded.begin(), decoded.end());
	std::vector<double> out;
	for (std::size_t k = 0; k < l.head_w.size(); ++k) {
		affine(params.subspan(l.head_w[k] - base, l.head_in[k] * l.head_out[k]),
		       params.subspan(l.head_b[k] - base, l.head_out[k]), in, out);
		if (k + 1 < l.head_w.size()) {
			for (double &v : out) {
				v = act(cfg.activation, v);
			}
			in = out;
		}
	}
	return out;
}

std::vector<double> nned_forward(const NnedModel &model, std::span<const double> x) {
	Cache c;
	return forward_cached(model, x, c);
}

double nned_backward(const NnedModel &model, std::span<const double> x, std::span<const double> y,
                     std::vector<double> &grad) {
	const auto &cfg = model.config;
	if (y.size() != cfg.output_size()) {
		throw NnedError("nned_backward: target shape mismatch");
	}
	Cache c;
	const auto out = forward_cached(model, x, c);
	const auto l = nned_layout(cfg);
	grad.assign(l.total, 0.0);
	const double n = static_cast<double>(out.size());
	double loss = 0.0;
	std::vector<double> g(out.size());
	for (std::size_t i = 0; i < out.size(); ++i) {
		const double r = out[i] - y[i];
		loss += r * r;
		g[i] = 2.0 * r / n;
	}
	loss /= n;

	for (std::size_t k = l.head_w.size(); k-- > 0;) {
		const auto &in = c.head_in[k];
		const std::size_t n_in = l.head_in[k];
		const std::size_t n_out = l.head_out[k];
		double *gw = grad.data() + l.head_w[k];
		double *gb = grad.data() + l.head_b[k];
		const double *W = model.params.data() + l.head_w[k];
		std::vector<double> gin(n_in, 0.0);
		for (std::size_t o = 0; o < n_out; ++o) {
			const double go = g[o];
			gb[o] += go;
			if (go == 0.0) {
				continue;
			}
			double *gwr = gw + o * n_in;
			const double *wr = W + o * n_in;
			for (std::size_t i = 0; i < n_in; ++i) {
				gwr[i] += go * in[i];
				gin[i] += wr[i] * go;
			}
		}
		const auto &pre = k == 0 ? c.dec_pre : c.head_pre[k - 1];
		for (std::size_t i = 0; i < n_in; ++i) {
			gin[i] *= act_grad(cfg.activation, pre[i]);
		}
		g = std::move(gin);
	}

	const auto H = static_cast<std::size_t>(cfg.H);
	const auto T = static_cast<std::size_t>(cfg.T);
	const auto S = static_cast<std::size_t>(cfg.S);
	const auto C = static_cast<std::size_t>(cfg.C);
	const auto tp = static_cast<std::size_t>(cfg.t_past);
	const std::size_t TS = T * S;
	std::vector<double> genc(H * TS);
	for (std::size_t i = 0; i < TS; ++i) {
		grad[l.dec_b] += g[i];
	}
	for (std::size_t h = 0; h < H; ++h) {
		const double w = model.params[l.dec_w + h];
		double acc = 0.0;
		for (std::size_t i = 0; i < TS; ++i) {
			acc += g[i] * c.enc_act[h * TS + i];
			genc[h * TS + i] = w * g[i] * act_grad(cfg.activation, c.enc_pre[h * TS + i]);
		}
		grad[l.dec_w + h] += acc;
	}

	const std::size_t P = tp - 1;
	for (std::size_t h = 0; h < H; ++h) {
		for (std::size_t so = 0; so < S; ++so) {
			double *gk = grad.data() + l.enc_w + (h * S + so) * C * tp * S;
			double gbias = 0.0;
			for (std::size_t t = 0; t < T; ++t) {
				const double go = genc[(h * T + t) * S + so];
				gbias += go;
				if (go == 0.0) {
					continue;
				}
				for (std::size_t cc = 0; cc < C; ++cc) {
					for (std::size_t tau = 0; tau < tp; ++tau) {
						if (t + tau < P) {
							continue;
						}
						const double *xr = x.data() + (cc * T + t + tau - P) * S;
						double *gr = gk + (cc * tp + tau) * S;
						for (std::size_t s = 0; s < S; ++s) {
							gr[s] += go * xr[s];
						}
					}
				}
			}
			grad[l.enc_b + h * S + so] += gbias;
		}
	}
	return loss;
}

TrainResult nned_train(NnedModel &model, const std::vector<NnedSample> &samples, const TrainConfig &cfg) {
	if (samples.empty()) {
		throw NnedError("nned_train: empty dataset");
	}
	if (!(cfg.learning_rate > 0.0) || cfg.epochs < 1 || cfg.batch_size < 1) {
		throw NnedError("nned_train: invalid training config");
	}
	if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0)) {
		throw NnedError("nned_train: validation fraction must lie in [0, 1)");
	}
	const std::size_t N = samples.size();
	const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(N)));
	const std::size_t n_train = N - n_val;
	if (n_train == 0) {
		throw NnedError("nned_train: no training samples after the validation split");
	}
	const std::size_t P = model.params.size();
	std::vector<double> m1(P, 0.0);
	std::vector<double> m2(P, 0.0);
	std::vector<double> grad;
	std::vector<double> acc(P);
	std::vector<std::size_t> order(n_train);
	std::iota(order.begin(), order.end(), std::size_t{0});
	constexpr double b1 = 0.9;
	constexpr double b2 = 0.999;
	constexpr double eps = 1e-8;
	long step = 0;

	auto validation_loss = [&]() {
		double total = 0.0;
		for (std::size_t i = n_train; i < N; ++i) {
			const auto out = nned_forward(model, samples[i].x);
			double l = 0.0;
			for (std::size_t k = 0; k < out.size(); ++k) {
				const double r = out[k] - samples[i].y[k];
				l += r * r;
			}
			total += l / static_cast<double>(out.size());
		}
		return total / static_cast<double>(n_val);
	};

	TrainResult res;
	double best = std::numeric_limits<double>::infinity();
	std::vector<double> best_params = model.params;
	int since_best = 0;
	for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
		std::mt19937_64 engine(stream_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
		std::shuffle(order.begin(), order.end(), engine);
		double epoch_loss = 0.0;
		for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(cfg.batch_size)) {
			const std::size_t stop = std::min(n_train, start + static_cast<std::size_t>(cfg.batch_size));
			std::fill(acc.begin(), acc.end(), 0.0);
			for (std::size_t i = start; i < stop; ++i) {
				const auto &smp = samples[order[i]];
				const double l = nned_backward(model, smp.x, smp.y, grad);
				if (!std::isfinite(l)) {
					std::ostringstream msg;
					msg << "nned_train: non-finite loss at epoch " << epoch << ", sample " << order[i];
					throw NnedError(msg.str());
				}
				epoch_loss += l;
				for (std::size_t k = 0; k < P; ++k) {
					acc[k] += grad[k];
				}
			}
			const double inv = 1.0 / static_cast<double>(stop - start);
			++step;
			if (cfg.adam) {
				const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
				const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
				for (std::size_t k = 0; k < P; ++k) {
					const double gk = acc[k] * inv;
					m1[k] = b1 * m1[k] + (1.0 - b1) * gk;
					m2[k] = b2 * m2[k] + (1.0 - b2) * gk * gk;
					model.params[k] -= cfg.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
				}
			} else {
				for (std::size_t k = 0; k < P; ++k) {
					model.params[k] -= cfg.learning_rate * acc[k] * inv;
				}
			}
		}
		res.train_loss.push_back(epoch_loss / static_cast<double>(n_train));
		model.epoch = epoch + 1;
		if (n_val == 0) {
			best_params = model.params;
			res.best_epoch = epoch + 1;
			continue;
		}
		const double vl = validation_loss();
		if (!std::isfinite(vl)) {
			throw NnedError("nned_train: non-finite validation loss at epoch " + std::to_string(epoch));
		}
		res.validation_loss.push_back(vl);
		if (vl < best) {
			best = vl;
			best_params = model.params;
			res.best_epoch = epoch + 1;
			since_best = 0;
		} else if (++since_best >= cfg.patience) {
			res.early_stopped = true;
			break;
		}
	}
	model.params = best_params;
	model.epoch = res.best_epoch;
	return res;
}

int nned_channel_count(const NnedInputs &in) {
	return 2 + static_cast<int>(in.weather->channels());
}

std::vector<double> nned_raw_input(const NnedConfig &cfg, const NnedInputs &in, std::size_t origin) {
	const auto T = static_cast<std::size_t>(cfg.T);
	const auto S = static_cast<std::size_t>(cfg.S);
	const std::size_t hours = in.pollution->hours();
	if (static_cast<std::size_t>(nned_channel_count(in)) != static_cast<std::size_t>(cfg.C) ||
	    in.pollution->stations() != S) {
		throw NnedError("nned_raw_input: frames do not match the config");
	}
	if (origin + 1 < T || origin + T >= hours) {
		throw NnedError("nned_raw_input: origin too close to the frame edge");
	}
	std::vector<double> x(static_cast<std::size_t>(cfg.C) * T * S);
	for (std::size_t t = 0; t < T; ++t) {
		for (std::size_t s = 0; s < S; ++s) {
			x[t * S + s] = std::log(in.pollution->value(0, origin + 1 + t - T, s) + kLogEpsilon);
		}
	}
	std::size_t c = 1;
	for (std::size_t k = 0; k < in.weather->channels(); ++k, ++c) {
		for (std::size_t t = 0; t < T; ++t) {
			for (std::size_t s = 0; s < S; ++s) {
				x[(c * T + t) * S + s] = in.weather->value(k, origin + 1 + t, s);
			}
		}
	}
	for (std::size_t t = 0; t < T; ++t) {
		for (std::size_t s = 0; s < S; ++s) {
			x[(c * T + t) * S + s] = std::log(in.forecast->value(0, origin + 1 + t, s) + kLogEpsilon);
		}
	}
	return x;
}

std::vector<double> nned_raw_target(const NnedConfig &cfg, const NnedInputs &in, std::size_t origin) {
	const auto To = static_cast<std::size_t>(cfg.T_out);
	const auto S = static_cast<std::size_t>(cfg.S);
	if (origin + To >= in.pollution->hours()) {
		throw NnedError("nned_raw_target: target window beyond the frame");
	}
	std::vector<double> y(To * S);
	for (std::size_t t = 0; t < To; ++t) {
		for (std::size_t s = 0; s < S; ++s) {
			y[t * S + s] = std::log(in.pollution->value(0, origin + 1 + t, s) + kLogEpsilon);
		}
	}
	return y;
}

std::vector<std::size_t> nned_valid_origins(const NnedConfig &cfg, std::size_t hours, std::size_t first,
                                            std::size_t last, std::size_t stride) {
	std::vector<std::size_t> out;
	const auto T = static_cast<std::size_t>(cfg.T);
	const auto ahead = static_cast<std::size_t>(std::max(cfg.T, cfg.T_out));
	const std::size_t lo = std::max(first, T - 1);
	for (std::size_t o = lo; o <= last && o + ahead < hours; o += std::max<std::size_t>(stride, 1)) {
		out.push_back(o);
	}
	return out;
}

std::vector<NnedSample> nned_standardise(NnedModel &model, const std::vector<NnedSample> &raw) {
	if (raw.empty()) {
		throw NnedError("nned_standardise: no samples");
	}
	const auto C = static_cast<std::size_t>(model.config.C);
	const std::size_t per = static_cast<std::size_t>(model.config.T * model.config.S);
	std::vector<double> sum(C, 0.0);
	std::vector<double> sq(C, 0.0);
	double ysum = 0.0;
	double ysq = 0.0;
	std::size_t ny = 0;
	for (const auto &smp : raw) {
		for (std::size_t c = 0; c < C; ++c) {
			for (std::size_t i = 0; i < per; ++i) {
				const double v = smp.x[c * per + i];
				sum[c] += v;
				sq[c] += v * v;
			}
		}
		for (double v : smp.y) {
			ysum += v;
			ysq += v * v;
			++ny;
		}
	}
	const double n = static_cast<double>(raw.size() * per);
	for (std::size_t c = 0; c < C; ++c) {
		model.in_mean[c] = sum[c] / n;
		const double var = sq[c] / n - model.in_mean[c] * model.in_mean[c];
		model.in_std[c] = var > 1e-16 ? std::sqrt(var) : 1.0;
	}
	if (ny > 0) {
		model.out_mean = ysum / static_cast<double>(ny);
		const double var = ysq / static_cast<double>(ny) - model.out_mean * model.out_mean;
		model.out_std = var > 1e-16 ? std::sqrt(var) : 1.0;
	}
	std::vector<NnedSample> out;
	out.reserve(raw.size());
	for (const auto &smp : raw) {
		NnedSample s{nned_standardise_input(model, smp.x), smp.y};
		for (double &v : s.y) {
			v = (v - model.out_mean) / model.out_std;
		}
		out.push_back(std::move(s));
	}
	return out;
}

std::vector<double> nned_standardise_input(const NnedModel &model, std::span<const double> raw) {
	const auto C = static_cast<std::size_t>(model.config.C);
	const std::size_t per = static_cast<std::size_t>(model.config.T * model.config.S);
	if (raw.size() != C * per) {
		throw NnedError("nned_standardise_input: shape mismatch");
	}
	std::vector<double> x(raw.size());
	for (std::size_t c = 0; c < C; ++c) {
		for (std::size_t i = 0; i < per; ++i) {
			x[c * per + i] = (raw[c * per + i] - model.in_mean[c]) / model.in_std[c];
		}
	}
	return x;
}

std::vector<double> nned_predict(const NnedModel &model, std::span<const double> raw_input) {
	auto out = nned_forward(model, nned_standardise_input(model, raw_input));
	for (double &v : out) {
		v = v * model.out_std + model.out_mean;
	}
	return out;
}

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "linear"; }

Activation activation_from_string(const std::string &s) {
	if (s == "relu") {
		return Activation::Relu;
	}
	if (s == "linear") {
		return Activation::Linear;
	}
	throw NnedError("unknown activation: " + s);
}

void nned_save(const NnedModel &model, const std::string &base) {
	const auto &c = model.config;
	nlohmann::json header{
	    {"format", "aqcast-nned"},
	    {"config",
	     {{"C", c.C},
	      {"T", c.T},
	      {"S", c.S},
	      {"H", c.H},
	      {"t_past", c.t_past},
	      {"T_out", c.T_out},
	      {"activation", to_string(c.activation)},
	      {"head_hidden", c.head_hidden}}},
	    {"seed", model.seed},
	    {"epoch", model.epoch},
	    {"in_mean", model.in_mean},
	    {"in_std", model.in_std},
	    {"out_mean", model.out_mean},
	    {"out_std", model.out_std},
	    {"n_params", model.params.size()},
	    {"param_encoding", "float32-le"}};
	std::ofstream hj(base + ".json");
	if (!hj) {
		throw NnedError("nned_save: cannot write " + base + ".json");
	}
	hj << header.dump(2) << "\n";
	std::ofstream bin(base + ".bin", std::ios::binary);
	if (!bin) {
		throw NnedError("nned_save: cannot write " + base + ".bin");
	}
	for (double p : model.params) {
		const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(p));
		const unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
		                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
		bin.write(reinterpret_cast<const char *>(bytes), 4);
	}
	if (!bin) {
		throw NnedError("nned_save: write failed");
	}
}

NnedModel nned_load(const std::string &base) {
	std::ifstream hj(base + ".json");
	if (!hj) {
		throw NnedError("nned_load: cannot read " + base + ".json");
	}
	nlohmann::json h;
	try {
		hj >> h;
	} catch (const nlohmann::json::exception &e) {
		throw NnedError(std::string("nned_load: malformed header: ") + e.what());
	}
	if (h.value("format", "") != "aqcast-nned") {
		throw NnedError("nned_load: not an NNED checkpoint");
	}
	NnedModel m;
	const auto &c = h.at("config");
	m.config.C = c.at("C").get<int>();
	m.config.T = c.at("T").get<int>();
	m.config.S = c.at("S").get<int>();
	m.config.H = c.at("H").get<int>();
	m.config.t_past = c.at("t_past").get<int>();
	m.config.T_out = c.at("T_out").get<int>();
	m.config.activation = activation_from_string(c.at("activation").get<std::string>());
	m.config.head_hidden = c.at("head_hidden").get<std::vector<int>>();
	m.seed = h.at("seed").get<std::uint64_t>();
	m.epoch = h.at("epoch").get<int>();
	m.in_mean = h.at("in_mean").get<std::vector<double>>();
	m.in_std = h.at("in_std").get<std::vector<double>>();
	m.out_mean = h.at("out_mean").get<double>();
	m.out_std = h.at("out_std").get<double>();
	const auto n = h.at("n_params").get<std::size_t>();
	if (n != nned_layout(m.config).total) {
		throw NnedError("nned_load: parameter count does not match config");
	}
	std::ifstream bin(base + ".bin", std::ios::binary);
	if (!bin) {
		throw NnedError("nned_load: cannot read " + base + ".bin");
	}
	std::vector<unsigned char> bytes(n * 4);
	bin.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
	if (bin.gcount() != static_cast<std::streamsize>(bytes.size()) || bin.peek() != std::char_traits<char>::eof()) {
		throw NnedError("nned_load: parameter blob has the wrong size");
	}
	m.params.resize(n);
	for (std::size_t i = 0; i < n; ++i) {
		const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
		                           (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
		                           (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
		                           (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
		m.params[i] = static_cast<double>(std::bit_cast<float>(bits));
	}
	return m;
}

} // namespace aqcast
