#include "aqcast/jointdist.hpp"

#include "aqcast/numeric.hpp"
#include "aqcast/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>

namespace aqcast {

namespace {

const std::vector<double> &percentile_knots() {
	static const std::vector<double> u = [] {
		std::vector<double> v(99);
		for (int k = 1; k <= 99; ++k) {
			v[static_cast<std::size_t>(k - 1)] = normal_quantile(k / 100.0);
		}
		return v;
	}();
	return u;
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

double edge_slope(double h0, double h1, double d0, double d1) {
	double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
	if (sign(d) != sign(d0)) {
		d = 0.0;
	} else if (sign(d0) != sign(d1) && std::abs(d) > 3.0 * std::abs(d0)) {
		d = 3.0 * d0;
	}
	return d;
}

double hermite(double t, double h, double z0, double z1, double d0, double d1) {
	const double t2 = t * t;
	const double t3 = t2 * t;
	return (2 * t3 - 3 * t2 + 1) * z0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * z1 + (t3 - t2) * h * d1;
}

double hermite_dt(double t, double h, double z0, double z1, double d0, double d1) {
	const double t2 = t * t;
	return (6 * t2 - 6 * t) * z0 + (3 * t2 - 4 * t + 1) * h * d0 + (-6 * t2 + 6 * t) * z1 + (3 * t2 - 2 * t) * h * d1;
}

} // namespace

MarginalTransform fit_marginal(std::span<const double> q) {
	if (q.size() != 99) {
		throw JointError("fit_marginal: expected 99 percentiles");
	}
	const double qmax = *std::max_element(q.begin(), q.end());
	MarginalTransform m;
	m.u_ = percentile_knots();
	m.z_.resize(99);
	double prev = 0.0;
	for (std::size_t k = 0; k < 99; ++k) {
		if (!(q[k] > 0.0) || !std::isfinite(q[k])) {
			throw JointError("fit_marginal: non-positive quantile");
		}
		double v = q[k];
		if (k > 0 && v <= prev) {
			v = prev + 1e-9 * qmax;
		}
		prev = v;
		m.z_[k] = std::log(v);
	}
	for (std::size_t k = 1; k < 99; ++k) {
		// log can merge values that differ by a tiny amount
		if (m.z_[k] <= m.z_[k - 1]) {
			m.z_[k] = std::nextafter(m.z_[k - 1], INFINITY);
		}
	}
	const std::size_t n = 99;
	std::vector<double> h(n - 1);
	std::vector<double> del(n - 1);
	for (std::size_t k = 0; k + 1 < n; ++k) {
		h[k] = m.u_[k + 1] - m.u_[k];
		del[k] = (m.z_[k + 1] - m.z_[k]) / h[k];
	}
	m.dz_.assign(n, 0.0);
	for (std::size_t k = 1; k + 1 < n; ++k) {
		if (del[k - 1] * del[k] > 0.0) {
			const double w1 = 2.0 * h[k] + h[k - 1];
			const double w2 = h[k] + 2.0 * h[k - 1];
			m.dz_[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
		}
	}
	m.dz_[0] = edge_slope(h[0], h[1], del[0], del[1]);
	m.dz_[n - 1] = edge_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
	m.lo_slope_ = del[0];
	m.hi_slope_ = del[n - 2];
	return m;
}

double MarginalTransform::f(double u) const {
	const std::size_t n = u_.size();
	if (n == 0) {
		throw JointError("MarginalTransform: not fitted");
	}
	if (u <= u_.front()) {
		return z_.front() + lo_slope_ * (u - u_.front());
	}
	if (u >= u_.back()) {
		return z_.back() + hi_slope_ * (u - u_.back());
	}
	const auto it = std::upper_bound(u_.begin(), u_.end(), u);
	const std::size_t k = static_cast<std::size_t>(it - u_.begin()) - 1;
	const double hk = u_[k + 1] - u_[k];
	return hermite((u - u_[k]) / hk, hk, z_[k], z_[k + 1], dz_[k], dz_[k + 1]);
}

double MarginalTransform::g(double z) const {
	const std::size_t n = z_.size();
	if (n == 0) {
		throw JointError("MarginalTransform: not fitted");
	}
	if (z <= z_.front()) {
		return u_.front() + (z - z_.front()) / lo_slope_;
	}
	if (z >= z_.back()) {
		return u_.back() + (z - z_.back()) / hi_slope_;
	}
	const auto it = std::upper_bound(z_.begin(), z_.end(), z);
	const std::size_t k = static_cast<std::size_t>(it - z_.begin()) - 1;
	const double hk = u_[k + 1] - u_[k];
	// safeguarded Newton on the monotone segment
	double lo = 0.0;
	double hi = 1.0;
	double t = (z - z_[k]) / (z_[k + 1] - z_[k]);
	for (int it2 = 0; it2 < 100; ++it2) {
		const double r = hermite(t, hk, z_[k], z_[k + 1], dz_[k], dz_[k + 1]) - z;
		if (r > 0.0) {
			hi = t;
		} else {
			lo = t;
		}
		if (r == 0.0 || hi - lo < 1e-16) {
			break;
		}
		const double dr = hermite_dt(t, hk, z_[k], z_[k + 1], dz_[k], dz_[k + 1]);
		double next = dr > 0.0 ? t - r / dr : 0.5 * (lo + hi);
		if (!(next > lo && next < hi)) {
			next = 0.5 * (lo + hi);
		}
		if (std::abs(next - t) < 1e-15) {
			t = next;
			break;
		}
		t = next;
	}
	return u_[k] + t * hk;
}

double MarginalTransform::cdf(double y) const {
	if (!(y > 0.0)) {
		throw JointError("cdf: concentration must be positive");
	}
	return normal_cdf(g(std::log(y)));
}

double MarginalTransform::inv_cdf(double p) const {
	if (!(p > 0.0 && p < 1.0)) {
		throw JointError("inv_cdf: probability outside (0, 1)");
	}
	return std::exp(f(normal_quantile(p)));
}

double standardize_residual(const MarginalTransform &m, double y) {
	if (!(y > 0.0)) {
		throw JointError("standardize_residual: concentration must be positive");
	}
	return m.g(std::log(y));
}

namespace {

double min_eigen(const Eigen::MatrixXd &M) {
	const Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
	return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

} // namespace

CorrModel corr_from_blocks(std::vector<Eigen::MatrixXd> same, std::vector<Eigen::MatrixXd> cross) {
	CorrModel c;
	c.horizons = static_cast<int>(same.size());
	if (c.horizons == 0) {
		throw JointError("corr_from_blocks: no horizons");
	}
	c.stations = static_cast<int>(same.front().rows());
	if (cross.size() != same.size()) {
		throw JointError("corr_from_blocks: cross blocks must have one entry per horizon");
	}
	c.same = std::move(same);
	c.cross = std::move(cross);
	const auto S = static_cast<Eigen::Index>(c.stations);
	c.chol.resize(c.same.size());
	c.cond.assign(c.same.size(), Eigen::MatrixXd());
	c.cond_chol.assign(c.same.size(), Eigen::MatrixXd());
	c.gain.assign(c.same.size(), Eigen::MatrixXd::Zero(S, S));
	for (std::size_t h = 0; h < c.same.size(); ++h) {
		Eigen::LLT<Eigen::MatrixXd> llt(c.same[h]);
		if (llt.info() != Eigen::Success) {
			throw JointError("corr_from_blocks: same-horizon block not positive definite");
		}
		c.chol[h] = llt.matrixL();
		if (h == 0) {
			c.cond[h] = c.same[h];
			c.cond_chol[h] = c.chol[h];
			continue;
		}
		const Eigen::MatrixXd &X = c.cross[h];
		// gain = X' C_{h-1,h-1}^{-1}
		const Eigen::MatrixXd sol = Eigen::LLT<Eigen::MatrixXd>(c.same[h - 1]).solve(X);
		c.gain[h] = sol.transpose();
		Eigen::MatrixXd cond = c.same[h] - X.transpose() * sol;
		cond = 0.5 * (cond + cond.transpose());
		Eigen::LLT<Eigen::MatrixXd> cl(cond);
		if (cl.info() != Eigen::Success) {
			throw JointError("corr_from_blocks: conditional covariance not positive definite");
		}
		c.cond[h] = cond;
		c.cond_chol[h] = cl.matrixL();
	}
	return c;
}

CorrModel corr_identity(int stations, int horizons) {
	const auto S = static_cast<Eigen::Index>(stations);
	std::vector<Eigen::MatrixXd> same(static_cast<std::size_t>(horizons), Eigen::MatrixXd::Identity(S, S));
	std::vector<Eigen::MatrixXd> cross(static_cast<std::size_t>(horizons), Eigen::MatrixXd::Zero(S, S));
	return corr_from_blocks(std::move(same), std::move(cross));
}

CorrModel estimate_corr(const Eigen::MatrixXd &residuals, int stations, int horizons,
                        const std::vector<double> &shrink_grid) {
	const auto S = static_cast<Eigen::Index>(stations);
	const auto H = static_cast<Eigen::Index>(horizons);
	if (residuals.cols() != S * H) {
		throw JointError("estimate_corr: column count must be stations x horizons");
	}
	if (residuals.rows() < 20) {
		throw JointError("estimate_corr: at least 20 forecast dates required");
	}
	const Eigen::RowVectorXd mu = residuals.colwise().mean();
	const Eigen::MatrixXd X = residuals.rowwise() - mu;
	const Eigen::VectorXd sd = (X.colwise().squaredNorm() / static_cast<double>(X.rows())).cwiseSqrt().transpose();
	if ((sd.array() <= 0.0).any()) {
		throw JointError("estimate_corr: constant residual column");
	}
	auto corr = [&](Eigen::Index a, Eigen::Index b) {
		return X.col(a).dot(X.col(b)) / (static_cast<double>(X.rows()) * sd[a] * sd[b]);
	};
	std::vector<Eigen::MatrixXd> same(static_cast<std::size_t>(H), Eigen::MatrixXd::Identity(S, S));
	std::vector<Eigen::MatrixXd> cross(static_cast<std::size_t>(H), Eigen::MatrixXd::Zero(S, S));
	for (Eigen::Index h = 0; h < H; ++h) {
		for (Eigen::Index i = 0; i < S; ++i) {
			for (Eigen::Index j = 0; j < S; ++j) {
				if (i != j) {
					same[static_cast<std::size_t>(h)](i, j) = corr(h * S + i, h * S + j);
				}
				if (h > 0) {
					cross[static_cast<std::size_t>(h)](i, j) = corr((h - 1) * S + i, h * S + j);
				}
			}
		}
	}
	const auto I = Eigen::MatrixXd::Identity(S, S);
	for (double lambda : shrink_grid) {
		std::vector<Eigen::MatrixXd> ss(same.size());
		std::vector<Eigen::MatrixXd> cc(cross.size());
		bool ok = true;
		for (std::size_t h = 0; h < same.size() && ok; ++h) {
			ss[h] = (1.0 - lambda) * same[h] + lambda * I;
			cc[h] = (1.0 - lambda) * cross[h];
			ok = min_eigen(ss[h]) > 1e-8;
		}
		for (std::size_t h = 1; h < same.size() && ok; ++h) {
			const Eigen::MatrixXd cond = ss[h] - cc[h].transpose() * ss[h - 1].ldlt().solve(cc[h]);
			ok = min_eigen(cond) > 1e-8;
		}
		if (ok) {
			auto c = corr_from_blocks(std::move(ss), std::move(cc));
			c.shrinkage = lambda;
			return c;
		}
	}
	throw JointError("estimate_corr: no shrinkage level gives positive definite blocks");
}

ConditionalParams conditional_params(const CorrModel &corr, const Eigen::VectorXd &eps_prev, int h) {
	if (h < 1 || h >= corr.horizons) {
		throw JointError("conditional_params: horizon index must be in [1, H)");
	}
	const auto k = static_cast<std::size_t>(h);
	return {corr.gain[k] * eps_prev, corr.cond[k], corr.cond_chol[k]};
}

SamplePaths simulate_eps(const CorrModel &corr, int n, std::uint64_t seed) {
	SamplePaths out;
	out.n = n;
	out.stations = corr.stations;
	out.horizons = corr.horizons;
	out.seed = seed;
	out.values.assign(static_cast<std::size_t>(n) * corr.stations * corr.horizons, 0.0);
	const auto S = static_cast<Eigen::Index>(corr.stations);
	Eigen::VectorXd eta(S);
	Eigen::VectorXd eps(S);
	for (int p = 0; p < n; ++p) {
		NormalStream z(stream_seed(seed, static_cast<std::uint64_t>(p)));
		for (int h = 0; h < corr.horizons; ++h) {
			for (Eigen::Index s = 0; s < S; ++s) {
				eta[s] = z();
			}
			const auto k = static_cast<std::size_t>(h);
			if (h == 0) {
				eps = corr.chol[0] * eta;
			} else {
				eps = corr.gain[k] * eps + corr.cond_chol[k] * eta;
			}
			for (Eigen::Index s = 0; s < S; ++s) {
				out.at(p, static_cast<int>(s), h) = eps[s];
			}
		}
	}
	return out;
}

SamplePaths simulate_paths(const std::vector<MarginalTransform> &transforms, const CorrModel &corr, int n,
                           std::uint64_t seed) {
	if (transforms.size() != static_cast<std::size_t>(corr.stations) * corr.horizons) {
		throw JointError("simulate_paths: one transform per station and horizon required");
	}
	auto paths = simulate_eps(corr, n, seed);
	for (int p = 0; p < n; ++p) {
		for (int s = 0; s < corr.stations; ++s) {
			for (int h = 0; h < corr.horizons; ++h) {
				auto &v = paths.at(p, s, h);
				v = std::exp(transforms[static_cast<std::size_t>(s * corr.horizons + h)].f(v));
			}
		}
	}
	return paths;
}

int LevelRule::count_for_zone(int zone) const {
	const auto it = zone_count_override.find(zone);
	return it == zone_count_override.end() ? zone_count : it->second;
}

ProtocolConfig ProtocolConfig::defaults(std::map<int, int> zone_of) {
	ProtocolConfig c;
	c.zone_of = std::move(zone_of);
	c.levels.push_back({"prewarning", 180.0, 2, 2, 3, 3, {}});
	c.levels.push_back({"warning", 200.0, 2, 2, 3, 3, {}});
	c.levels.push_back({"alert", 400.0, 3, 3, 0, 0, {{4, 2}}});
	return c;
}

void ProtocolConfig::validate() const {
	for (const auto &l : levels) {
		if (!(l.threshold > 0.0)) {
			throw JointError("protocol: threshold must be positive");
		}
		if (l.zone_count < 1 || l.zone_hours < 1 || l.network_count < 0 ||
		    (l.network_count > 0 && l.network_hours < 1)) {
			throw JointError("protocol: counts and windows must be at least 1");
		}
		for (const auto &[z, c] : l.zone_count_override) {
			if (c < 1) {
				throw JointError("protocol: zone override must be at least 1");
			}
		}
	}
}

namespace {

bool window_rule(const std::vector<std::size_t> &members, const std::vector<std::uint8_t> &exceed, int H, int count,
                 int hours, bool strict) {
	if (static_cast<int>(members.size()) < count) {
		return false;
	}
	for (int w = 0; w + hours <= H; ++w) {
		if (strict) {
			int n = 0;
			for (std::size_t s : members) {
				bool all = true;
				for (int h = w; h < w + hours && all; ++h) {
					all = exceed[s * static_cast<std::size_t>(H) + static_cast<std::size_t>(h)] != 0;
				}
				n += all ? 1 : 0;
			}
			if (n >= count) {
				return true;
			}
		} else {
			bool all = true;
			for (int h = w; h < w + hours && all; ++h) {
				int n = 0;
				for (std::size_t s : members) {
					n += exceed[s * static_cast<std::size_t>(H) + static_cast<std::size_t>(h)];
				}
				all = n >= count;
			}
			if (all) {
				return true;
			}
		}
	}
	return false;
}

} // namespace

LevelOutcome evaluate_level(const LevelRule &rule, const std::vector<int> &codes, const std::map<int, int> &zone_of,
                            const std::vector<std::uint8_t> &exceed, int horizons, bool strict) {
	if (horizons < rule.zone_hours || (rule.network_count > 0 && horizons < rule.network_hours)) {
		throw JointError("protocol: horizon shorter than the required consecutive window");
	}
	std::map<int, std::vector<std::size_t>> members;
	std::vector<std::size_t> all(codes.size());
	for (std::size_t s = 0; s < codes.size(); ++s) {
		const auto it = zone_of.find(codes[s]);
		if (it == zone_of.end()) {
			throw JointError("protocol: station " + std::to_string(codes[s]) + " has no zone");
		}
		members[it->second].push_back(s);
		all[s] = s;
	}
	LevelOutcome out;
	for (const auto &[zone, m] : members) {
		const bool fired = window_rule(m, exceed, horizons, rule.count_for_zone(zone), rule.zone_hours, strict);
		out.zones[zone] = fired;
		out.city = out.city || fired;
	}
	if (!out.city && rule.network_count > 0) {
		out.city = window_rule(all, exceed, horizons, rule.network_count, rule.network_hours, strict);
	}
	return out;
}

EventProbabilities protocol_probability(const SamplePaths &paths, const std::vector<int> &codes,
                                        const ProtocolConfig &cfg) {
	cfg.validate();
	if (codes.size() != static_cast<std::size_t>(paths.stations)) {
		throw JointError("protocol_probability: one code per station required");
	}
	const int S = paths.stations;
	const int H = paths.horizons;
	EventProbabilities ev;
	ev.n = paths.n;
	std::vector<std::uint8_t> exceed(static_cast<std::size_t>(S) * H);
	for (const auto &rule : cfg.levels) {
		ev.order.push_back(rule.name);
		LevelProbability lp;
		for (int s = 0; s < S; ++s) {
			lp.stations[codes[static_cast<std::size_t>(s)]].assign(static_cast<std::size_t>(H), 0.0);
		}
		std::size_t city = 0;
		std::map<int, std::size_t> zone_hits;
		for (int p = 0; p < paths.n; ++p) {
			for (int s = 0; s < S; ++s) {
				auto &row = lp.stations[codes[static_cast<std::size_t>(s)]];
				for (int h = 0; h < H; ++h) {
					const bool e = paths.at(p, s, h) > rule.threshold;
					exceed[static_cast<std::size_t>(s * H + h)] = e;
					row[static_cast<std::size_t>(h)] += e ? 1.0 : 0.0;
				}
			}
			const auto o = evaluate_level(rule, codes, cfg.zone_of, exceed, H, cfg.strict);
			city += o.city ? 1 : 0;
			for (const auto &[z, f] : o.zones) {
				zone_hits[z] += f ? 1 : 0;
			}
		}
		const double N = std::max(1, paths.n);
		lp.city = static_cast<double>(city) / N;
		for (const auto &[z, c] : zone_hits) {
			lp.zones[z] = static_cast<double>(c) / N;
		}
		for (auto &[code, row] : lp.stations) {
			for (auto &v : row) {
				v /= N;
			}
		}
		ev.levels[rule.name] = std::move(lp);
	}
	return ev;
}

nlohmann::json event_probabilities_to_json(const EventProbabilities &ev) {
	nlohmann::json j = nlohmann::json::object();
	for (const auto &name : ev.order) {
		const auto &lp = ev.levels.at(name);
		nlohmann::json zones = nlohmann::json::object();
		for (const auto &[z, p] : lp.zones) {
			zones[std::to_string(z)] = p;
		}
		nlohmann::json stations = nlohmann::json::object();
		for (const auto &[s, row] : lp.stations) {
			stations[std::to_string(s)] = row;
		}
		j[name] = {{"city", lp.city}, {"zones", zones}, {"stations", stations}};
	}
	return j;
}

std::map<std::string, double> event_oracle_bruteforce(const DiscreteScenario &sc, const ProtocolConfig &cfg) {
	cfg.validate();
	const std::size_t cells = sc.codes.size() * static_cast<std::size_t>(sc.horizons);
	if (sc.cells.size() != cells) {
		throw JointError("oracle: one outcome list per station and hour required");
	}
	double combos = 1.0;
	for (const auto &c : sc.cells) {
		if (c.empty()) {
			throw JointError("oracle: empty outcome list");
		}
		combos *= static_cast<double>(c.size());
	}
	if (combos > 1e6) {
		throw JointError("oracle: outcome space too large");
	}
	std::map<std::string, double> out;
	for (const auto &l : cfg.levels) {
		out[l.name] = 0.0;
	}
	std::vector<std::size_t> idx(cells, 0);
	std::vector<std::uint8_t> exceed(cells);
	while (true) {
		double prob = 1.0;
		for (std::size_t i = 0; i < cells; ++i) {
			prob *= sc.cells[i][idx[i]].second;
		}
		if (prob > 0.0) {
			for (const auto &rule : cfg.levels) {
				for (std::size_t i = 0; i < cells; ++i) {
					exceed[i] = sc.cells[i][idx[i]].first > rule.threshold;
				}
				if (evaluate_level(rule, sc.codes, cfg.zone_of, exceed, sc.horizons, cfg.strict).city) {
					out[rule.name] += prob;
				}
			}
		}
		std::size_t i = 0;
		while (i < cells && ++idx[i] == sc.cells[i].size()) {
			idx[i++] = 0;
		}
		if (i == cells) {
			break;
		}
	}
	return out;
}

SamplePaths sample_scenario(const DiscreteScenario &sc, int n, std::uint64_t seed) {
	SamplePaths out;
	out.n = n;
	out.stations = static_cast<int>(sc.codes.size());
	out.horizons = sc.horizons;
	out.seed = seed;
	out.values.assign(static_cast<std::size_t>(n) * sc.codes.size() * static_cast<std::size_t>(sc.horizons), 0.0);
	for (int p = 0; p < n; ++p) {
		NormalStream z(stream_seed(seed, static_cast<std::uint64_t>(p)));
		for (int s = 0; s < out.stations; ++s) {
			for (int h = 0; h < out.horizons; ++h) {
				const auto &cell = sc.cells[static_cast<std::size_t>(s * out.horizons + h)];
				const double u = z.uniform();
				double acc = 0.0;
				double v = cell.back().first;
				for (const auto &[val, pr] : cell) {
					acc += pr;
					if (u < acc) {
						v = val;
						break;
					}
				}
				out.at(p, s, h) = v;
			}
		}
	}
	return out;
}

} // namespace aqcast
