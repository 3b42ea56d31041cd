#include "aqcast/jointdist.hpp"
#include "aqcast/numeric.hpp"
#include "aqcast/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace aqcast;

namespace {

std::vector<double> lognormal_q(double mu, double sigma) {
	std::vector<double> q(99);
	for (int k = 1; k <= 99; ++k) {
		q[static_cast<std::size_t>(k - 1)] = std::exp(mu + sigma * normal_quantile(k / 100.0));
	}
	return q;
}

std::vector<double> random_q(NormalStream &z, double tie_rate = 0.0) {
	std::vector<double> q(99);
	double v = 5.0 + 40.0 * z.uniform();
	for (auto &x : q) {
		v += z.uniform() < tie_rate ? 0.0 : 0.01 + 3.0 * z.uniform() * z.uniform();
		x = v;
	}
	return q;
}

double ks_normal(std::vector<double> x) {
	std::sort(x.begin(), x.end());
	const double n = static_cast<double>(x.size());
	double d = 0.0;
	for (std::size_t i = 0; i < x.size(); ++i) {
		const double F = normal_cdf(x[i]);
		d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
	}
	return d;
}

} // namespace

TEST_CASE("log-normal quantiles give an exactly linear transform") {
	const double mu = 3.2;
	const double sigma = 0.45;
	const auto m = fit_marginal(lognormal_q(mu, sigma));
	for (double u : {-2.3, -1.0, -0.37, 0.0, 0.5, 1.7, 2.3}) {
		CHECK(m.f(u) == doctest::Approx(mu + sigma * u).epsilon(1e-12));
	}
	CHECK(m.mode() == doctest::Approx(std::exp(mu)).epsilon(1e-12));
	CHECK(m.g(mu) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("marginal transform inverse pair and cdf contracts") {
	NormalStream z(8);
	const double u1 = normal_quantile(0.01);
	const double u99 = normal_quantile(0.99);
	double worst = 0.0;
	for (int trial = 0; trial < 200; ++trial) {
		const auto q = random_q(z);
		const auto m = fit_marginal(q);
		for (int i = 0; i <= 200; ++i) {
			const double u = u1 + (u99 - u1) * i / 200.0;
			worst = std::max(worst, std::abs(m.g(m.f(u)) - u));
		}
		CHECK(m.cdf(q[49]) == doctest::Approx(0.5).epsilon(1e-6));
		CHECK(1.0 - m.cdf(q[89]) == doctest::Approx(0.1).epsilon(1e-6));
		double prev = 0.0;
		for (double y = q[0] * 0.5; y < q[98] * 1.5; y += (q[98] - q[0]) / 300.0) {
			const double c = m.cdf(y);
			CHECK(c >= prev);
			prev = c;
		}
		for (int k = 5; k <= 95; k += 5) {
			const double y = q[static_cast<std::size_t>(k - 1)] * 1.0001;
			CHECK(m.inv_cdf(m.cdf(y)) == doctest::Approx(y).epsilon(1e-5));
		}
	}
	CHECK(worst <= 1e-6);
}

TEST_CASE("tied quantiles are separated and stay monotone") {
	NormalStream z(12);
	for (int trial = 0; trial < 50; ++trial) {
		const auto q = random_q(z, 0.2);
		const auto m = fit_marginal(q);
		for (std::size_t k = 1; k < 99; ++k) {
			CHECK(m.z_knots()[k] > m.z_knots()[k - 1]);
		}
		double prev = -INFINITY;
		for (double u = -3.0; u <= 3.0; u += 0.001) {
			const double v = m.f(u);
			CHECK(v >= prev);
			prev = v;
		}
		for (double u = -2.0; u <= 2.0; u += 0.1) {
			CHECK(std::abs(m.g(m.f(u)) - u) <= 1e-4);
		}
	}
}

TEST_CASE("standardized residuals") {
	const auto q = lognormal_q(3.0, 0.5);
	const auto m = fit_marginal(q);
	CHECK(std::abs(standardize_residual(m, m.mode())) < 1e-9);
	CHECK(standardize_residual(m, q[83]) == doctest::Approx(normal_quantile(0.84)).epsilon(1e-9));
	CHECK(standardize_residual(m, 10.0) < standardize_residual(m, 11.0));
	for (double p = 0.01; p <= 0.99; p += 0.01) {
		CHECK(std::abs(standardize_residual(m, m.inv_cdf(p)) - normal_quantile(p)) <= 1e-5);
	}
	CHECK_THROWS_AS(m.inv_cdf(1.0), JointError);
	CHECK_THROWS_AS(m.cdf(0.0), JointError);
	auto bad = q;
	bad[0] = 0.0;
	CHECK_THROWS_AS(fit_marginal(bad), JointError);
}

TEST_CASE("correlation estimates and Cholesky factors") {
	const int S = 3;
	const int H = 4;
	const int n = 400;
	NormalStream z(4);
	Eigen::MatrixXd R(n, S * H);
	for (Eigen::Index i = 0; i < R.size(); ++i) {
		R.data()[i] = z();
	}
	const auto c = estimate_corr(R, S, H);
	CHECK(c.shrinkage == 0.0);
	// each entry has standard error 1/sqrt(n); allow one 3-sigma excursion among the 39 entries
	int beyond3 = 0;
	double worst = 0.0;
	auto track = [&](double r) {
		beyond3 += std::abs(r) > 3.0 / std::sqrt(n) ? 1 : 0;
		worst = std::max(worst, std::abs(r));
	};
	for (int h = 0; h < H; ++h) {
		const auto &C = c.same[static_cast<std::size_t>(h)];
		for (int i = 0; i < S; ++i) {
			CHECK(C(i, i) == 1.0);
			for (int j = 0; j < S; ++j) {
				if (i < j) {
					track(C(i, j));
				}
				if (h > 0) {
					track(c.cross[static_cast<std::size_t>(h)](i, j));
				}
			}
		}
		CHECK((c.chol[static_cast<std::size_t>(h)] * c.chol[static_cast<std::size_t>(h)].transpose() - C).cwiseAbs().maxCoeff() <= 1e-10);
		if (h > 0) {
			const auto &L = c.cond_chol[static_cast<std::size_t>(h)];
			CHECK((L * L.transpose() - c.cond[static_cast<std::size_t>(h)]).cwiseAbs().maxCoeff() <= 1e-10);
			const Eigen::MatrixXd diff = C - c.cond[static_cast<std::size_t>(h)];
			CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(diff).eigenvalues().minCoeff() >= -1e-12);
		}
	}
	CHECK(beyond3 <= 1);
	CHECK(worst <= 4.0 / std::sqrt(n));

	Eigen::MatrixXd R2(500, 2);
	for (Eigen::Index i = 0; i < 500; ++i) {
		const double a = z();
		R2(i, 0) = a;
		R2(i, 1) = 0.6 * a + 0.8 * z();
	}
	const auto c2 = estimate_corr(R2, 2, 1);
	CHECK(c2.same[0](0, 1) == doctest::Approx(0.6).epsilon(0.1 / 0.6));
	CHECK(std::abs(c2.same[0](0, 1) - 0.6) <= 0.1);
}

TEST_CASE("shrinkage restores positive definiteness") {
	// perfectly collinear stations make C_{h,h} singular
	NormalStream z(6);
	Eigen::MatrixXd R(100, 4);
	for (Eigen::Index i = 0; i < 100; ++i) {
		const double a = z();
		const double b = z();
		R(i, 0) = a;
		R(i, 1) = a;
		R(i, 2) = b;
		R(i, 3) = b;
	}
	const auto c = estimate_corr(R, 2, 2);
	CHECK(c.shrinkage > 0.0);
	CHECK(c.shrinkage <= 0.05);
}

TEST_CASE("conditional parameters") {
	const double rho = 0.7;
	Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
	Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, rho);
	const auto c = corr_from_blocks({one, one, one}, {Eigen::MatrixXd::Zero(1, 1), x, x});
	Eigen::VectorXd e(1);
	e[0] = 1.3;
	const auto p = conditional_params(c, e, 1);
	CHECK(std::abs(p.mean[0] - rho * 1.3) <= 1e-12);
	CHECK(std::abs(p.cov(0, 0) - (1.0 - rho * rho)) <= 1e-12);

	const auto id = corr_identity(3, 2);
	Eigen::VectorXd e3 = Eigen::VectorXd::Constant(3, 2.0);
	const auto q = conditional_params(id, e3, 1);
	CHECK(q.mean.isZero());
	CHECK(q.cov.isApprox(Eigen::MatrixXd::Identity(3, 3)));
	CHECK_THROWS_AS(conditional_params(id, e3, 0), JointError);
}

TEST_CASE("simulation calibration, determinism and causality") {
	const int S = 2;
	const int H = 3;
	const int N = 10000;
	const auto id = corr_identity(S, H);
	const auto eps = simulate_eps(id, N, 17);
	for (int s = 0; s < S; ++s) {
		for (int h = 0; h < H; ++h) {
			std::vector<double> x(N);
			for (int p = 0; p < N; ++p) {
				x[static_cast<std::size_t>(p)] = eps.at(p, s, h);
			}
			CHECK(ks_normal(x) < 1.628 / std::sqrt(static_cast<double>(N)));
		}
	}
	CHECK(simulate_eps(id, 50, 17).values == simulate_eps(id, 50, 17).values);
	CHECK(simulate_eps(id, 50, 17).values != simulate_eps(id, 50, 18).values);

	std::vector<MarginalTransform> tr;
	for (int s = 0; s < S; ++s) {
		for (int h = 0; h < H; ++h) {
			tr.push_back(fit_marginal(lognormal_q(3.0 + 0.1 * s, 0.3 + 0.05 * h)));
		}
	}
	const auto paths = simulate_paths(tr, id, N, 5);
	for (int s = 0; s < S; ++s) {
		for (int h = 0; h < H; ++h) {
			std::vector<double> x(N);
			for (int p = 0; p < N; ++p) {
				x[static_cast<std::size_t>(p)] = paths.at(p, s, h);
			}
			std::sort(x.begin(), x.end());
			const auto &m = tr[static_cast<std::size_t>(s * H + h)];
			const double iqr = m.inv_cdf(0.75) - m.inv_cdf(0.25);
			CHECK(std::abs(x[N / 2] - m.inv_cdf(0.5)) <= 3.0 * iqr / std::sqrt(static_cast<double>(N)));
			for (double pr : {0.1, 0.5, 0.9}) {
				const double qp = m.inv_cdf(pr);
				const auto below = std::lower_bound(x.begin(), x.end(), qp) - x.begin();
				CHECK(std::abs(static_cast<double>(below) / N - pr) <= 2.0 / std::sqrt(static_cast<double>(N)));
			}
		}
	}

	// a shorter horizon set reuses the same draws: horizon h never depends on later draws
	Eigen::MatrixXd C = Eigen::MatrixXd::Identity(2, 2);
	C(0, 1) = C(1, 0) = 0.4;
	Eigen::MatrixXd X = Eigen::MatrixXd::Constant(2, 2, 0.3);
	const auto full = corr_from_blocks({C, C, C}, {X, X, X});
	const auto trunc = corr_from_blocks({C, C}, {X, X});
	const auto a = simulate_eps(full, 100, 3);
	const auto b = simulate_eps(trunc, 100, 3);
	bool same = true;
	for (int p = 0; p < 100; ++p) {
		for (int s = 0; s < 2; ++s) {
			for (int h = 0; h < 2; ++h) {
				same = same && a.at(p, s, h) == b.at(p, s, h);
			}
		}
	}
	CHECK(same);
}

TEST_CASE("protocol rules on deterministic paths") {
	std::map<int, int> zones{{1, 1}, {2, 1}, {3, 2}};
	auto cfg = ProtocolConfig::defaults(zones);
	SamplePaths paths;
	paths.n = 3;
	paths.stations = 3;
	paths.horizons = 6;
	paths.values.assign(3 * 3 * 6, 50.0);
	for (int p = 0; p < 3; ++p) {
		for (int h = 0; h < 6; ++h) {
			paths.at(p, 0, h) = 190.0;
			paths.at(p, 1, h) = 190.0;
		}
	}
	auto ev = protocol_probability(paths, {1, 2, 3}, cfg);
	CHECK(ev.levels["prewarning"].city == 1.0);
	CHECK(ev.levels["warning"].city == 0.0);
	CHECK(ev.levels["alert"].city == 0.0);
	CHECK(ev.levels["prewarning"].zones[1] == 1.0);
	CHECK(ev.levels["prewarning"].zones[2] == 0.0);
	CHECK(ev.levels["prewarning"].stations[1][0] == 1.0);
	CHECK(ev.levels["prewarning"].stations[3][0] == 0.0);

	std::fill(paths.values.begin(), paths.values.end(), 100.0);
	ev = protocol_probability(paths, {1, 2, 3}, cfg);
	for (const auto &[name, lp] : ev.levels) {
		CHECK(lp.city == 0.0);
	}

	// staggered exceedances: each hour has two stations above, never the same pair for two hours
	std::fill(paths.values.begin(), paths.values.end(), 100.0);
	for (int p = 0; p < 3; ++p) {
		paths.at(p, 0, 0) = paths.at(p, 1, 0) = 190.0;
		paths.at(p, 1, 1) = paths.at(p, 2, 1) = 190.0;
	}
	std::map<int, int> one_zone{{1, 1}, {2, 1}, {3, 1}};
	auto strict = ProtocolConfig::defaults(one_zone);
	CHECK(protocol_probability(paths, {1, 2, 3}, strict).levels["prewarning"].city == 0.0);
	auto relaxed = strict;
	relaxed.strict = false;
	CHECK(protocol_probability(paths, {1, 2, 3}, relaxed).levels["prewarning"].city == 1.0);

	// zone 4 needs only two stations for the alert
	std::map<int, int> z4{{1, 4}, {2, 4}, {3, 1}};
	std::fill(paths.values.begin(), paths.values.end(), 100.0);
	for (int p = 0; p < 3; ++p) {
		for (int h = 0; h < 3; ++h) {
			paths.at(p, 0, h) = paths.at(p, 1, h) = 450.0;
		}
	}
	CHECK(protocol_probability(paths, {1, 2, 3}, ProtocolConfig::defaults(z4)).levels["alert"].city == 1.0);
	std::map<int, int> z3{{1, 3}, {2, 3}, {3, 1}};
	CHECK(protocol_probability(paths, {1, 2, 3}, ProtocolConfig::defaults(z3)).levels["alert"].city == 0.0);

	paths.horizons = 2;
	paths.values.resize(3 * 3 * 2);
	CHECK_THROWS_AS(protocol_probability(paths, {1, 2, 3}, cfg), JointError);
}

TEST_CASE("brute-force oracle cases") {
	ProtocolConfig cfg;
	cfg.zone_of = {{1, 1}, {2, 1}};
	cfg.levels.push_back({"pair", 180.0, 2, 2, 0, 0, {}});
	DiscreteScenario sc;
	sc.codes = {1, 2};
	sc.horizons = 2;
	sc.cells.assign(4, {{100.0, 0.5}, {200.0, 0.5}});
	CHECK(event_oracle_bruteforce(sc, cfg)["pair"] == doctest::Approx(0.0625).epsilon(1e-15));

	sc.cells.assign(4, {{100.0, 1.0}});
	CHECK(event_oracle_bruteforce(sc, cfg)["pair"] == 0.0);

	ProtocolConfig single;
	single.zone_of = {{7, 1}};
	single.levels.push_back({"one", 180.0, 1, 1, 0, 0, {}});
	DiscreteScenario one;
	one.codes = {7};
	one.horizons = 1;
	one.cells = {{{100.0, 0.7}, {300.0, 0.3}}};
	CHECK(event_oracle_bruteforce(one, single)["one"] == doctest::Approx(0.3).epsilon(1e-15));

	DiscreteScenario big;
	big.codes = {1, 2};
	big.horizons = 12;
	big.cells.assign(24, {{1.0, 0.5}, {2.0, 0.25}, {3.0, 0.25}});
	CHECK_THROWS_AS(event_oracle_bruteforce(big, cfg), JointError);
}

TEST_CASE("Monte Carlo protocol probability agrees with enumeration") {
	const int N = 20000;
	ProtocolConfig cfg = ProtocolConfig::defaults({{1, 1}, {2, 1}, {3, 4}});
	DiscreteScenario sc;
	sc.codes = {1, 2, 3};
	sc.horizons = 3;
	for (int i = 0; i < 9; ++i) {
		sc.cells.push_back({{150.0, 0.3}, {190.0, 0.3}, {250.0, 0.2}, {450.0, 0.2}});
	}
	const auto exact = event_oracle_bruteforce(sc, cfg);
	const auto mc = protocol_probability(sample_scenario(sc, N, 9), sc.codes, cfg);
	for (const auto &[name, p] : exact) {
		const double tol = 4.0 * std::sqrt(std::max(p * (1.0 - p), 1e-12) / N);
		CHECK(std::abs(mc.levels.at(name).city - p) <= tol + 1e-12);
	}
}
