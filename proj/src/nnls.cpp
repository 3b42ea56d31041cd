#include "aqcast/chain.hpp"

#include <algorithm>
#include <cmath>

namespace aqcast {

namespace {

Eigen::VectorXd solve_passive(const Eigen::MatrixXd &A, const Eigen::VectorXd &b, const std::vector<bool> &passive) {
	std::vector<Eigen::Index> cols;
	for (std::size_t j = 0; j < passive.size(); ++j) {
		if (passive[j]) {
			cols.push_back(static_cast<Eigen::Index>(j));
		}
	}
	Eigen::VectorXd z = Eigen::VectorXd::Zero(A.cols());
	if (cols.empty()) {
		return z;
	}
	Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(cols.size()));
	for (std::size_t k = 0; k < cols.size(); ++k) {
		Ap.col(static_cast<Eigen::Index>(k)) = A.col(cols[k]);
	}
	Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Ap);
	qr.setThreshold(1e-12);
	const Eigen::VectorXd zp = qr.solve(b);
	for (std::size_t k = 0; k < cols.size(); ++k) {
		z[cols[k]] = zp[static_cast<Eigen::Index>(k)];
	}
	return z;
}

} // namespace

NnlsResult nnls(const Eigen::MatrixXd &A, const Eigen::VectorXd &b) {
	if (A.rows() != b.size()) {
		throw ChainError("nnls: dimension mismatch");
	}
	const auto n = A.cols();
	NnlsResult out;
	out.x = Eigen::VectorXd::Zero(n);
	if (n == 0) {
		return out;
	}
	std::vector<bool> passive(static_cast<std::size_t>(n), false);
	const double scale = std::max(1.0, (A.transpose() * b).cwiseAbs().maxCoeff());
	const double tol = 1e-13 * scale * std::max<double>(1.0, static_cast<double>(A.rows()));
	const int max_outer = 3 * static_cast<int>(n);

	Eigen::VectorXd &x = out.x;
	Eigen::VectorXd w = A.transpose() * (b - A * x);
	while (true) {
		Eigen::Index t = -1;
		double best = tol;
		for (Eigen::Index j = 0; j < n; ++j) {
			if (!passive[static_cast<std::size_t>(j)] && w[j] > best) {
				best = w[j];
				t = j;
			}
		}
		if (t < 0) {
			break;
		}
		if (++out.iterations > max_outer) {
			throw ChainError("nnls: no convergence after 3n iterations");
		}
		passive[static_cast<std::size_t>(t)] = true;
		for (int inner = 0; inner <= 3 * n; ++inner) {
			const Eigen::VectorXd z = solve_passive(A, b, passive);
			bool feasible = true;
			for (Eigen::Index j = 0; j < n; ++j) {
				if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) {
					feasible = false;
					break;
				}
			}
			if (feasible) {
				x = z;
				break;
			}
			double alpha = 1.0;
			for (Eigen::Index j = 0; j < n; ++j) {
				if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) {
					const double denom = x[j] - z[j];
					if (denom > 0.0) {
						alpha = std::min(alpha, x[j] / denom);
					}
				}
			}
			x += alpha * (z - x);
			for (Eigen::Index j = 0; j < n; ++j) {
				if (passive[static_cast<std::size_t>(j)] && x[j] <= 1e-15 * std::max(1.0, std::abs(z[j]))) {
					passive[static_cast<std::size_t>(j)] = false;
					x[j] = 0.0;
				}
			}
		}
		w = A.transpose() * (b - A * x);
	}
	return out;
}

double nnls_kkt_residual(const Eigen::MatrixXd &A, const Eigen::VectorXd &b, const Eigen::VectorXd &x) {
	const Eigen::VectorXd g = A.transpose() * (A * x - b);
	double worst = 0.0;
	for (Eigen::Index k = 0; k < x.size(); ++k) {
		if (x[k] < 0.0) {
			worst = std::max(worst, -x[k]);
		}
		worst = std::max(worst, x[k] > 0.0 ? std::abs(g[k]) : std::max(0.0, -g[k]));
	}
	return worst;
}

FslrModel fslr_fit(const std::vector<DriverRow> &drivers, std::span<const double> target_log) {
	if (drivers.size() != target_log.size()) {
		throw ChainError("fslr_fit: row count mismatch");
	}
	const auto n = static_cast<Eigen::Index>(drivers.size());
	if (n == 0) {
		throw ChainError("fslr_fit: no rows");
	}
	constexpr auto K = static_cast<Eigen::Index>(kDriverCount);
	Eigen::MatrixXd A(n, K);
	Eigen::VectorXd b(n);
	for (Eigen::Index i = 0; i < n; ++i) {
		for (Eigen::Index k = 0; k < K; ++k) {
			A(i, k) = driver_sign(static_cast<Driver>(k)) * drivers[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
		}
		b[i] = target_log[static_cast<std::size_t>(i)];
	}
	const Eigen::RowVectorXd col_mean = A.colwise().mean();
	const double y_mean = b.mean();
	A.rowwise() -= col_mean;
	b.array() -= y_mean;
	// near-constant columns carry no information once centred
	for (Eigen::Index k = 0; k < K; ++k) {
		if (A.col(k).cwiseAbs().maxCoeff() < 1e-12) {
			A.col(k).setZero();
		}
	}
	const auto sol = nnls(A, b);
	FslrModel m;
	m.rows = drivers.size();
	double icpt = y_mean;
	for (Eigen::Index k = 0; k < K; ++k) {
		m.beta[static_cast<std::size_t>(k)] = sol.x[k];
		icpt -= sol.x[k] * col_mean[k];
	}
	m.intercept = icpt;
	return m;
}

double fslr_predict(const FslrModel &model, const DriverRow &row) {
	double v = model.intercept;
	for (std::size_t k = 0; k < kDriverCount; ++k) {
		v += model.beta[k] * driver_sign(static_cast<Driver>(k)) * row[k];
	}
	return v;
}

} // namespace aqcast
