#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace aqcast {

/// One multiplicative factor (1 - sum ar_i B^{i p}) (1 - B^p)^diff on the AR side and
/// (1 + sum ma_i B^{i p}) on the MA side, with p = period.
struct ArmaFactor {
	int period = 1;
	std::vector<double> ar;
	std::vector<double> ma;
	int diff = 0;
};

struct ArmaOrder {
	int period = 1;
	int p = 0;
	int q = 0;
	int d = 0;
};

/// Dense lag polynomial, coefficient of B^j at index j. Index 0 is always 1.
using LagPoly = std::vector<double>;

LagPoly poly_mul(const LagPoly &a, const LagPoly &b);
/// Product of all AR factors and differencing operators.
LagPoly ar_polynomial(const std::vector<ArmaFactor> &factors);
LagPoly ma_polynomial(const std::vector<ArmaFactor> &factors);
/// Lags that can be nonzero for the given orders, independent of coefficient values.
std::vector<int> ar_support(const std::vector<ArmaOrder> &orders);

/// pi weights of the AR(infinity) form a(B)/m(B), truncated at `length` terms.
std::vector<double> ar_infinity(const LagPoly &a, const LagPoly &m, std::size_t length);
/// psi weights of the MA(infinity) form m(B)/a(B), truncated at `length` terms.
std::vector<double> ma_infinity(const LagPoly &a, const LagPoly &m, std::size_t length);

/// True when 1 - sum c_i z^i has all roots strictly outside the unit circle.
bool ar_stable(const std::vector<double> &c);
/// Rescales c_i by r^i so that the largest inverse root has modulus `limit`.
/// Returns true when a change was made.
bool project_stable(std::vector<double> &c, double limit = 0.99);

struct CssResiduals {
	std::vector<double> e;
	std::vector<std::uint8_t> valid;
	double sse = 0.0;
	std::size_t n = 0;
};

/// Conditional-sum-of-squares residuals. A row is valid when it and every lag
/// in `support` are observed; residuals of invalid rows are set to zero.
CssResiduals css_residuals(std::span<const double> w, std::span<const std::uint8_t> observed,
                           const LagPoly &a, const LagPoly &m, const std::vector<int> &support);

struct ArmaFit {
	std::vector<ArmaFactor> factors;
	double sse = 0.0;
	std::size_t n = 0;
	double sigma2 = 0.0;
	double aic = 0.0;
	bool converged = false;
	bool projected = false;
};

std::size_t parameter_count(const std::vector<ArmaOrder> &orders);

/// CSS fit of a multiplicative seasonal ARMA by Levenberg-Marquardt.
/// `start` may hold factors from a previous fit of the same orders.
ArmaFit fit_arma_css(std::span<const double> w, std::span<const std::uint8_t> observed,
                     const std::vector<ArmaOrder> &orders, const std::vector<ArmaFactor> *start = nullptr);

/// Forecasts continuing `history` for `horizon` steps via the truncated AR(infinity) form.
std::vector<double> arma_forecast(std::span<const double> history, const std::vector<double> &pi,
                                  std::size_t horizon);

/// Fractional differencing weights of (1 - B)^d.
std::vector<double> fracdiff_weights(double d, std::size_t length);
/// Applies (1 - B)^d with truncation at the start of the series.
std::vector<double> fracdiff(std::span<const double> x, double d);

} // namespace aqcast
