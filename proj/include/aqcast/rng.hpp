#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace aqcast {

inline std::uint64_t splitmix64(std::uint64_t x) {
	x += 0x9E3779B97F4A7C15ULL;
	x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
	x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
	return x ^ (x >> 31);
}

/// Seed of an independent stream identified by (seed, stream).
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
	return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Gaussian source whose output depends only on the engine state; avoids the
/// cached-pair behaviour of std::normal_distribution so that draws can be
/// replayed from a stream seed.
class NormalStream {
public:
	explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

	double operator()() {
		if (has_spare_) {
			has_spare_ = false;
			return spare_;
		}
		// Marsaglia polar method.
		double u = 0.0;
		double v = 0.0;
		double s = 0.0;
		do {
			u = 2.0 * uniform() - 1.0;
			v = 2.0 * uniform() - 1.0;
			s = u * u + v * v;
		} while (s >= 1.0 || s == 0.0);
		const double m = std::sqrt(-2.0 * std::log(s) / s);
		spare_ = v * m;
		has_spare_ = true;
		return u * m;
	}

	/// Uniform in [0, 1) with 53 random bits.
	double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

	std::mt19937_64 &engine() { return engine_; }

private:
	std::mt19937_64 engine_;
	double spare_ = 0.0;
	bool has_spare_ = false;
};

} // namespace aqcast
