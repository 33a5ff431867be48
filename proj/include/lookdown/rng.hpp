#pragma once

// Seeded, splittable random streams.
//
// Generator: xoshiro256** (Blackman & Vigna). A stream is keyed by
// (root_seed, stream_id). The four state words are drawn from a splitmix64
// sequence started at
//
//   key = mix64(root_seed) ^ mix64(stream_id + 0x9E3779B97F4A7C15)
//
// where mix64 is the splitmix64 output finalizer. Distinct stream ids under
// one root seed therefore start from unrelated states; streams never share
// state after construction.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lookdown/error.hpp"

namespace lookdown {

inline constexpr const char* kGeneratorId = "xoshiro256** seeded by splitmix64(mix64(seed)^mix64(id+golden))";

// splitmix64 finalizer (Stafford variant 13).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Folds an (ordinal, index) pair into one stream id.
constexpr std::uint64_t derive_stream_id(std::uint64_t ordinal, std::uint64_t index) noexcept {
  return mix64(mix64(ordinal + 0x632BE59BD9B4E019ULL) ^ index);
}

class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t root_seed, std::uint64_t stream_id) noexcept
      : root_seed_(root_seed), stream_id_(stream_id) {
    std::uint64_t sm = mix64(root_seed) ^ mix64(stream_id + 0x9E3779B97F4A7C15ULL);
    for (auto& word : s_) {
      sm += 0x9E3779B97F4A7C15ULL;
      word = mix64(sm);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on (0, 1], 53-bit resolution.
  double uniform_open_closed() noexcept {
    return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), Lemire's multiply-and-reject.
  std::uint64_t uniform_index(std::uint64_t n) {
    detail::require(n > 0, "uniform_index: n must be positive");
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  std::uint64_t root_seed() const noexcept { return root_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t root_seed_;
  std::uint64_t stream_id_;
  std::uint64_t s_[4];
};

inline RngStream make_stream(std::uint64_t root_seed, std::uint64_t stream_id) {
  return RngStream(root_seed, stream_id);
}

// Exp(rate) by inversion, -ln(U)/rate with U in (0,1]. Never 0 or infinite
// except U == 1 which yields exactly 0; that case is redrawn.
inline double sample_exponential(RngStream& stream, double rate) {
  detail::require(rate > 0.0 && std::isfinite(rate), "sample_exponential: rate must be positive");
  for (;;) {
    const double x = -std::log(stream.uniform_open_closed()) / rate;
    if (x > 0.0) return x;
  }
}

// Points of a homogeneous Poisson process on (a, b], strictly increasing.
inline std::vector<double> sample_poisson_times(RngStream& stream, double rate, double a, double b) {
  detail::require(rate > 0.0 && std::isfinite(rate), "sample_poisson_times: rate must be positive");
  detail::require(a <= b, "sample_poisson_times: window must satisfy a <= b");
  std::vector<double> times;
  if (a == b) return times;
  double t = a;
  for (;;) {
    const double next = t + sample_exponential(stream, rate);
    if (next > b) break;
    // gap underflow at large |t|: keep strictly increasing
    t = next > t ? next : std::nextafter(t, std::numeric_limits<double>::infinity());
    if (t > b) break;
    times.push_back(t);
  }
  return times;
}

}  // namespace lookdown
