#pragma once

// Counter-based Gaussian noise. Every draw is addressed by
// (seed, purpose, run, agent, step, inner, block) so that trajectories do not
// depend on the order in which agents or runs are scheduled.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace mfl {

/// Philox4x32-10 block cipher (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Inverse of the standard normal CDF, Wichura's AS241 (PPND16).
/// Relative accuracy about 1e-16 on (0, 1).
inline double inverse_normal_cdf(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

enum class Purpose : std::uint32_t {
  init = 0,
  outer = 1,
  inner = 2,
  smoothing = 3,
  data = 4,
  network_init = 5,
};

/// Identifies one agent's substream within a replicated experiment.
struct StreamId {
  std::uint32_t run = 0;
  std::uint32_t agent = 0;

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

/// Counter layout (128 bits):
///   word0 = block index (16 bits) | purpose (4 bits) << 16 | run bits 0..11 << 20
///   word1 = inner / sample index
///   word2 = step
///   word3 = agent (20 bits) | run bits 12..23 << 20
/// The key is the 64-bit master seed. Distinct addresses give distinct
/// counters, so substreams never overlap.
class NoiseStream {
 public:
  static constexpr std::uint32_t kMaxRun = (1u << 24) - 1;
  static constexpr std::uint32_t kMaxAgent = (1u << 20) - 1;
  static constexpr std::size_t kMaxLength = std::size_t{2} << 16;

  explicit NoiseStream(std::uint64_t seed) : seed_(seed) {}

  /// A stream whose Gaussian draws are all exactly zero.
  static NoiseStream disabled() {
    NoiseStream s(0);
    s.enabled_ = false;
    return s;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  bool enabled() const noexcept { return enabled_; }

  void gaussian(Purpose purpose, StreamId id, std::uint32_t step, std::uint32_t inner,
                std::span<double> out) const {
    if (!enabled_) {
      for (double& v : out) v = 0.0;
      return;
    }
    fill(purpose, id, step, inner, out, true);
  }

  /// Uniform draws on the open interval (0, 1).
  void uniform(Purpose purpose, StreamId id, std::uint32_t step, std::uint32_t inner,
               std::span<double> out) const {
    fill(purpose, id, step, inner, out, false);
  }

 private:
  void fill(Purpose purpose, StreamId id, std::uint32_t step, std::uint32_t inner,
            std::span<double> out, bool normal) const {
    if (id.run > kMaxRun) throw std::out_of_range("noise stream: run index exceeds 2^24-1");
    if (id.agent > kMaxAgent) throw std::out_of_range("noise stream: agent index exceeds 2^20-1");
    if (out.size() > kMaxLength) throw std::out_of_range("noise stream: vector too long");
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                              static_cast<std::uint32_t>(seed_ >> 32)};
    const std::uint32_t w0_hi =
        (static_cast<std::uint32_t>(purpose) & 0xFu) << 16 | (id.run & 0xFFFu) << 20;
    const std::uint32_t w3 = (id.agent & 0xFFFFFu) | (id.run >> 12) << 20;
    for (std::size_t base = 0; base < out.size(); base += 2) {
      const auto block = static_cast<std::uint32_t>(base / 2);
      const auto bits = Philox4x32::generate({block | w0_hi, inner, step, w3}, key);
      const double u0 = to_open_unit(bits[0], bits[1]);
      const double u1 = to_open_unit(bits[2], bits[3]);
      out[base] = normal ? inverse_normal_cdf(u0) : u0;
      if (base + 1 < out.size()) out[base + 1] = normal ? inverse_normal_cdf(u1) : u1;
    }
  }

  static double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits53 = (std::uint64_t{hi} << 21) | (lo >> 11);
    return (static_cast<double>(bits53) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  bool enabled_ = true;
};

/// One agent's view of the noise stream at a given outer iteration.
class AgentNoise {
 public:
  AgentNoise(const NoiseStream& stream, StreamId id, std::uint32_t step)
      : stream_(&stream), id_(id), step_(step) {}

  void outer(std::span<double> z) const { stream_->gaussian(Purpose::outer, id_, step_, 0, z); }
  void inner(std::uint32_t m, std::span<double> z) const {
    stream_->gaussian(Purpose::inner, id_, step_, m, z);
  }
  void sample(std::uint32_t k, std::span<double> z) const {
    stream_->gaussian(Purpose::smoothing, id_, step_, k, z);
  }
  StreamId id() const noexcept { return id_; }
  std::uint32_t step() const noexcept { return step_; }
  const NoiseStream& stream() const noexcept { return *stream_; }

 private:
  const NoiseStream* stream_;
  StreamId id_;
  std::uint32_t step_;
};

}  // namespace mfl
