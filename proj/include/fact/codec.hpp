// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fact {

inline constexpr int kDefaultBits = 8;

/// Per-feature known flags; 1 = known.
using MaskVector = std::vector<std::uint8_t>;

inline MaskVector all_known(std::size_t d) { return MaskVector(d, 1); }
inline MaskVector all_unknown(std::size_t d) { return MaskVector(d, 0); }

/// d words of l bits, stored feature-major so that bit b of feature j sits at
/// flat index j*l + b. Bit index 0 carries weight 2^-1.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t features, int bits);
  BitMatrix(Eigen::VectorXd flat, int bits);

  std::size_t features() const { return features_; }
  int bits() const { return bits_; }

  double operator()(std::size_t feature, int bit) const { return flat_[index(feature, bit)]; }
  double& operator()(std::size_t feature, int bit) { return flat_[index(feature, bit)]; }

  const Eigen::VectorXd& flat() const { return flat_; }

  /// True when every entry is exactly 0 or 1.
  bool is_exact() const;

  bool operator==(const BitMatrix& other) const {
    return bits_ == other.bits_ && features_ == other.features_ && flat_ == other.flat_;
  }

 private:
  Eigen::Index index(std::size_t feature, int bit) const {
    return static_cast<Eigen::Index>(feature) * bits_ + bit;
  }

  std::size_t features_ = 0;
  int bits_ = kDefaultBits;
  Eigen::VectorXd flat_;
};

/// Largest value representable with `bits` fractional bits.
double max_representable(int bits = kDefaultBits);

/// Greedy binary-fraction expansion of every known value; unknown features
/// encode as all-zero words. Values must lie in [0, 1 - 2^-bits].
BitMatrix quantize(std::span<const double> values, const MaskVector& known, int bits = kDefaultBits);
BitMatrix quantize(const Eigen::Ref<const Eigen::VectorXd>& values, const MaskVector& known,
                   int bits = kDefaultBits);

/// Writes the flattened encoding into `out` (length d*bits) without allocating.
void quantize_into(const Eigen::Ref<const Eigen::VectorXd>& values, const MaskVector& known, int bits,
                   Eigen::Ref<Eigen::VectorXd> out);

/// Weighted bit sum; accepts probabilistic entries (expected-value decode).
Eigen::VectorXd dequantize(const BitMatrix& bits);

/// Weight of bit index `bit` (0-based) in the reconstruction loss: 2^-bit.
double bit_loss_weight(int bit);

}  // namespace fact
