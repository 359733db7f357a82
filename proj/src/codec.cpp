// SPDX-License-Identifier: Apache-2.0
#include "fact/codec.hpp"

#include "fact/error.hpp"

#include <cmath>
#include <string>

namespace fact {

BitMatrix::BitMatrix(std::size_t features, int bits)
    : features_(features), bits_(bits), flat_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(features) * bits)) {
  if (bits < 1 || bits > 30) throw Error(ErrorCode::kInvalidArgument, "bits must be in [1, 30]");
}

BitMatrix::BitMatrix(Eigen::VectorXd flat, int bits) : bits_(bits), flat_(std::move(flat)) {
  if (bits < 1 || bits > 30) throw Error(ErrorCode::kInvalidArgument, "bits must be in [1, 30]");
  if (flat_.size() % bits != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "flat bit vector length is not a multiple of the word size");
  }
  features_ = static_cast<std::size_t>(flat_.size() / bits);
}

bool BitMatrix::is_exact() const {
  for (Eigen::Index i = 0; i < flat_.size(); ++i) {
    if (flat_[i] != 0.0 && flat_[i] != 1.0) return false;
  }
  return true;
}

double max_representable(int bits) { return 1.0 - std::ldexp(1.0, -bits); }

void quantize_into(const Eigen::Ref<const Eigen::VectorXd>& values, const MaskVector& known, int bits,
                   Eigen::Ref<Eigen::VectorXd> out) {
  const auto d = static_cast<std::size_t>(values.size());
  if (known.size() != d || out.size() != static_cast<Eigen::Index>(d) * bits) {
    throw Error(ErrorCode::kDimensionMismatch, "quantize: value, mask and output sizes disagree");
  }
  const double hi = max_representable(bits);
  for (std::size_t j = 0; j < d; ++j) {
    const auto base = static_cast<Eigen::Index>(j) * bits;
    const double x = values[static_cast<Eigen::Index>(j)];
    if (!known[j]) {
      out.segment(base, bits).setZero();
      continue;
    }
    if (!(x >= 0.0 && x <= hi)) {
      throw Error(ErrorCode::kOutOfRange,
                  "quantize: value " + std::to_string(x) + " of feature " + std::to_string(j) +
                      " outside [0, 1-2^-" + std::to_string(bits) + "]");
    }
    double rest = x;
    double weight = 0.5;
    for (int b = 0; b < bits; ++b, weight *= 0.5) {
      if (rest >= weight) {
        out[base + b] = 1.0;
        rest -= weight;
      } else {
        out[base + b] = 0.0;
      }
    }
  }
}

BitMatrix quantize(const Eigen::Ref<const Eigen::VectorXd>& values, const MaskVector& known, int bits) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(values.size()) * bits);
  quantize_into(values, known, bits, flat);
  return BitMatrix(std::move(flat), bits);
}

BitMatrix quantize(std::span<const double> values, const MaskVector& known, int bits) {
  const Eigen::Map<const Eigen::VectorXd> view(values.data(), static_cast<Eigen::Index>(values.size()));
  return quantize(Eigen::Ref<const Eigen::VectorXd>(view), known, bits);
}

Eigen::VectorXd dequantize(const BitMatrix& bits) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(bits.features()));
  for (std::size_t j = 0; j < bits.features(); ++j) {
    double value = 0.0;
    double weight = 0.5;
    for (int b = 0; b < bits.bits(); ++b, weight *= 0.5) {
      const double p = bits(j, b);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(ErrorCode::kOutOfRange, "dequantize: bit entry outside [0, 1]");
      }
      value += p * weight;
    }
    out[static_cast<Eigen::Index>(j)] = value;
  }
  return out;
}

double bit_loss_weight(int bit) { return std::ldexp(1.0, -bit); }

}  // namespace fact
