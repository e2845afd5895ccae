#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "kakutani/errors.hpp"

namespace kakutani {

/// Infinite (or finite) stream of mixed-radix digits indexed by absolute
/// position (stage). Positions [start, start + prefix.size()) are explicit;
/// beyond that the tail is periodic (anchored at an absolute position), a
/// seeded deterministic generator, or absent (finite stream).
class DigitStream {
 public:
  enum class Tail : std::uint8_t { None, Periodic, Generated };

  DigitStream() = default;

  static DigitStream finite(std::size_t start, std::vector<std::uint32_t> digits) {
    DigitStream s;
    s.start_ = start;
    s.prefix_ = std::move(digits);
    return s;
  }

  /// `prefix` then `period` repeated forever.
  static DigitStream periodic(std::size_t start, std::vector<std::uint32_t> prefix,
                              std::vector<std::uint32_t> period) {
    if (period.empty()) throw Error("periodic digit tail must be non-empty");
    DigitStream s;
    s.start_ = start;
    s.anchor_ = start + prefix.size();
    s.prefix_ = std::move(prefix);
    s.period_ = std::move(period);
    s.tail_ = Tail::Periodic;
    return s;
  }

  static DigitStream zeros(std::size_t start) { return periodic(start, {}, {0}); }

  /// `prefix` then digits drawn from a splitmix64 hash of (seed, position).
  static DigitStream generated(std::size_t start, std::uint64_t seed, std::vector<std::uint32_t> prefix = {}) {
    DigitStream s;
    s.start_ = start;
    s.prefix_ = std::move(prefix);
    s.seed_ = seed;
    s.tail_ = Tail::Generated;
    return s;
  }

  std::size_t start() const noexcept { return start_; }
  std::size_t prefix_end() const noexcept { return start_ + prefix_.size(); }
  const std::vector<std::uint32_t>& prefix() const noexcept { return prefix_; }
  Tail tail() const noexcept { return tail_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::uint32_t>& period() const noexcept { return period_; }

  /// Digit at absolute position `pos` for a place of base `radix`.
  std::uint32_t digit(std::size_t pos, std::uint32_t radix) const {
    if (pos < start_) throw Error("digit position " + std::to_string(pos) + " precedes stream start");
    std::uint32_t d;
    if (pos < prefix_end()) {
      d = prefix_[pos - start_];
    } else {
      switch (tail_) {
        case Tail::Periodic:
          d = period_[(pos - anchor_) % period_.size()];
          break;
        case Tail::Generated:
          d = static_cast<std::uint32_t>(mix(seed_ ^ (0x9E3779B97F4A7C15ULL * (pos + 1))) % radix);
          break;
        default:
          throw ExhaustedDigits(pos);
      }
    }
    if (d >= radix)
      throw Error("digit " + std::to_string(d) + " at position " + std::to_string(pos) + " exceeds radix " +
                  std::to_string(radix));
    return d;
  }

  /// Whether a digit exists at `pos` (false only past the end of a finite stream).
  bool has_digit(std::size_t pos) const noexcept { return pos >= start_ && (pos < prefix_end() || tail_ != Tail::None); }

  /// New stream starting at `new_start` with `head` for positions
  /// [new_start, from), followed by this stream's digits from `from` on.
  template <class RadixFn>
  DigitStream spliced(std::size_t new_start, const std::vector<std::uint32_t>& head, std::size_t from,
                      RadixFn&& radix) const {
    if (new_start + head.size() != from) throw Error("spliced head does not end at the splice position");
    DigitStream s = *this;
    s.start_ = new_start;
    s.prefix_ = head;
    // Tail positions are absolute, so digits past the old prefix need no copy.
    for (std::size_t pos = from; pos < prefix_end(); ++pos) s.prefix_.push_back(digit(pos, radix(pos)));
    return s;
  }

  /// Overwrites the digit at `pos`, materializing tail digits as needed.
  template <class RadixFn>
  void set_digit(std::size_t pos, std::uint32_t value, RadixFn&& radix) {
    if (pos < start_) throw Error("digit position precedes stream start");
    while (prefix_end() <= pos) {
      const std::size_t p = prefix_end();
      prefix_.push_back(digit(p, radix(p)));
    }
    prefix_[pos - start_] = value;
  }

  static std::uint64_t mix(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::size_t start_ = 1;
  std::size_t anchor_ = 1;
  std::vector<std::uint32_t> prefix_;
  std::vector<std::uint32_t> period_;
  std::uint64_t seed_ = 0;
  Tail tail_ = Tail::None;

  template <class RadixFn>
  friend bool same_digits(const DigitStream&, const DigitStream&, RadixFn&&);
};

/// Exact equality of two streams over all positions >= max(starts), given the
/// place radices. Streams with different tail kinds or seeds compare unequal
/// unless their tails coincide structurally.
template <class RadixFn>
bool same_digits(const DigitStream& a, const DigitStream& b, RadixFn&& radix) {
  const std::size_t from = std::max(a.start_, b.start_);
  const std::size_t explicit_end = std::max(a.prefix_end(), b.prefix_end());
  for (std::size_t pos = from; pos < explicit_end; ++pos) {
    const bool ha = a.has_digit(pos), hb = b.has_digit(pos);
    if (ha != hb) return false;
    if (!ha) return true;
    const auto r = radix(pos);
    if (a.digit(pos, r) != b.digit(pos, r)) return false;
  }
  if (a.tail_ != b.tail_) return false;
  switch (a.tail_) {
    case DigitStream::Tail::None:
      return true;
    case DigitStream::Tail::Generated:
      return a.seed_ == b.seed_;
    case DigitStream::Tail::Periodic: {
      const std::size_t l = std::lcm(a.period_.size(), b.period_.size());
      const std::size_t base = std::max(explicit_end, from);
      for (std::size_t pos = base; pos < base + l; ++pos)
        if (a.period_[(pos - a.anchor_) % a.period_.size()] != b.period_[(pos - b.anchor_) % b.period_.size()])
          return false;
      return true;
    }
  }
  return false;
}

}  // namespace kakutani
