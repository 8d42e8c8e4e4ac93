#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vvl {

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::A, Phase::B, Phase::C};

constexpr int index(Phase p) { return static_cast<int>(p); }
constexpr char phase_char(Phase p) { return "abc"[index(p)]; }

// Ordered subset of {a, b, c}. Iteration always runs a < b < c.
class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  static constexpr PhaseSet abc() { return PhaseSet(0b111); }
  static constexpr PhaseSet of(std::initializer_list<Phase> ps) {
    std::uint8_t bits = 0;
    for (Phase p : ps) bits |= static_cast<std::uint8_t>(1u << index(p));
    return PhaseSet(bits);
  }
  // Parses strings such as "abc", "ac", "b". Returns nullopt on any other character
  // or on repetition.
  static std::optional<PhaseSet> parse(std::string_view s) {
    std::uint8_t bits = 0;
    for (char ch : s) {
      int k = ch - 'a';
      if (k < 0 || k > 2 || (bits & (1u << k))) return std::nullopt;
      bits |= static_cast<std::uint8_t>(1u << k);
    }
    return PhaseSet(bits);
  }

  constexpr bool contains(Phase p) const { return bits_ & (1u << index(p)); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr int size() const {
    return ((bits_ >> 0) & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1);
  }
  constexpr bool subset_of(PhaseSet other) const { return (bits_ & ~other.bits_) == 0; }
  // Position of p within this set (0-based), or -1 when absent.
  constexpr int position(Phase p) const {
    if (!contains(p)) return -1;
    int pos = 0;
    for (int k = 0; k < index(p); ++k) pos += (bits_ >> k) & 1;
    return pos;
  }
  std::vector<Phase> members() const {
    std::vector<Phase> out;
    for (Phase p : kAllPhases)
      if (contains(p)) out.push_back(p);
    return out;
  }
  std::string str() const {
    std::string s;
    for (Phase p : kAllPhases)
      if (contains(p)) s.push_back(phase_char(p));
    return s;
  }
  constexpr std::uint8_t bits() const { return bits_; }

  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

 private:
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

}  // namespace vvl
