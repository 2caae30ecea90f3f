#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace followup {

inline constexpr int kNumLabels = 7;

// The seven action-item aspects, in fixed order. The order is part of the
// on-disk corpus format and of every score/label matrix layout.
enum class Label : int {
  patient_instructions = 0,
  appointment = 1,
  medication = 2,
  lab = 3,
  procedure = 4,
  imaging = 5,
  other = 6,
};

inline const std::array<std::string_view, kNumLabels>& label_names() {
  static const std::array<std::string_view, kNumLabels> names = {
      "patient_instructions", "appointment", "medication", "lab",
      "procedure",            "imaging",     "other"};
  return names;
}

inline std::string_view label_name(Label l) {
  return label_names()[static_cast<int>(l)];
}

inline std::optional<Label> label_from_name(std::string_view name) {
  const auto& names = label_names();
  for (int i = 0; i < kNumLabels; ++i) {
    if (names[i] == name) return static_cast<Label>(i);
  }
  return std::nullopt;
}

// Fixed-order boolean 7-vector over the aspects.
struct LabelSet {
  std::array<bool, kNumLabels> bits{};

  constexpr bool has(Label l) const { return bits[static_cast<int>(l)]; }
  constexpr void set(Label l, bool v = true) { bits[static_cast<int>(l)] = v; }

  // Binary reduction: whether any aspect is present.
  constexpr bool any() const {
    for (bool b : bits)
      if (b) return true;
    return false;
  }

  constexpr int count() const {
    int n = 0;
    for (bool b : bits) n += b ? 1 : 0;
    return n;
  }

  constexpr bool shares_any(const LabelSet& o) const {
    for (int i = 0; i < kNumLabels; ++i)
      if (bits[i] && o.bits[i]) return true;
    return false;
  }

  constexpr LabelSet united(const LabelSet& o) const {
    LabelSet r;
    for (int i = 0; i < kNumLabels; ++i) r.bits[i] = bits[i] || o.bits[i];
    return r;
  }

  friend constexpr bool operator==(const LabelSet&, const LabelSet&) = default;
};

}  // namespace followup
