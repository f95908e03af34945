#pragma once

#include <cctype>
#include <string_view>

namespace asmb {

/// Deterministic fallback token estimate for when an endpoint reports no
/// usage: whitespace-delimited units with a fixed punctuation-adjusted
/// correction of 1.3, rounded up. Computed in integers (ceil(units*13/10))
/// so the result is platform-stable.
inline long estimate_tokens(std::string_view text) {
  long units = 0;
  bool in_unit = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_unit = false;
    } else if (!in_unit) {
      in_unit = true;
      ++units;
    }
  }
  return (units * 13 + 9) / 10;
}

}  // namespace asmb
