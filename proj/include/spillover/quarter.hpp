#pragma once

#include <compare>
#include <string>

#include "spillover/common.hpp"

namespace spillover {

// Year-quarter label, closed vocabulary "YYYYQn". No calendar arithmetic
// beyond successor/ordering is supported or needed.
struct Quarter {
  int year = 0;
  int q = 1;  // 1..4

  static Quarter parse(const std::string& label) {
    if (label.size() != 6 || (label[4] != 'Q' && label[4] != 'q'))
      fail("panel", "bad quarter label '" + label + "' (expected YYYYQn)");
    for (int i : {0, 1, 2, 3, 5})
      if (label[static_cast<std::size_t>(i)] < '0' || label[static_cast<std::size_t>(i)] > '9')
        fail("panel", "bad quarter label '" + label + "' (expected YYYYQn)");
    Quarter out;
    out.year = std::stoi(label.substr(0, 4));
    out.q = label[5] - '0';
    if (out.q < 1 || out.q > 4) fail("panel", "bad quarter label '" + label + "' (quarter digit must be 1..4)");
    return out;
  }

  int index() const { return year * 4 + (q - 1); }

  static Quarter from_index(int idx) {
    Quarter out;
    out.year = idx / 4;
    out.q = idx % 4 + 1;
    return out;
  }

  std::string str() const { return std::to_string(year) + "Q" + std::to_string(q); }

  auto operator<=>(const Quarter& other) const { return index() <=> other.index(); }
  bool operator==(const Quarter& other) const { return index() == other.index(); }
};

}  // namespace spillover
