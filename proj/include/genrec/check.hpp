// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace genrec {

// Thrown on contract violations (bad shapes, malformed files, invalid config).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }
}  // namespace detail

template <typename... Args>
void check(bool cond, const Args&... parts) {
  if (!cond) {
    std::ostringstream os;
    (os << ... << parts);
    detail::fail(os.str());
  }
}

}  // namespace genrec
