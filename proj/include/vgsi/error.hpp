#pragma once

#include <stdexcept>
#include <string>

namespace vgsi {

// Base exception for every recoverable failure in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, records, arguments).
class FormatError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace vgsi
