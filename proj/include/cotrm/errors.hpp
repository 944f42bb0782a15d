#pragma once

#include <stdexcept>
#include <string>

namespace cotrm {

// Error taxonomy mirrored by the CLI exit codes: usage 1, IO 2,
// validation 3.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cotrm
