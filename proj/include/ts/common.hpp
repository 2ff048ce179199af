#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ts {

using Shape = std::vector<int>;

// Shape/contract violations (wrong extents, bad labels, non-scalar loss).
class DimensionError : public std::invalid_argument {
public:
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad experiment configuration (unknown key, invalid variant combination).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or truncated serialized artifacts (checkpoints, pair caches).
class IntegrityError : public std::runtime_error {
public:
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable input files (missing directory, malformed image).
class IngestionError : public std::runtime_error {
public:
  explicit IngestionError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline long long numel(const Shape& s) {
  long long n = 1;
  for (int e : s) n *= e;
  return n;
}

}  // namespace ts
