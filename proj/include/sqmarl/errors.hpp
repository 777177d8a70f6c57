#pragma once

#include <stdexcept>
#include <string>

namespace sqmarl {

// Error taxonomy mirrors the CLI exit codes: config errors exit 2,
// numerical failures exit 3, data-collection timeouts exit 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CollectionTimeout : std::runtime_error {
  explicit CollectionTimeout(const std::string& msg) : std::runtime_error(msg) {}
};

struct EpisodeExhausted : std::runtime_error {
  explicit EpisodeExhausted(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sqmarl
