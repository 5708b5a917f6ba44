#ifndef GAMFIT_ERRORS_HPP
#define GAMFIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gamfit {

// Error categories map onto the CLI exit codes (see config.hpp).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct convergence_error : std::runtime_error {
  explicit convergence_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gamfit

#endif
