#ifndef FORGE_ERRORS_HPP
#define FORGE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace forge {

// Error taxonomy shared by all modules. The CLI maps the dynamic type to a
// machine-readable error code, so new failure kinds should subclass Error
// rather than throw std::runtime_error directly.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class DegenerateSampleError : public Error {
 public:
  explicit DegenerateSampleError(const std::string& what)
      : Error("degenerate_sample", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace forge

#endif  // FORGE_ERRORS_HPP
