#pragma once

#include <stdexcept>
#include <string>

namespace manas {

// Error taxonomy mirrored by the CLI exit codes: config/usage errors exit
// with 2, every other failure with 1.
class Error : public std::runtime_error {
 public:
  enum class Kind { dimension, vocabulary, config, io, domain };

  Error(Kind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}

  Kind kind() const { return kind_; }

  static Error dimension(std::string msg) {
    return {Kind::dimension, std::move(msg)};
  }
  static Error vocabulary(std::string msg) {
    return {Kind::vocabulary, std::move(msg)};
  }
  static Error config(std::string msg) { return {Kind::config, std::move(msg)}; }
  static Error io(std::string msg) { return {Kind::io, std::move(msg)}; }
  static Error domain(std::string msg) { return {Kind::domain, std::move(msg)}; }

 private:
  Kind kind_;
};

}  // namespace manas
