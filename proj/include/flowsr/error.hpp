#pragma once

#include <stdexcept>
#include <string>

namespace flowsr {

// Error taxonomy mirrored by the CLI exit codes: user/config/IO problems
// exit 1, numeric failures exit 2.
enum class ErrorKind { config, contract, numeric, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_config(const std::string& msg) {
  throw Error(ErrorKind::config, msg);
}
[[noreturn]] inline void fail_contract(const std::string& msg) {
  throw Error(ErrorKind::contract, msg);
}
[[noreturn]] inline void fail_numeric(const std::string& msg) {
  throw Error(ErrorKind::numeric, msg);
}
[[noreturn]] inline void fail_io(const std::string& msg) {
  throw Error(ErrorKind::io, msg);
}

}  // namespace flowsr
