#pragma once

#include <stdexcept>
#include <string>

namespace dialoglab {

// All library failures carry a short machine-parsable code plus a human
// message. The CLI prints them as "error[<code>]: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

inline Error dimension_error(const std::string& msg) { return Error("dimension", msg); }
inline Error validation_error(const std::string& msg) { return Error("validation", msg); }
inline Error parse_error(const std::string& msg) { return Error("parse", msg); }
inline Error config_error(const std::string& msg) { return Error("config", msg); }
inline Error lookup_error(const std::string& msg) { return Error("lookup", msg); }
inline Error contract_error(const std::string& msg) { return Error("contract", msg); }
inline Error annotation_error(const std::string& msg) { return Error("missing-annotation", msg); }
inline Error compat_error(const std::string& msg) { return Error("compat", msg); }
inline Error io_error(const std::string& msg) { return Error("io", msg); }

}  // namespace dialoglab
