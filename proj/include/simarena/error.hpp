#pragma once

#include <stdexcept>
#include <string>

namespace simarena {

/// What went wrong, at the granularity callers branch on. Configuration
/// errors map to CLI exit code 2; everything else to 1.
enum class ErrorKind {
  Config,      // bad spec, missing auth var, missing template/price entry
  Transport,   // network failure after retries exhausted
  Provider,    // provider refusal / empty completion
  ScriptedGap, // mock queue exhausted or fingerprint missing
  Template,    // unresolved placeholder
  Parse,       // model output did not match the expected grammar
  Extraction,  // extraction prompt produced unusable JSON after retry
  Validation,  // data violates a documented invariant
  Argument,    // caller violated a precondition
  Io,          // unreadable file / unwritable directory
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Provider: return "provider";
    case ErrorKind::ScriptedGap: return "scripted-gap";
    case ErrorKind::Template: return "template";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Extraction: return "extraction";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Argument: return "argument";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace simarena
