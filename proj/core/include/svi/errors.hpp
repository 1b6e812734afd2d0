#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace svi {

// Base for all domain errors. `code` is a stable machine-readable slug that
// surfaces unchanged in CLI error objects; `stage` is filled in by pipeline
// drivers so a consumer can tell which phase of a multi-step run failed.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

 private:
  std::string code_;
  std::string stage_;
};

struct InvalidQueryError : Error {
  explicit InvalidQueryError(const std::string& msg) : Error("invalid-query", msg) {}
};

struct DimensionMismatchError : Error {
  explicit DimensionMismatchError(const std::string& msg) : Error("dimension-mismatch", msg) {}
};

struct InfeasibleSetError : Error {
  explicit InfeasibleSetError(const std::string& msg) : Error("infeasible-set", msg) {}
};

struct ParseError : Error {
  ParseError(std::string code, const std::string& msg) : Error(std::move(code), msg) {}
};

// Runs `fn`, tagging any svi::Error that escapes with the pipeline stage name.
template <typename Fn>
auto with_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (Error& e) {
    if (e.stage().empty()) e.set_stage(stage);
    throw;
  }
}

}  // namespace svi
