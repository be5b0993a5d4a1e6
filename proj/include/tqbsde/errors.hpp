#pragma once

#include <stdexcept>
#include <string>

namespace tqbsde {

/// Process exit codes used by the CLI. Every failure mode maps to one of these.
enum class ExitCode : int {
    ok = 0,
    validation_failure = 2,  // assumption or hypothesis validation failed
    solver_failure = 3,      // non-convergence or a-priori bound breach
    config_error = 4,        // malformed or out-of-range configuration
};

struct Error : std::runtime_error {
    explicit Error(const std::string& msg, ExitCode code = ExitCode::solver_failure)
        : std::runtime_error(msg), exit_code(code) {}
    ExitCode exit_code;
};

/// Configuration parsing / range errors. Carries the offending key path.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg, std::string path = {})
        : Error(path.empty() ? msg : "[" + path + "] " + msg, ExitCode::config_error),
          key_path(std::move(path)) {}
    std::string key_path;
};

/// A structural or assumption-level validation failure surfaced as an error.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg)
        : Error(msg, ExitCode::validation_failure) {}
};

/// Regression matrix still singular after ridge escalation.
struct SingularFitError : Error {
    explicit SingularFitError(const std::string& msg) : Error(msg) {}
};

/// A constant provider returned a value outside its declared invariants.
struct ProviderError : Error {
    explicit ProviderError(const std::string& msg)
        : Error(msg, ExitCode::config_error) {}
};

}  // namespace tqbsde
