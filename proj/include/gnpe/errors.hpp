#pragma once

#include <stdexcept>
#include <string>

namespace gnpe {

/// Shape or contract violation between components (mismatched factor counts,
/// out-of-range slots, estimator/mode mismatches).
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid numerical input data (non-finite samples, wrong lengths).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameter outside the support of a model.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite loss or outputs during training.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, std::size_t epoch, std::size_t last_finite_epoch)
        : std::runtime_error(what), epoch_(epoch), last_finite_epoch_(last_finite_epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t last_finite_epoch() const noexcept { return last_finite_epoch_; }

private:
    std::size_t epoch_;
    std::size_t last_finite_epoch_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gnpe
