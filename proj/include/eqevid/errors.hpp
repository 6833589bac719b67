#pragma once

#include <stdexcept>
#include <string>

namespace eqevid {

/// Base class for failures of a numerical kernel. `failure_class()` names the
/// failure on the CLI diagnostic stream (exit code 2).
class NumericalError : public std::runtime_error {
public:
    NumericalError(std::string failure_class, const std::string& what)
        : std::runtime_error(what), class_(std::move(failure_class)) {}

    const std::string& failure_class() const noexcept { return class_; }

private:
    std::string class_;
};

class NotPositiveDefinite : public NumericalError {
public:
    explicit NotPositiveDefinite(const std::string& what)
        : NumericalError("NotPositiveDefinite", what) {}
};

class OverflowError : public NumericalError {
public:
    explicit OverflowError(const std::string& what) : NumericalError("Overflow", what) {}
};

class NonFiniteInput : public NumericalError {
public:
    explicit NonFiniteInput(const std::string& what) : NumericalError("NonFinite", what) {}
};

class DomainError : public NumericalError {
public:
    explicit DomainError(const std::string& what) : NumericalError("DomainError", what) {}
};

/// Invalid user-supplied input (dataset spec, split rule, config file).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace eqevid
