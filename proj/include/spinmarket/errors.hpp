#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spinmarket {

// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Too few loss events to analyze (CLI exit code 3).
class InsufficientEventsError : public std::runtime_error {
public:
    InsufficientEventsError(const std::string& what, std::size_t n_events)
        : std::runtime_error(what), n_events_(n_events) {}

    std::size_t n_events() const { return n_events_; }

private:
    std::size_t n_events_;
};

// Loss-threshold calibration failed because the return distribution lacks
// enough strictly negative mass at the requested quantile.
class CalibrationError : public InsufficientEventsError {
public:
    CalibrationError(const std::string& what, std::size_t n_events)
        : InsufficientEventsError(what, n_events) {}
};

// Degenerate fit input (e.g. fewer than 3 usable bins).
class FitError : public std::runtime_error {
public:
    explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace spinmarket
