#pragma once

#include <stdexcept>
#include <string>

namespace etd {

/// Invalid layer wiring, inconsistent dimensions or bad parameter ranges
/// discovered while building a model or configuring an operation.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shape mismatch detected at call time.
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the offending 1-based row when known.
class parse_error : public std::runtime_error {
public:
    explicit parse_error(const std::string& msg, long row = -1)
        : std::runtime_error(row >= 0 ? msg + " (row " + std::to_string(row) + ")" : msg),
          row_(row) {}
    long row() const { return row_; }

private:
    long row_;
};

/// A record (or batch) that cannot be repaired, standardized or stratified.
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training diverged or could not proceed.
struct train_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace etd
