#pragma once

#include <stdexcept>
#include <string>

namespace uqpen {

// Malformed input data (CSV, JSON manifests). Messages carry the line or
// field that failed.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Corrupt or mismatched binary artifacts (checkpoints, posterior files).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// A computation reached a state its contract forbids (e.g. a rank-deficient
// posterior).
class InvalidStateError : public std::runtime_error {
public:
    explicit InvalidStateError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace uqpen
