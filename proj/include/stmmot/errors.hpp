#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stmmot {

/// Internal state that should be impossible was observed.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed input text; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line), detail_(message) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t line_;
    std::string detail_;
};

}  // namespace stmmot
