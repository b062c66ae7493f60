#pragma once

#include <stdexcept>
#include <string>

namespace attrirec {

// Bad input: malformed files, unknown ids, invalid configuration.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A non-finite value appeared during a numeric computation. term() names
// the quantity that went bad (e.g. "l_pred", "gradient").
class NumericError : public std::runtime_error {
public:
    NumericError(std::string term, const std::string& what)
        : std::runtime_error(what), term_(std::move(term)) {}

    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

} // namespace attrirec
