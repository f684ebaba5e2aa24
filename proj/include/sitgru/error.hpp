// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sitgru {

// Shapes of two operands disagree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Precondition on an argument value violated (empty input, bad range, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Object used in the wrong lifecycle state, e.g. backward without a forward cache.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file was readable but its content is malformed.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A checkpoint and the data handed to it do not fit together.
class CompatibilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sitgru
