#pragma once

#include <stdexcept>
#include <string>

namespace mage {

// Base class for all error conditions raised by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateInput : Error {
    explicit DegenerateInput(const std::string& what) : Error(what) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

struct NonFiniteValue : Error {
    explicit NonFiniteValue(const std::string& what) : Error(what) {}
};

struct NotScalarLoss : Error {
    explicit NotScalarLoss(const std::string& what) : Error(what) {}
};

struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

struct ClipTooShort : Error {
    explicit ClipTooShort(const std::string& what) : Error(what) {}
};

struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& what) : Error(what) {}
};

struct EmptyDataset : Error {
    explicit EmptyDataset(const std::string& what) : Error(what) {}
};

struct CorruptCheckpoint : Error {
    explicit CorruptCheckpoint(const std::string& what) : Error(what) {}
};

struct ConfigMismatch : Error {
    explicit ConfigMismatch(const std::string& what) : Error(what) {}
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(what) {}
};

}  // namespace mage
