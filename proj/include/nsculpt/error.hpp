#pragma once

#include <stdexcept>
#include <string>

namespace nsculpt {

// Base for every error raised by the library. Subtypes name the failure class
// so callers (and the CLI) can map them to diagnostics without string parsing.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class CapacityError : public Error { public: using Error::Error; };
class GenerationError : public Error { public: using Error::Error; };
class ArityError : public Error { public: using Error::Error; };
class PreconditionError : public Error { public: using Error::Error; };
class ComparisonError : public Error { public: using Error::Error; };
class ExportError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };

class DivergenceError : public Error {
public:
    explicit DivergenceError(std::size_t epoch)
        : Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch)),
          epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace nsculpt
