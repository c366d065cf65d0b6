#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pncuq {

/// Bad input, bad configuration, violated precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Something went wrong inside the numerics (divergence, failed factorization).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gradient descent produced a non-finite loss.
class DivergenceError : public NumericalError {
public:
    DivergenceError(std::size_t epoch, std::vector<double> trace, std::string context = {})
        : NumericalError(make_message(epoch, context)),
          epoch_(epoch),
          trace_(std::move(trace)),
          context_(std::move(context)) {}

    [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }
    [[nodiscard]] const std::vector<double>& loss_trace() const noexcept { return trace_; }
    [[nodiscard]] const std::string& context() const noexcept { return context_; }

    /// Same failure, with an outer context such as "auxiliary" or "batch 2".
    [[nodiscard]] DivergenceError tagged(const std::string& outer) const {
        return DivergenceError(epoch_, trace_, context_.empty() ? outer : outer + ": " + context_);
    }

private:
    static std::string make_message(std::size_t epoch, const std::string& context) {
        std::string msg = "diverged at epoch " + std::to_string(epoch);
        if (!context.empty()) msg = context + ": " + msg;
        return msg;
    }

    std::size_t epoch_;
    std::vector<double> trace_;
    std::string context_;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

}  // namespace pncuq
