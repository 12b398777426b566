#pragma once

#include <cassert>
#include <string>
#include <utility>
#include <variant>

namespace keyfort {

enum class Err {
    InvalidCloneBound,
    EmptyBinary,
    BadSeed,
    VersionMismatch,
    CloneLimitExceeded,
    StoreFault,
    ResumeDenied,
    UnknownEnclave,
    Unauthorized,
    AlreadyScheduled,
    EnclaveExists,
    NoEligibleEnclave,
    TooManyInstances,
    NotMyKey,
    MeasurementMismatch,
    VersionOrderViolation,
    AlreadyMigrating,
    NoActiveMigration,
    NotDestination,
    UnknownCounter,
    OwnerMismatch,
    RollbackDetected,
    AuthFailure,
    VerifyFailure,
    HaltedDuringMigration,
    NotRunnable,
    IoFault,
    MalformedMessage,
    SchemaError,
    StepBudgetExceeded,
};

const char* to_string(Err e);

template <typename T>
class [[nodiscard]] Result {
public:
    Result(T value) : v_(std::move(value)) {}
    Result(Err e) : v_(e) {}

    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }

    T& value() {
        assert(ok());
        return std::get<T>(v_);
    }
    const T& value() const {
        assert(ok());
        return std::get<T>(v_);
    }
    Err error() const {
        assert(!ok());
        return std::get<Err>(v_);
    }

private:
    std::variant<T, Err> v_;
};

// Status-only result, same shape without a payload.
class [[nodiscard]] Status {
public:
    Status() : err_(false), e_(Err::IoFault) {}
    Status(Err e) : err_(true), e_(e) {}

    static Status ok_status() { return Status(); }

    bool ok() const { return !err_; }
    explicit operator bool() const { return ok(); }
    Err error() const {
        assert(err_);
        return e_;
    }

private:
    bool err_;
    Err e_;
};

}  // namespace keyfort
