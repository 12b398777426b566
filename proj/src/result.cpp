#include "keyfort/result.hpp"

namespace keyfort {

const char* to_string(Err e) {
    switch (e) {
        case Err::InvalidCloneBound: return "InvalidCloneBound";
        case Err::EmptyBinary: return "EmptyBinary";
        case Err::BadSeed: return "BadSeed";
        case Err::VersionMismatch: return "VersionMismatch";
        case Err::CloneLimitExceeded: return "CloneLimitExceeded";
        case Err::StoreFault: return "StoreFault";
        case Err::ResumeDenied: return "ResumeDenied";
        case Err::UnknownEnclave: return "UnknownEnclave";
        case Err::Unauthorized: return "Unauthorized";
        case Err::AlreadyScheduled: return "AlreadyScheduled";
        case Err::EnclaveExists: return "EnclaveExists";
        case Err::NoEligibleEnclave: return "NoEligibleEnclave";
        case Err::TooManyInstances: return "TooManyInstances";
        case Err::NotMyKey: return "NotMyKey";
        case Err::MeasurementMismatch: return "MeasurementMismatch";
        case Err::VersionOrderViolation: return "VersionOrderViolation";
        case Err::AlreadyMigrating: return "AlreadyMigrating";
        case Err::NoActiveMigration: return "NoActiveMigration";
        case Err::NotDestination: return "NotDestination";
        case Err::UnknownCounter: return "UnknownCounter";
        case Err::OwnerMismatch: return "OwnerMismatch";
        case Err::RollbackDetected: return "RollbackDetected";
        case Err::AuthFailure: return "AuthFailure";
        case Err::VerifyFailure: return "VerifyFailure";
        case Err::HaltedDuringMigration: return "HaltedDuringMigration";
        case Err::NotRunnable: return "NotRunnable";
        case Err::IoFault: return "IoFault";
        case Err::MalformedMessage: return "MalformedMessage";
        case Err::SchemaError: return "SchemaError";
        case Err::StepBudgetExceeded: return "StepBudgetExceeded";
    }
    return "UnknownError";
}

}  // namespace keyfort
