#pragma once

#include <stdexcept>
#include <string>

namespace pspool {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PSPOOL_DEFINE_ERROR(Name)                 \
    class Name : public Error {                   \
    public:                                       \
        explicit Name(const std::string& what)    \
            : Error(std::string(#Name ": ") + what) {} \
    }

// mesh_core
PSPOOL_DEFINE_ERROR(ParseError);
PSPOOL_DEFINE_ERROR(NonTriangleFace);
PSPOOL_DEFINE_ERROR(DegenerateMesh);
PSPOOL_DEFINE_ERROR(IoError);

// hierarchy / correspondence
PSPOOL_DEFINE_ERROR(CannotDecimate);
PSPOOL_DEFINE_ERROR(DisconnectedSeed);

// pool_ops / baseline_pool
PSPOOL_DEFINE_ERROR(ShapeMismatch);
PSPOOL_DEFINE_ERROR(ZeroRow);
PSPOOL_DEFINE_ERROR(OrphanRow);
PSPOOL_DEFINE_ERROR(EmptySelection);

// nn / models
PSPOOL_DEFINE_ERROR(EmptyGraph);
PSPOOL_DEFINE_ERROR(TapeExhausted);
PSPOOL_DEFINE_ERROR(OperatorMismatch);

// experiments
PSPOOL_DEFINE_ERROR(FormatError);
PSPOOL_DEFINE_ERROR(MissingPrecompute);
PSPOOL_DEFINE_ERROR(MissingCheckpoint);
PSPOOL_DEFINE_ERROR(DivergedLoss);
PSPOOL_DEFINE_ERROR(ConfigError);

#undef PSPOOL_DEFINE_ERROR

}  // namespace pspool
