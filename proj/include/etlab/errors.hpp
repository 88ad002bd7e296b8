#pragma once

#include <stdexcept>
#include <string>

namespace etlab {

// Error taxonomy. The CLI maps base classes to exit codes:
// UsageError -> 2, IoError -> 3, TrainingError -> 4, ProtocolError -> 5.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define ETLAB_ERROR(Name, Base)                     \
    struct Name : Base {                            \
        using Base::Base;                           \
    }

ETLAB_ERROR(UnknownEdit, UsageError);
ETLAB_ERROR(EmptyComposition, UsageError);
ETLAB_ERROR(RenderBounds, UsageError);
ETLAB_ERROR(IdentityCollision, UsageError);
ETLAB_ERROR(PromptOverflow, UsageError);
ETLAB_ERROR(BadGrid, UsageError);
ETLAB_ERROR(ShapeError, UsageError);
ETLAB_ERROR(SegmentError, UsageError);
ETLAB_ERROR(AlreadyAdapted, UsageError);
ETLAB_ERROR(MissingTarget, UsageError);
ETLAB_ERROR(BadSchedule, UsageError);
ETLAB_ERROR(NotComposable, UsageError);
ETLAB_ERROR(EmptyDataset, UsageError);
ETLAB_ERROR(WrongStage, UsageError);
ETLAB_ERROR(ConfigError, UsageError);

ETLAB_ERROR(VersionError, IoError);
ETLAB_ERROR(CorruptData, IoError);
ETLAB_ERROR(CorruptCheckpoint, IoError);

ETLAB_ERROR(TrainingDiverged, TrainingError);

ETLAB_ERROR(LeakageError, ProtocolError);

#undef ETLAB_ERROR

}  // namespace etlab
