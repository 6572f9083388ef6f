#pragma once

#include <stdexcept>
#include <string>

namespace scanforest {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// dataset
struct MissingColumn : Error { using Error::Error; };
struct ParseFailure : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct AllRowsDropped : Error { using Error::Error; };
struct SingleClassRemaining : Error { using Error::Error; };
struct DegenerateClass : Error { using Error::Error; };
struct InsufficientClassSize : Error { using Error::Error; };

// forest
struct EmptyNode : Error { using Error::Error; };
struct MissingClass : Error { using Error::Error; };
struct SingleClassData : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };

// tuning
struct NoCandidates : Error { using Error::Error; };

// metrics
struct LengthMismatch : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct EmptyMatrix : Error { using Error::Error; };
struct NoMetadata : Error { using Error::Error; };
struct ZeroVariance : Error { using Error::Error; };

// scangen
struct UnsupportedCombination : Error { using Error::Error; };

// serialization
struct UnsupportedVersion : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace scanforest
