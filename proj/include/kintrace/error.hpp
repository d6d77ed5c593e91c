#pragma once

#include <stdexcept>
#include <string>

namespace kintrace {

struct KintraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// geometry
struct DegenerateGradient : KintraceError { using KintraceError::KintraceError; };
struct NoExit : KintraceError { using KintraceError::KintraceError; };
struct NotOnBoundary : KintraceError { using KintraceError::KintraceError; };

// kinetic distance
struct OutsideDomain : KintraceError { using KintraceError::KintraceError; };
struct GrazingDegenerate : KintraceError { using KintraceError::KintraceError; };

// trajectories
struct GrazingStall : KintraceError { using KintraceError::KintraceError; };
struct AtBounceTime : KintraceError { using KintraceError::KintraceError; };
struct CenterDegenerate : KintraceError { using KintraceError::KintraceError; };

// jacobians
struct GrazingExit : KintraceError { using KintraceError::KintraceError; };
struct SegmentCrossing : KintraceError { using KintraceError::KintraceError; };

// collision / quadrature
struct NonFiniteSample : KintraceError { using KintraceError::KintraceError; };
struct QuadratureDivergence : KintraceError { using KintraceError::KintraceError; };
struct ParameterViolation : KintraceError { using KintraceError::KintraceError; };

// cli / config
struct ConfigError : KintraceError { using KintraceError::KintraceError; };

}  // namespace kintrace
