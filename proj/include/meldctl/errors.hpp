#pragma once

#include <stdexcept>
#include <string>

namespace meldctl {

/* Error taxonomy. Every failure mode surfaced by the library maps to one of
 * these types; callers that need exit codes translate by type. */

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define MELDCTL_ERROR(NAME)                         \
    struct NAME : Error {                           \
        explicit NAME(const std::string& what_arg)  \
            : Error(#NAME ": " + what_arg) {}       \
    }

MELDCTL_ERROR(OrderOverflow);          /* Lie order above k_max */
MELDCTL_ERROR(NonFiniteEvaluation);    /* NaN/inf inside an evaluator */
MELDCTL_ERROR(UndefinedRelativeDegree);
MELDCTL_ERROR(SizeOverflow);           /* enumeration or deck width cap */
MELDCTL_ERROR(DimensionMismatch);
MELDCTL_ERROR(NotHurwitz);
MELDCTL_ERROR(EmptyMeldSet);
MELDCTL_ERROR(SingularInteraction);    /* validity set exit at runtime */
MELDCTL_ERROR(InversionFailure);       /* Newton solve or estimation inverse */
MELDCTL_ERROR(NonpositiveEpsilon);
MELDCTL_ERROR(NonFiniteState);
MELDCTL_ERROR(IndexOutOfRange);
MELDCTL_ERROR(ConfigError);            /* scenario file syntax or semantics */

#undef MELDCTL_ERROR

}  // namespace meldctl
