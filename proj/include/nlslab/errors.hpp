#pragma once

#include <stdexcept>
#include <string>

namespace nlslab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define NLSLAB_ERROR(Name)                                              \
  struct Name : Error {                                                 \
    using Error::Error;                                                 \
    const char* kind() const noexcept override { return #Name; }        \
  }

NLSLAB_ERROR(BracketFailure);
NLSLAB_ERROR(NonDecayingIntegrand);
NLSLAB_ERROR(ModeOutOfRange);
NLSLAB_ERROR(SolvabilityViolated);
NLSLAB_ERROR(SolverFailure);
NLSLAB_ERROR(InvalidModel);
NLSLAB_ERROR(EnergyConditionViolated);
NLSLAB_ERROR(StepSizeUnderflow);
NLSLAB_ERROR(NonIntegrableForcing);
NLSLAB_ERROR(UnderResolved);
NLSLAB_ERROR(NaNDetected);
NLSLAB_ERROR(NewtonDiverged);
NLSLAB_ERROR(NonMonotoneSeries);
NLSLAB_ERROR(ConfigError);
NLSLAB_ERROR(IoError);

#undef NLSLAB_ERROR

}  // namespace nlslab
