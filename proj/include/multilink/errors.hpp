#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace multilink {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidModel : public Error {
 public:
  using Error::Error;
};

/// The stacked hover system [Qt'_z; Qr'] is rank deficient.
class SingularAllocation : public Error {
 public:
  using Error::Error;
};

class ZeroForce : public Error {
 public:
  using Error::Error;
};

class InfeasibleDesign : public Error {
 public:
  using Error::Error;
};

/// No vectoring angles satisfy the CoG tilt constraints.
class Infeasible : public Error {
 public:
  using Error::Error;
};

class OptimizerStalled : public Error {
 public:
  using Error::Error;
};

/// A deformation step could not be planned. Carries the failing time and joint angles.
class PlanBreak : public Error {
 public:
  PlanBreak(double t, std::string joints, const std::string& why)
      : Error("plan break at t=" + std::to_string(t) + " q=" + joints + ": " + why), t_(t), joints_(std::move(joints)) {}

  double time() const { return t_; }
  const std::string& joints() const { return joints_; }

 private:
  double t_;
  std::string joints_;
};

class SingularInertia : public Error {
 public:
  using Error::Error;
};

class AREFailed : public Error {
 public:
  using Error::Error;
};

/// The torque allocation reached the controller without full row rank.
class RankDeficientQr : public Error {
 public:
  using Error::Error;
};

class ZeroThrustDemand : public Error {
 public:
  using Error::Error;
};

class EmptyTelemetry : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace multilink
