#pragma once

// Shared vocabulary: linear-algebra aliases, the error hierarchy and the
// random stream conventions used by every other header.

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace nearcrit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Coarse classification used by the CLI to pick an exit code.
enum class ErrorClass {
  invalid_argument,  // caller violated a precondition (config error)
  numerical,         // numerical or model failure
  structure,         // an identity that must hold exactly was broken
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), cls_(cls), code_(std::move(code)) {}

  ErrorClass error_class() const noexcept { return cls_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorClass cls_;
  std::string code_;
};

#define NEARCRIT_DEFINE_ERROR(Name, Class)                                   \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(Class, #Name, what) {}    \
  }

NEARCRIT_DEFINE_ERROR(InvalidArgument, ErrorClass::invalid_argument);
NEARCRIT_DEFINE_ERROR(DomainError, ErrorClass::invalid_argument);
NEARCRIT_DEFINE_ERROR(NotPrimitiveWithin, ErrorClass::numerical);
NEARCRIT_DEFINE_ERROR(ConvergenceFailure, ErrorClass::numerical);
NEARCRIT_DEFINE_ERROR(SlackTooSmall, ErrorClass::numerical);
NEARCRIT_DEFINE_ERROR(SpectralRadiusNotLessThanOne, ErrorClass::numerical);
NEARCRIT_DEFINE_ERROR(ProfileViolatesSmallO, ErrorClass::numerical);
NEARCRIT_DEFINE_ERROR(OrthantViolation, ErrorClass::numerical);
NEARCRIT_DEFINE_ERROR(ParamContractViolation, ErrorClass::numerical);
NEARCRIT_DEFINE_ERROR(NoEscapers, ErrorClass::numerical);
NEARCRIT_DEFINE_ERROR(StructureViolation, ErrorClass::structure);

#undef NEARCRIT_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// splitmix64 finalizer; used only to derive engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// The engine behind every stochastic routine. std::mt19937_64 output is
/// fixed by the standard; the conversions below replace <random>
/// distributions (whose output is implementation-defined) so streams are
/// bit-identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Stream for task `index` of a run seeded with `base_seed`:
  /// engine seed = splitmix64(splitmix64(base_seed) + index).
  static Rng stream(std::uint64_t base_seed, std::uint64_t index) {
    return Rng(splitmix64(base_seed) + index);
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }

  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// +1 or -1, each with probability 1/2.
  double sign() { return (engine_() >> 63) ? 1.0 : -1.0; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nearcrit
