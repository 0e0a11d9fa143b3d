#pragma once

namespace vslcrf {

inline constexpr const char* kVersion = "0.1.0";

// Protocol defaults. These are wired into the CLI and the library defaults;
// tests pin them so a change here is a deliberate act.
inline constexpr int kDefaultNumStates = 3;
inline constexpr int kDefaultMinSegmentLen = 6;
inline constexpr double kDefaultPcaEnergy = 0.97;
inline constexpr double kNuInitUniform = 0.5;

inline constexpr double kDefaultLambdaN = 1e-2;
inline constexpr double kDefaultLambdaO = 1e-2;
inline constexpr double kDefaultLambdaP = 1e-1;

// Floor added to sigma0^2 so the ordinal scale can never collapse to zero.
inline constexpr double kSigmaFloor = 1e-4;

// Ordinal bin probabilities are clamped here before taking logs.
inline constexpr double kProbClamp = 1e-300;

// Base step size of the diminishing schedule s0/sqrt(t) used by VSLm.
inline constexpr double kVslmStepScale = 0.1;

}  // namespace vslcrf
