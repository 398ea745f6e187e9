#pragma once

#include <cstdint>
#include <iosfwd>

#include "ba/camera_model.hpp"

namespace ba {

// Entry point of the `ba` tool. Returns 0 on success, 1 on solver failure,
// 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Largest relative difference (Frobenius, per block) between the analytic
// projection Jacobian and central differences over `samples` random
// configurations of the given layout with distortion enabled.
double check_jacobians(std::uint64_t seed, int samples, CameraLayout layout);

}  // namespace ba
