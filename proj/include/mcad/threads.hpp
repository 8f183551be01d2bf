#pragma once

namespace mcad {

/// Applies the MCAD_THREADS env var (when set) to both the OpenMP pool and
/// the BLAS backend. Returns the effective thread count.
int configure_threads();

}  // namespace mcad
