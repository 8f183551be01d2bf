#include "mcad/threads.hpp"

#include <cstdlib>

#include <omp.h>

extern "C" void openblas_set_num_threads(int);

namespace mcad {

int configure_threads() {
    int n = 0;
    if (const char* env = std::getenv("MCAD_THREADS")) {
        n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
    if (n <= 0) n = omp_get_max_threads();
    openblas_set_num_threads(n);
    return n;
}

}  // namespace mcad
