#include <math.h>
#include <stdio.h>
#include "open_stirap.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        OsStatus s_ = (call);                                              \
        if (s_ != OS_STATUS_OK) {                                          \
            fprintf(stderr, "%s: %s\n", #call, os_last_error_message());   \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    OsGenerator *gen = NULL;
    OsSpectrum *spec = NULL;
    OsTrajectory *traj = NULL;
    double re[OS_BLOCH_LEN], im[OS_BLOCH_LEN], gap = 0.0;

    CHECK(os_generator_new_constant(OS_CASE_DEPHASING, 1.0, 1.0, 1.0, 0.0, &gen));
    CHECK(os_spectrum_new(gen, &spec));
    CHECK(os_spectrum_eigenvalues(spec, re, im, NULL, OS_BLOCH_LEN));
    CHECK(os_spectrum_gap(spec, &gap));
    if (!(gap > 0.0)) return 2;

    OsStirapParams p = os_stirap_params_default();
    p.a = 2.0;
    p.samples = 201;
    CHECK(os_evolve_stirap(&p, &traj));
    OsObservables o;
    CHECK(os_trajectory_observables(traj, os_trajectory_len(traj) - 1, &o));
    if (!(o.p3 > 0.99)) return 3;

    if (os_generator_new_constant(99, 1.0, 1.0, 1.0, 0.0, &gen) != OS_STATUS_INVALID_ARGUMENT) return 4;

    printf("%s %.6f %.6f\n", os_version(), gap, o.p3);
    os_trajectory_free(traj);
    os_spectrum_free(spec);
    os_generator_free(gen);
    return 0;
}
