#include <math.h>
#include <stdio.h>

#include "relaxbv.h"

int main(void) {
    RbvDensity *f = NULL;
    if (rbv_density_catalog("double-well-xi", 1, 1, 1, 2.0, &f) != RBV_STATUS_OK) {
        fprintf(stderr, "%s\n", rbv_last_error_message());
        return 1;
    }
    double zero[1] = {0.0};
    RbvSolverSettings s = rbv_solver_settings_default();
    RbvEnvelopeResult r;
    RbvStatus st = rbv_cq_envelope(f, zero, zero, zero, zero, &s, &r);
    if (st != RBV_STATUS_OK) {
        fprintf(stderr, "%s\n", rbv_last_error_message());
        rbv_density_free(f);
        return 1;
    }
    printf("f(0) = %g, CQf(0) = %g\n", r.f_value, r.value);
    rbv_density_free(f);

    RbvDensity *g = NULL;
    rbv_density_catalog("u-weighted-tv", 1, 1, 1, 2.0, &g);
    double one[1] = {1.0};
    RbvCellResult k;
    if (rbv_surface_density(g, RBV_CELL_KIND_KP, zero, zero, one, zero, one, 0.0, &s, &k) == RBV_STATUS_OK) {
        printf("K_p = %.6f (err %.2e)\n", k.value, k.err_est);
    }
    rbv_density_free(g);
    return 0;
}
