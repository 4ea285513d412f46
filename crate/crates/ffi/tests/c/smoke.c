#include <math.h>
#include <stdio.h>
#include "neuram.h"

#define CHECK(cond)                                             \
    do {                                                        \
        if (!(cond)) {                                          \
            fprintf(stderr, "check failed: %s\n", #cond);       \
            return 1;                                           \
        }                                                       \
    } while (0)

int main(void) {
    double x[2] = {0.5, 0.25};
    double y = 0.0;
    CHECK(neuram_model_eval("parabola", x, 2, &y) == NEURAM_STATUS_OK);
    CHECK(y == 0.5);
    CHECK(neuram_model_eval("parabola", x, 1, &y) == NEURAM_STATUS_INVALID_ARGUMENT);
    CHECK(neuram_last_error() != NULL);

    NeuramArtifact *a = NULL;
    CHECK(neuram_artifact_train("q3", 40, 7, 30, 1, 4, &a) == NEURAM_STATUS_OK);
    CHECK(neuram_artifact_dim(a) == 2);
    double lo, hi, t, p[2], g[2];
    CHECK(neuram_artifact_latent_interval(a, &lo, &hi) == NEURAM_STATUS_OK);
    double z[2] = {0.1, -0.4};
    CHECK(neuram_artifact_encode(a, z, 2, &t) == NEURAM_STATUS_OK);
    CHECK(neuram_artifact_decode(a, t, p, 2) == NEURAM_STATUS_OK);
    CHECK(neuram_artifact_global_indices(a, 100, g, 2) == NEURAM_STATUS_OK);
    CHECK(fabs(g[0] + g[1] - 1.0) < 1e-12);
    neuram_artifact_free(a);
    printf("ok %s\n", neuram_version());
    return 0;
}
