/* Least-restrictive filter on the double-integrator wall, driven from C. */
#include <stdio.h>

#include "safety_filters.h"

#define CHECK(call)                                                   \
    do {                                                              \
        SfStatus s_ = (call);                                         \
        if (s_ != SF_STATUS_OK) {                                     \
            char msg_[256];                                           \
            sf_last_error_message(msg_, sizeof msg_);                 \
            fprintf(stderr, "%s: status %d: %s\n", #call, s_, msg_);  \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    SfModel *model = NULL;
    SfMargin *margin = NULL;
    SfGrid *grid = NULL;
    SfFilter *filter = NULL;
    const double normal[2] = {1.0, 0.0};
    const double lower[2] = {0.0, -3.0}, upper[2] = {4.0, 3.0};
    const size_t shape[2] = {161, 161}, u_counts[1] = {3};
    bool converged = false;

    CHECK(sf_model_double_integrator(1.0, 0.0, 0.05, &model));
    CHECK(sf_margin_halfspace(normal, 2, 0.0, &margin));
    CHECK(sf_grid_solve(model, margin, lower, upper, shape, 2, u_counts, 1, NULL, 0, 1e-6, 1000, &grid, &converged));
    CHECK(sf_filter_least_restrictive(model, grid, u_counts, 1, NULL, 0, &filter));
    sf_grid_free(grid);

    /* Drive at the wall at full throttle; the filter has to stop short of it. */
    double x[2] = {1.5, 0.0}, next[2];
    int overrides = 0;
    for (int t = 0; t < 200; t++) {
        const double task[1] = {-1.0};
        double u[1];
        bool overridden = false;
        CHECK(sf_filter_apply(filter, x, 2, task, 1, u, &overridden, NULL));
        overrides += overridden;
        CHECK(sf_model_step(model, x, 2, u, 1, NULL, 0, next));
        x[0] = next[0];
        x[1] = next[1];
        if (x[0] < 0.0) {
            fprintf(stderr, "crashed at t = %d\n", t);
            return 2;
        }
    }
    printf("final p = %.4f, v = %.4f, overrides = %d\n", x[0], x[1], overrides);

    sf_filter_free(filter);
    sf_margin_free(margin);
    sf_model_free(model);
    return overrides > 0 ? 0 : 3;
}
