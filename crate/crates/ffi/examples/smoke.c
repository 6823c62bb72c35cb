#include <math.h>
#include <stdio.h>

#include "ising_cavity.h"

int main(void) {
    IcModel *model = NULL;
    if (ic_model_from_json("{\"kind\": \"poisson\", \"lambda\": 3}", &model) != IC_STATUS_OK) {
        fprintf(stderr, "%s\n", ic_last_error_message());
        return 1;
    }
    double beta_c = 0.0;
    ic_critical_beta(model, &beta_c);
    IcPopulation *pop = NULL;
    if (ic_fixed_point(model, 0.5, 0.01, 20000, 42, &pop) != IC_STATUS_OK) {
        fprintf(stderr, "%s\n", ic_last_error_message());
        ic_model_free(model);
        return 1;
    }
    double m = 0.0, se = 0.0;
    ic_magnetization(model, pop, 20000, 43, &m, &se);
    printf("beta_c %.12f\nM %.6f +- %.6f\n", beta_c, m, se);
    ic_population_free(pop);
    ic_model_free(model);
    return fabs(beta_c - atanh(1.0 / 3.0)) < 1e-12 && m > 0.0 ? 0 : 1;
}
