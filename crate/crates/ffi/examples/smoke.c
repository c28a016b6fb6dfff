/* cc -Iinclude examples/smoke.c ../../target/release/libmcd_ffi.a -lm -lpthread -ldl -o smoke */
#include <stdio.h>
#include "mcd.h"

int main(void) {
    const char *json = "{\"nodes\": [\"U\", \"X_T\", \"X_S\", \"Y_S\"],"
                       " \"edges\": [[\"U\", \"X_T\"], [\"U\", \"X_S\"], [\"X_S\", \"Y_S\"]]}";
    McdDag *dag = NULL;
    if (mcd_dag_from_json(json, &dag) != MCD_STATUS_OK) {
        fprintf(stderr, "%s\n", mcd_last_error());
        return 1;
    }
    bool sep = false;
    mcd_dag_is_d_separated(dag, "X_T", "Y_S", "X_S", &sep);
    printf("X_T _||_ Y_S | X_S: %s\n", sep ? "yes" : "no");

    char *path = NULL;
    mcd_dag_active_path(dag, "X_T", "Y_S", "", &path);
    printf("open path: %s\n", path ? path : "(none)");
    mcd_string_free(path);
    mcd_dag_free(dag);

    McdScm *scm = NULL;
    double p = 0.0;
    mcd_scm_toy(0.9, 0.9, &scm);
    mcd_scm_query(scm, "Y_S=1", "X_T=1", &p);
    printf("P(Y_S=1 | X_T=1) = %.3f\n", p);
    mcd_scm_free(scm);
    return 0;
}
