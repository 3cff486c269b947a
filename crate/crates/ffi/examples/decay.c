/* Print the qubit decay curve of the bundled parameter set. */
#include <stdio.h>
#include <stdlib.h>

#include "jqf_sim.h"

static int check(JqfStatus s) {
  if (s != JQF_STATUS_OK) {
    char msg[256];
    jqf_last_error(msg, sizeof msg);
    fprintf(stderr, "jqf error %d: %s\n", (int)s, msg);
    exit(1);
  }
  return 0;
}

int main(void) {
  JqfConfig *config = NULL;
  JqfCurve *curve = NULL;
  size_t rows = 0, cols = 0;

  check(jqf_config_paper(&config));
  check(jqf_decay(config, 0.0, 0, 20, &curve));
  check(jqf_curve_shape(curve, &rows, &cols));

  double *t = (double *)malloc(rows * sizeof *t);
  double *f = (double *)malloc(rows * sizeof *f);
  check(jqf_curve_column(curve, 0, t, rows));
  check(jqf_curve_column(curve, 1, f, rows));
  for (size_t i = 0; i < rows; ++i) printf("%.6e %.12f\n", t[i], f[i]);

  free(t);
  free(f);
  jqf_curve_free(curve);
  jqf_config_free(config);
  return 0;
}
