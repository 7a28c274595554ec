#include <stdio.h>
#include <string.h>

#include "captor.h"

static int fail(const char *what, CaptorStatus st) {
    const char *msg = captor_last_error();
    fprintf(stderr, "%s: status %d: %s\n", what, (int)st, msg ? msg : "(none)");
    return 1;
}

/* usage: smoke MODEL SAF CAPTIONS */
int main(int argc, char **argv) {
    if (argc != 4) return 2;
    CaptorModel *model = NULL;
    CaptorFeatureGrid *grid = NULL;
    CaptorStatus st;

    if ((st = captor_model_load(argv[1], &model)) != CAPTOR_STATUS_OK) return fail("load", st);
    if ((st = captor_grid_load(argv[2], &grid)) != CAPTOR_STATUS_OK) return fail("grid", st);

    char *text = NULL;
    double lp = 0.0;
    if ((st = captor_caption(model, grid, 3, 20, &text, &lp)) != CAPTOR_STATUS_OK) return fail("caption", st);
    printf("caption %s\n", text);
    printf("log_prob %.17g\n", lp);
    captor_string_free(text);

    if (captor_caption(model, grid, 0, 20, &text, NULL) != CAPTOR_STATUS_INVALID_ARGUMENT) return 1;
    if (captor_last_error() == NULL) return 1;

    CaptorScores s;
    if ((st = captor_score_files(argv[3], argv[3], &s)) != CAPTOR_STATUS_OK) return fail("score", st);
    printf("bleu1 %.6f rouge_l %.6f\n", s.bleu1, s.rouge_l);
    printf("version %s\n", captor_version());

    captor_grid_free(grid);
    captor_model_free(model);
    return 0;
}
