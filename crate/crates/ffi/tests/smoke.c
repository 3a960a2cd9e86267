#include <stdio.h>
#include <string.h>

#include "turtles.h"

static int expect(TurtlesStatus got, TurtlesStatus want, const char *what) {
    if (got != want) {
        const char *err = turtles_last_error();
        fprintf(stderr, "%s: status %d, wanted %d (%s)\n", what, got, want, err ? err : "no message");
        return 1;
    }
    return 0;
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke '<scenario json>'\n");
        return 2;
    }
    TurtlesConfig *cfg = NULL;
    TurtlesTrace *trace = NULL;
    TurtlesReport *report = NULL;
    char *hash = NULL;

    if (expect(turtles_config_from_json("{\"n\": 3, \"f\": 1, \"k\": 2, \"turtle_schedule\": [{\"kind\": \"onestep\"}]}",
                                        false, &cfg),
               TURTLES_STATUS_CONFIG_ERROR, "k=2 one-step"))
        return 1;
    if (cfg != NULL || strstr(turtles_last_error(), "3-intersection") == NULL) return 1;

    if (expect(turtles_config_from_json(argv[1], false, &cfg), TURTLES_STATUS_OK, "config")) return 1;
    turtles_config_set_seed(cfg, 5);
    if (expect(turtles_run(cfg, &trace), TURTLES_STATUS_OK, "run")) return 1;
    if (expect(turtles_check(trace, NULL, &report), TURTLES_STATUS_OK, "check")) return 1;
    if (turtles_report_violation_count(report) != 0) return 1;
    if (expect(turtles_trace_hash(trace, &hash), TURTLES_STATUS_OK, "hash")) return 1;
    printf("%zu %s\n", turtles_trace_event_count(trace), hash);

    turtles_string_free(hash);
    turtles_report_free(report);
    turtles_trace_free(trace);
    turtles_config_free(cfg);
    return 0;
}
