#include <stdio.h>
#include "restlink.h"

int main(int argc, char **argv) {
    if (argc < 2) return 2;
    RlScenario *s = NULL;
    if (rl_scenario_load(argv[1], &s) != RL_STATUS_OK) {
        fprintf(stderr, "%s\n", rl_last_error());
        return 1;
    }
    size_t targets = 0;
    rl_scenario_target_count(s, &targets);
    RlRun *run = NULL;
    if (rl_search_run(s, "mio", 300, 5, &run) != RL_STATUS_OK) return 1;
    size_t covered = 0;
    rl_run_covered_count(run, &covered);
    char *suite = NULL;
    rl_run_suite_json(run, &suite);
    printf("%zu %zu %c\n", targets, covered, suite[0]);
    rl_string_free(suite);
    rl_run_free(run);
    rl_scenario_free(s);
    return 0;
}
