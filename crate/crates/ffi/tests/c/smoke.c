#include <stdio.h>
#include <string.h>

#include "biosample_audit.h"

#define CHECK(cond)                                                       \
    do {                                                                  \
        if (!(cond)) {                                                    \
            const char *e = bsa_last_error_message();                     \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
                    e ? e : "no error");                                  \
            return 1;                                                     \
        }                                                                 \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: smoke DICTIONARY TERMS\n");
        return 2;
    }
    BsaDictionary *dict = NULL;
    BsaTermIndex *index = NULL;
    BsaTally *tally = NULL;
    const char *term_files[] = {argv[2]};
    char *norm = NULL;
    char *summary = NULL;
    BsaVerdict v;

    CHECK(bsa_dictionary_load(argv[1], &dict) == BSA_STATUS_OK);
    CHECK(bsa_term_index_load(term_files, 1, &index) == BSA_STATUS_OK);

    CHECK(bsa_normalize_attribute_name("  Host_Disease ", &norm) == BSA_STATUS_OK);
    CHECK(strcmp(norm, "host disease") == 0);
    bsa_string_free(norm);

    CHECK(bsa_validate_value(dict, index, "host_disease", "HIV", &v) == BSA_STATUS_OK);
    CHECK(v.group == BSA_GROUP_ONTOLOGY_TERM);
    CHECK(v.well_specified == BSA_WELL_SPECIFIED_VALID);
    CHECK(strcmp(bsa_reason_name(v.reason), "ontology_match") == 0);

    CHECK(bsa_validate_value(dict, NULL, "smoker", "maybe", &v) == BSA_STATUS_OK);
    CHECK(v.well_specified == BSA_WELL_SPECIFIED_INVALID && v.reason == BSA_REASON_NOT_BOOLEAN);

    CHECK(bsa_dictionary_from_json("{", &dict) == BSA_STATUS_DICTIONARY);
    CHECK(bsa_last_error_message() != NULL);
    CHECK(bsa_validate_value(NULL, NULL, "sex", "male", &v) == BSA_STATUS_NULL_ARGUMENT);

    CHECK(bsa_tally_new(dict, &tally) == BSA_STATUS_OK);
    CHECK(bsa_tally_accumulate_json(
              tally, dict, index,
              "{\"accession\":\"X1\",\"package_name\":\"Human.1.0\",\"attributes\":"
              "[{\"name\":\"sex\",\"value\":\"female\"},{\"name\":\"disease\",\"value\":\"HIV\"}]}") ==
          BSA_STATUS_OK);
    CHECK(bsa_tally_summary_json(tally, &summary) == BSA_STATUS_OK);
    CHECK(strstr(summary, "\"total_records\":1") != NULL);
    bsa_string_free(summary);

    bsa_tally_free(tally);
    bsa_term_index_free(index);
    bsa_dictionary_free(dict);
    printf("ok %s\n", bsa_version());
    return 0;
}
