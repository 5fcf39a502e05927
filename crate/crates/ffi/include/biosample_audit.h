/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef BIOSAMPLE_AUDIT_H
#define BIOSAMPLE_AUDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BsaReason {
  BSA_REASON_EMPTY = 0,
  BSA_REASON_BOOLEAN_LITERAL,
  BSA_REASON_NOT_BOOLEAN,
  BSA_REASON_INTEGER_LITERAL,
  BSA_REASON_NOT_INTEGER,
  BSA_REASON_INTEGER_OUT_OF_RANGE,
  BSA_REASON_VALUE_SET_MEMBER,
  BSA_REASON_NOT_IN_VALUE_SET,
  BSA_REASON_ONTOLOGY_MATCH,
  BSA_REASON_NO_ONTOLOGY_MATCH,
  BSA_REASON_RESOLVER_UNAVAILABLE,
  BSA_REASON_TERM_CANDIDATES,
  BSA_REASON_NO_TERM_CANDIDATES,
  BSA_REASON_COUNTED_ONLY,
  BSA_REASON_CUSTOM_NAME,
} BsaReason;

/**
 * Result of every fallible call.
 */
typedef enum BsaStatus {
  BSA_STATUS_OK = 0,
  BSA_STATUS_NULL_ARGUMENT = 1,
  BSA_STATUS_INVALID_UTF8 = 2,
  BSA_STATUS_DICTIONARY = 3,
  BSA_STATUS_TERMS = 4,
  BSA_STATUS_PARSE = 5,
  BSA_STATUS_VERSION_MISMATCH = 6,
  BSA_STATUS_CONFIG = 7,
  BSA_STATUS_AUDIT = 8,
  BSA_STATUS_PANIC = 9,
} BsaStatus;

typedef enum BsaGroup {
  BSA_GROUP_ONTOLOGY_TERM = 0,
  BSA_GROUP_TERM = 1,
  BSA_GROUP_VALUE_SET = 2,
  BSA_GROUP_BOOLEAN = 3,
  BSA_GROUP_INTEGER = 4,
  BSA_GROUP_UNIT = 5,
  BSA_GROUP_PUBMED_ID = 6,
  BSA_GROUP_FREE_TEXT = 7,
} BsaGroup;

typedef enum BsaWellSpecified {
  BSA_WELL_SPECIFIED_VALID = 0,
  BSA_WELL_SPECIFIED_INVALID = 1,
  BSA_WELL_SPECIFIED_NOT_ASSESSED = 2,
} BsaWellSpecified;

/**
 * Loaded attribute dictionary.
 */
typedef struct BsaDictionary BsaDictionary;

/**
 * Mergeable audit counters.
 */
typedef struct BsaTally BsaTally;

/**
 * Local ontology term index.
 */
typedef struct BsaTermIndex BsaTermIndex;

/**
 * Verdict for one attribute value.
 */
typedef struct BsaVerdict {
  enum BsaGroup group;
  enum BsaWellSpecified well_specified;
  enum BsaReason reason;
  bool filled_in;
  bool null_like;
  /**
   * False for custom (non-dictionary) attribute names.
   */
  bool in_dictionary;
} BsaVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *bsa_version(void);

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next library call on the same thread.
 */
const char *bsa_last_error_message(void);

/**
 * Release a string returned by the library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void bsa_string_free(char *s);

/**
 * Snake-case name of a reason code, a static string.
 */
const char *bsa_reason_name(enum BsaReason reason);

/**
 * Normalize an attribute name (`Host_Age` -> `host age`).
 *
 * # Safety
 * `raw` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BsaStatus bsa_normalize_attribute_name(const char *raw, char **out);

/**
 * Normalize a value for lenient matching. Underscores are kept.
 *
 * # Safety
 * `raw` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BsaStatus bsa_normalize_value(const char *raw, char **out);

/**
 * Load a dictionary document from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BsaStatus bsa_dictionary_load(const char *path, struct BsaDictionary **out);

/**
 * Parse a dictionary document from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BsaStatus bsa_dictionary_from_json(const char *json, struct BsaDictionary **out);

/**
 * # Safety
 * `dict` must come from this library and not be used afterwards.
 */
void bsa_dictionary_free(struct BsaDictionary *dict);

/**
 * Build a term index from `count` TSV files.
 *
 * # Safety
 * `paths` must point to `count` NUL-terminated strings; `out` a valid
 * pointer.
 */
enum BsaStatus bsa_term_index_load(const char *const *paths,
                                   size_t count,
                                   struct BsaTermIndex **out);

/**
 * Build a term index from TSV text.
 *
 * # Safety
 * `tsv` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BsaStatus bsa_term_index_from_tsv(const char *tsv, struct BsaTermIndex **out);

/**
 * # Safety
 * `index` must come from this library and not be used afterwards.
 */
void bsa_term_index_free(struct BsaTermIndex *index);

/**
 * Judge one attribute value with the default policy. `index` may be NULL,
 * in which case no ontology term matches.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum BsaStatus bsa_validate_value(const struct BsaDictionary *dict,
                                  const struct BsaTermIndex *index,
                                  const char *attribute_name,
                                  const char *value,
                                  struct BsaVerdict *out);

/**
 * A new, empty tally. With a dictionary, the tally is tagged with its
 * version and refuses to merge with tallies from other versions.
 *
 * # Safety
 * `dict` may be NULL; `out` must be valid.
 */
enum BsaStatus bsa_tally_new(const struct BsaDictionary *dict, struct BsaTally **out);

/**
 * # Safety
 * `tally` must come from this library and not be used afterwards.
 */
void bsa_tally_free(struct BsaTally *tally);

/**
 * Validate one record, given as a JSON-lines object, and count it.
 *
 * # Safety
 * Pointers must be valid (`index` may be NULL); strings NUL-terminated.
 */
enum BsaStatus bsa_tally_accumulate_json(struct BsaTally *tally,
                                         const struct BsaDictionary *dict,
                                         const struct BsaTermIndex *index,
                                         const char *record_json);

/**
 * Merge `other` into `into`. Fails, leaving `into` unchanged, if the two
 * come from different dictionary versions.
 *
 * # Safety
 * Both must be valid tallies; they may not alias.
 */
enum BsaStatus bsa_tally_merge(struct BsaTally *into, const struct BsaTally *other);

/**
 * The finalized report for a tally, as JSON, with default settings.
 *
 * # Safety
 * `tally` must be valid; `out` a valid pointer.
 */
enum BsaStatus bsa_tally_summary_json(const struct BsaTally *tally, char **out);

/**
 * Audit a corpus described by a JSON configuration (the same document the
 * command line accepts). The report is written to `output_path` when the
 * configuration names one; the JSON summary is always returned in
 * `out_summary`. `out_exit_code`, if not NULL, receives the command-line
 * exit status the run would have produced. API keys for remote resolution
 * are read from the environment variable named by `api_key_env` (NULL
 * means none).
 *
 * # Safety
 * Pointers must be valid (`api_key_env` and `out_exit_code` may be NULL).
 */
enum BsaStatus bsa_audit(const char *config_json,
                         const char *api_key_env,
                         char **out_summary,
                         int32_t *out_exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIOSAMPLE_AUDIT_H */
