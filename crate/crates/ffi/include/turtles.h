#ifndef TURTLES_H
#define TURTLES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every call.
typedef enum TurtlesStatus {
  TURTLES_STATUS_OK = 0,
  // A checked property failed.
  TURTLES_STATUS_PROPERTY_VIOLATION = 1,
  // The scenario is malformed or violates a configuration rule.
  TURTLES_STATUS_CONFIG_ERROR = 2,
  // A processor or checker hit an internal invariant error.
  TURTLES_STATUS_INTERNAL_INVARIANT = 3,
  // A null pointer or non-UTF-8 string was passed.
  TURTLES_STATUS_INVALID_ARGUMENT = 4,
  // A trace could not be parsed.
  TURTLES_STATUS_PARSE_ERROR = 5,
  // The run hit its event budget before quiescence.
  TURTLES_STATUS_TRUNCATED = 6,
  // A Rust panic was caught at the boundary.
  TURTLES_STATUS_PANIC = 7,
} TurtlesStatus;

typedef struct TurtlesConfig TurtlesConfig;

typedef struct TurtlesReport TurtlesReport;

typedef struct TurtlesTrace TurtlesTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *turtles_last_error(void);

// Library version as a static string.
const char *turtles_version(void);

// Parses a scenario from JSON and validates it. With `violate_model` set,
// fault counts beyond the tolerated bound are accepted and runs are marked
// model-violating.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
enum TurtlesStatus turtles_config_from_json(const char *json,
                                            bool violate_model,
                                            struct TurtlesConfig **out);

// Replaces the scenario's seed.
//
// # Safety
// `cfg` must be a live handle from [`turtles_config_from_json`].
enum TurtlesStatus turtles_config_set_seed(struct TurtlesConfig *cfg, uint64_t seed);

// The scenario as canonical JSON.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum TurtlesStatus turtles_config_to_json(const struct TurtlesConfig *cfg, char **out);

// # Safety
// `cfg` must be null or a handle not yet freed.
void turtles_config_free(struct TurtlesConfig *cfg);

// Runs the scenario. The trace is stored in `out` whenever the status is
// `Ok`, `Truncated`, or `InternalInvariant`.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum TurtlesStatus turtles_run(const struct TurtlesConfig *cfg, struct TurtlesTrace **out);

// Parses a JSON-lines trace.
//
// # Safety
// `jsonl` must be a valid NUL-terminated string and `out` a valid pointer.
enum TurtlesStatus turtles_trace_from_jsonl(const char *jsonl, struct TurtlesTrace **out);

// Serializes the trace as JSON lines.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum TurtlesStatus turtles_trace_to_jsonl(const struct TurtlesTrace *trace, char **out);

// Hex SHA-256 of the canonical trace.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum TurtlesStatus turtles_trace_hash(const struct TurtlesTrace *trace, char **out);

// Number of events, or 0 for a null handle.
//
// # Safety
// `trace` must be null or a live handle.
uintptr_t turtles_trace_event_count(const struct TurtlesTrace *trace);

// # Safety
// `trace` must be null or a handle not yet freed.
void turtles_trace_free(struct TurtlesTrace *trace);

// Checks a trace. `families` is a comma-separated list of `smr`, `turtle`,
// `bft`, or null for the families matching the trace's scenario. The report
// is stored in `out` whenever checking completed, and the status is `Ok`,
// `PropertyViolation`, or `InternalInvariant` according to its verdict.
//
// # Safety
// `trace` must be a live handle, `families` null or a valid string, and
// `out` a valid pointer.
enum TurtlesStatus turtles_check(const struct TurtlesTrace *trace,
                                 const char *families,
                                 struct TurtlesReport **out);

// The report's verdict, as [`turtles_check`] returned it.
//
// # Safety
// `report` must be a live handle.
enum TurtlesStatus turtles_report_status(const struct TurtlesReport *report);

// Number of gating properties that failed, or 0 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
uintptr_t turtles_report_violation_count(const struct TurtlesReport *report);

// The full report as JSON.
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum TurtlesStatus turtles_report_to_json(const struct TurtlesReport *report, char **out);

// # Safety
// `report` must be null or a handle not yet freed.
void turtles_report_free(struct TurtlesReport *report);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void turtles_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TURTLES_H */
