/* Copyright (c) The Twins Forge Contributors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef TWINS_FORGE_H
#define TWINS_FORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TwinsStatus {
  TWINS_STATUS_OK = 0,
  TWINS_STATUS_NULL_ARGUMENT = 1,
  TWINS_STATUS_INVALID_UTF8 = 2,
  TWINS_STATUS_INVALID_JSON = 3,
  TWINS_STATUS_INVALID_INPUT = 4,
  TWINS_STATUS_UNKNOWN_ATTACK = 5,
  TWINS_STATUS_IO = 6,
  TWINS_STATUS_DIVERGED = 7,
  TWINS_STATUS_PANIC = 8,
} TwinsStatus;

typedef enum TwinsVerdict {
  TWINS_VERDICT_SAFE = 0,
  TWINS_VERDICT_SAFETY_VIOLATION = 1,
  TWINS_VERDICT_LIVENESS_VIOLATION = 2,
  TWINS_VERDICT_INCONCLUSIVE = 3,
} TwinsVerdict;

/*
 The outcome of one execution or attack replay.
 */
typedef struct TwinsReport TwinsReport;

/*
 A validated testcase.
 */
typedef struct TwinsTestCase TwinsTestCase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *twins_last_error(void);

/*
 # Safety
 `s` must come from this library and not have been freed.
 */
void twins_string_free(char *s);

/*
 Parses and validates a testcase in the JSON form written by the
 generator (one line of an offline file, or its `testcase` part).

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum TwinsStatus twins_testcase_from_json(const char *json, struct TwinsTestCase **out);

/*
 # Safety
 `tc` must come from `twins_testcase_from_json` and not have been freed.
 */
void twins_testcase_free(struct TwinsTestCase *tc);

/*
 Executes a testcase against chained BFT. With `strict`, twins' commits
 are judged as well.

 # Safety
 `tc` must be a live handle; `out` must be writable.
 */
enum TwinsStatus twins_execute(const struct TwinsTestCase *tc,
                               bool strict,
                               struct TwinsReport **out);

/*
 Replays a scripted attack by name: zyzzyva, fab, synchs or tendermint.

 # Safety
 `name` must be a NUL-terminated string; `out` must be writable.
 */
enum TwinsStatus twins_replay_attack(const char *name, struct TwinsReport **out);

/*
 # Safety
 `report` must be a live handle.
 */
enum TwinsVerdict twins_report_verdict(const struct TwinsReport *report);

/*
 Commits made by honest instances.

 # Safety
 `report` must be a live handle.
 */
uintptr_t twins_report_honest_commits(const struct TwinsReport *report);

/*
 One-line verdict, e.g. "safety_violation: A committed .. at position 0".
 Free with `twins_string_free`.

 # Safety
 `report` must be a live handle.
 */
char *twins_report_verdict_text(const struct TwinsReport *report);

/*
 The full report (verdict, commit logs, counters) as JSON. Free with
 `twins_string_free`.

 # Safety
 `report` must be a live handle.
 */
char *twins_report_json(const struct TwinsReport *report);

/*
 Writes a run log that `twins_runlog_check` (or `twins replay-log`) can
 re-execute. Attack replays have no testcase and yield `InvalidInput`.

 # Safety
 `report` must be a live handle; `path` a NUL-terminated string.
 */
enum TwinsStatus twins_report_write_runlog(const struct TwinsReport *report, const char *path);

/*
 Re-executes a run log; `Ok` when trace and verdict reproduce exactly.

 # Safety
 `path` must be a NUL-terminated string.
 */
enum TwinsStatus twins_runlog_check(const char *path);

/*
 # Safety
 `report` must come from this library and not have been freed.
 */
void twins_report_free(struct TwinsReport *report);

/*
 Testcase counts per generation stage, as JSON with decimal strings.

 # Safety
 `out` must be writable; the result is freed with `twins_string_free`.
 */
enum TwinsStatus twins_dry_run(uintptr_t nodes,
                               uintptr_t twins,
                               uintptr_t partitions,
                               uintptr_t rounds,
                               char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWINS_FORGE_H */
