#ifndef TAILWATCH_H
#define TAILWATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TwStatus {
  TW_STATUS_OK = 0,
  TW_STATUS_NULL_POINTER = 1,
  TW_STATUS_INVALID_ARGUMENT = 2,
  TW_STATUS_CONFIG_ERROR = 3,
  TW_STATUS_DATA_ERROR = 4,
  TW_STATUS_INTERNAL_ERROR = 5,
  TW_STATUS_OUT_OF_RANGE = 6,
  TW_STATUS_PANIC = 7,
} TwStatus;

typedef enum TwAlert {
  TW_ALERT_GREEN = 0,
  TW_ALERT_ORANGE = 1,
  TW_ALERT_RED = 2,
} TwAlert;

/**
 * Finished walk-forward run together with the configuration that produced it.
 */
typedef struct TwBacktest TwBacktest;

/**
 * Loaded or generated market panel.
 */
typedef struct TwPanel TwPanel;

/**
 * Flat view of one backtest record. Indices refer to the panel's symbol and date order.
 */
typedef struct TwRecord {
  size_t symbol_index;
  size_t date_index;
  /**
   * Date as `yyyymmdd`.
   */
  int32_t date_ymd;
  double q_raw;
  double q_cal;
  double q_safe;
  double var_hist252;
  double var_hist63;
  double var_ewma;
  double var_gjr;
  double score_q;
  /**
   * 0 green, 1 yellow, 2 red.
   */
  int32_t quality_state;
  double score_u;
  /**
   * 0 low, 1 elevated.
   */
  int32_t uncertainty_state;
  double adjustment_a;
  double ratio_r;
  enum TwAlert alert;
  bool degraded;
  /**
   * Next-day return used for evaluation only.
   */
  double realized_next;
  bool stress;
} TwRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *tw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tw_version(void);

/**
 * Loads a long-format panel CSV and an optional macro CSV (`macro_path` may be null).
 */
enum TwStatus tw_panel_load(const char *panel_path, const char *macro_path, struct TwPanel **out);

/**
 * Generates a seeded synthetic panel with default process settings.
 */
enum TwStatus tw_panel_synthetic(size_t n_symbols,
                                 size_t n_days,
                                 uint64_t seed,
                                 struct TwPanel **out);

enum TwStatus tw_panel_shape(const struct TwPanel *panel, size_t *n_symbols, size_t *n_dates);

void tw_panel_free(struct TwPanel *panel);

/**
 * Runs the walk-forward backtest. `config_toml` holds a TOML run configuration or is null for
 * defaults.
 */
enum TwStatus tw_backtest_run(const struct TwPanel *panel,
                              const char *config_toml,
                              struct TwBacktest **out);

enum TwStatus tw_backtest_len(const struct TwBacktest *bt, size_t *len);

enum TwStatus tw_backtest_record(const struct TwBacktest *bt, size_t index, struct TwRecord *out);

/**
 * Writes records.csv, metrics.json, rolling_breach.csv and alerts.csv into `dir`.
 */
enum TwStatus tw_backtest_write(const struct TwBacktest *bt, const char *dir);

void tw_backtest_free(struct TwBacktest *bt);

/**
 * Kupiec unconditional-coverage statistic and its chi-square(1) p-value.
 */
enum TwStatus tw_kupiec_lr(size_t n, size_t x, double p, double *lr, double *pvalue);

/**
 * Weighted quality score and state (0 green, 1 yellow, 2 red) from the five components
 * (miss, ohlc, jump, vol, stale), using the default weights and thresholds.
 */
enum TwStatus tw_quality_score(const double *components, double *score, int32_t *state);

/**
 * `min(q_hist63, q_cal - a)`; pass NaN for a missing anchor.
 */
enum TwStatus tw_safe_var(double q_cal, double q_hist63, double a, double *out);

/**
 * Linear-interpolation empirical quantile of `n` values.
 */
enum TwStatus tw_empirical_quantile(const double *values, size_t n, double alpha, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAILWATCH_H */
