#ifndef FVLAB_H
#define FVLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FvStatus {
  FV_STATUS_OK = 0,
  FV_STATUS_NULL_POINTER = 1,
  FV_STATUS_INVALID_ARGUMENT = 2,
  FV_STATUS_CONFIG = 3,
  FV_STATUS_DOMAIN_VIOLATION = 4,
  FV_STATUS_NON_SMOOTH_POINT = 5,
  FV_STATUS_EXPLOSION_GUARD = 6,
  FV_STATUS_ALL_KILLED = 7,
  FV_STATUS_CONVERGENCE = 8,
  FV_STATUS_IO = 9,
  FV_STATUS_BUFFER_TOO_SMALL = 10,
  FV_STATUS_PANIC = 99,
} FvStatus;

// A bounded domain.
typedef struct FvDomain FvDomain;

// A particle system together with its jump measures.
typedef struct FvSystem FvSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the buffer size needed for the full message.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t fvlab_last_error(char *buf, size_t len);

// # Safety
// `out` must be valid for writes.
enum FvStatus fvlab_domain_interval(double a, double b, struct FvDomain **out);

// # Safety
// `lo` and `hi` must each hold `dim` values; `out` must be valid for writes.
enum FvStatus fvlab_domain_box(const double *lo,
                               const double *hi,
                               size_t dim,
                               struct FvDomain **out);

// # Safety
// `center` must hold `dim` values; `out` must be valid for writes.
enum FvStatus fvlab_domain_ball(const double *center,
                                size_t dim,
                                double radius,
                                struct FvDomain **out);

// Distance to the boundary (zero outside the domain).
//
// # Safety
// `d` must come from a `fvlab_domain_*` constructor; `x` must hold `dim`
// values; `out` must be valid for writes.
enum FvStatus fvlab_domain_phi(const struct FvDomain *d, const double *x, size_t dim, double *out);

// # Safety
// `d` must be null or a handle not yet freed.
void fvlab_domain_free(struct FvDomain *d);

// Builds a system from a config document. `n = 0` takes the first system
// size listed in the config.
//
// # Safety
// `config_toml` must be a NUL-terminated string; `out` must be valid for writes.
enum FvStatus fvlab_system_from_config(const char *config_toml,
                                       uint64_t seed,
                                       size_t n,
                                       struct FvSystem **out);

// Advances `steps` time steps; writes the number of jumps to `jumps` if non-null.
//
// # Safety
// `s` must be a live system handle; `jumps` must be null or valid for writes.
enum FvStatus fvlab_system_advance(struct FvSystem *s, uint64_t steps, uint64_t *jumps);

// Runs until the clock reaches `horizon`.
//
// # Safety
// `s` must be a live system handle.
enum FvStatus fvlab_system_run(struct FvSystem *s, double horizon);

// # Safety
// `s` must be a live system handle; `out` must be valid for writes.
enum FvStatus fvlab_system_time(const struct FvSystem *s, double *out);

// Number of particles, or 0 for a null handle.
//
// # Safety
// `s` must be null or a live system handle.
size_t fvlab_system_len(const struct FvSystem *s);

// Space dimension, or 0 for a null handle.
//
// # Safety
// `s` must be null or a live system handle.
size_t fvlab_system_dim(const struct FvSystem *s);

// Copies positions row-major (`len * dim` values) into `buf`.
//
// # Safety
// `s` must be a live system handle; `buf` must be valid for `buf_len` writes.
enum FvStatus fvlab_system_positions(const struct FvSystem *s, double *buf, size_t buf_len);

// Total number of jumps so far.
//
// # Safety
// `s` must be a live system handle; `out` must be valid for writes.
enum FvStatus fvlab_system_jump_count(const struct FvSystem *s, uint64_t *out);

// Fraction of particles within distance `a` of the boundary.
//
// # Safety
// `s` must be a live system handle; `out` must be valid for writes.
enum FvStatus fvlab_system_boundary_mass(const struct FvSystem *s, double a, double *out);

// # Safety
// `s` must be null or a handle not yet freed.
void fvlab_system_free(struct FvSystem *s);

// Two-sample Kolmogorov distance between real samples.
//
// # Safety
// `x` and `y` must hold `nx` and `ny` values; `out` must be valid for writes.
enum FvStatus fvlab_kolmogorov_distance(const double *x,
                                        size_t nx,
                                        const double *y,
                                        size_t ny,
                                        double *out);

// Quasi-stationary density of Brownian motion on `(a, b)` on `n` interior
// grid points `a + k (b - a) / (n + 1)`, and the principal eigenvalue.
//
// # Safety
// `density` must be valid for `n` writes; `eigenvalue` must be valid for writes.
enum FvStatus fvlab_spectral_qsd(double a, double b, size_t n, double *density, double *eigenvalue);

// Runs a configured experiment into `out_dir` and writes the process exit
// code the command-line runner would use (0 pass, 1 threshold failure,
// 3 explosion guard). `seed` overrides the config when non-null.
//
// # Safety
// `config_toml` and `out_dir` must be NUL-terminated strings; `seed` must
// be null or valid for reads; `exit_code` must be valid for writes.
enum FvStatus fvlab_run_config(const char *config_toml,
                               const char *out_dir,
                               const uint64_t *seed,
                               int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FVLAB_H */
