#ifndef RELAXBV_H
#define RELAXBV_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

// Result codes.
typedef enum RbvStatus {
  RBV_STATUS_OK = 0,
  RBV_STATUS_NULL_POINTER = 1,
  RBV_STATUS_INVALID_UTF8 = 2,
  RBV_STATUS_INVALID_ARGUMENT = 3,
  RBV_STATUS_INVALID_DIMENSIONS = 4,
  RBV_STATUS_DIMENSION_MISMATCH = 5,
  RBV_STATUS_UNKNOWN_DENSITY = 6,
  RBV_STATUS_EXPRESSION = 7,
  RBV_STATUS_NONFINITE_VALUE = 8,
  RBV_STATUS_ALL_STARTS_FAILED = 9,
  RBV_STATUS_NONUNIT_NORMAL = 10,
  RBV_STATUS_DEGENERATE_NORMAL = 11,
  RBV_STATUS_U_DEPENDENT_DENSITY = 12,
  RBV_STATUS_OTHER = 13,
  RBV_STATUS_PANIC = 14,
} RbvStatus;

// Which recession function to use.
typedef enum RbvRecession {
  // `(p, 1)`-recession, `1 < p < ∞`.
  RBV_RECESSION_P = 0,
  // Standard recession, `p = ∞`.
  RBV_RECESSION_INFINITY = 1,
} RbvRecession;

typedef enum RbvCellKind {
  RBV_CELL_KIND_KP = 0,
  RBV_CELL_KIND_KINFINITY = 1,
  RBV_CELL_KIND_KR = 2,
} RbvCellKind;

// Opaque density handle.
typedef struct RbvDensity RbvDensity;

typedef struct RbvSolverSettings {
  size_t grid_n;
  size_t multistart;
  uint64_t seed;
} RbvSolverSettings;

typedef struct RbvDims {
  size_t space_dim;
  size_t target_dim;
  size_t field_dim;
  // `INFINITY` for `p = ∞`.
  double exponent;
} RbvDims;

typedef struct RbvEnvelopeResult {
  double value;
  double f_value;
  size_t grid_n;
  bool converged;
} RbvEnvelopeResult;

typedef struct RbvCellResult {
  double value;
  double err_est;
  double residual;
  size_t grid_n;
  bool converged;
} RbvCellResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rbv_version(void);

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *rbv_last_error_message(void);

// Default cell solver settings.
struct RbvSolverSettings rbv_solver_settings_default(void);

// Creates a catalog density. `exponent` may be `INFINITY`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum RbvStatus rbv_density_catalog(const char *name,
                                   size_t space_dim,
                                   size_t target_dim,
                                   size_t field_dim,
                                   double exponent,
                                   struct RbvDensity **out_density);

// Creates a density from an expression in `x`, `u`, `b`, `xi` and `p`.
//
// # Safety
// `source` must be a NUL-terminated string and `out` a valid pointer.
enum RbvStatus rbv_density_expression(const char *source,
                                      size_t space_dim,
                                      size_t target_dim,
                                      size_t field_dim,
                                      double exponent,
                                      struct RbvDensity **out_density);

// Releases a density; null is ignored.
//
// # Safety
// `density` must come from this library and not be used afterwards.
void rbv_density_free(struct RbvDensity *density);

// # Safety
// `density` must be a live handle and `out` a valid pointer.
enum RbvStatus rbv_density_dims(const struct RbvDensity *density, struct RbvDims *out_dims);

// `f(x, u, b, ξ)`.
//
// # Safety
// Arrays must hold the lengths given by the density's dimensions.
enum RbvStatus rbv_density_eval(const struct RbvDensity *density,
                                const double *x,
                                const double *u,
                                const double *b,
                                const double *xi,
                                double *out_value);

// Recession function of the density at `(x, u, b, ξ)`.
//
// # Safety
// As [`rbv_density_eval`].
enum RbvStatus rbv_recession_eval(const struct RbvDensity *density,
                                  enum RbvRecession kind,
                                  const double *x,
                                  const double *u,
                                  const double *b,
                                  const double *xi,
                                  double *out_value);

// Convex-quasiconvex envelope at `(x, u, b, ξ)`. `settings` may be null.
//
// # Safety
// As [`rbv_density_eval`].
enum RbvStatus rbv_cq_envelope(const struct RbvDensity *density,
                               const double *x,
                               const double *u,
                               const double *b,
                               const double *xi,
                               const struct RbvSolverSettings *settings_ptr,
                               struct RbvEnvelopeResult *out_result);

// Jump cell problem `K_p`, `K_∞` or `K_r` (with `r`) at `(x, b, c, d, ν)`.
// `settings` may be null.
//
// # Safety
// `x`, `nu` hold N values, `b` m values, `c`, `d` d values.
enum RbvStatus rbv_surface_density(const struct RbvDensity *density,
                                   enum RbvCellKind kind,
                                   const double *x,
                                   const double *b,
                                   const double *c,
                                   const double *d,
                                   const double *nu,
                                   double r,
                                   const struct RbvSolverSettings *settings_ptr,
                                   struct RbvCellResult *out_result);

// `f^∞(x, b, (c − d) ⊗ ν)` for densities without explicit `u`-dependence.
//
// # Safety
// As [`rbv_surface_density`].
enum RbvStatus rbv_closed_form_k(const struct RbvDensity *density,
                                 enum RbvRecession kind,
                                 const double *x,
                                 const double *b,
                                 const double *c,
                                 const double *d,
                                 const double *nu,
                                 double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELAXBV_H */
