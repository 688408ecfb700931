#ifndef SYMVI_H
#define SYMVI_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SymviStatus {
  SYMVI_STATUS_OK = 0,
  SYMVI_STATUS_NULL_POINTER = 1,
  SYMVI_STATUS_INVALID_ARGUMENT = 2,
  SYMVI_STATUS_SHAPE_MISMATCH = 3,
  SYMVI_STATUS_NOT_BIJECTIVE = 4,
  SYMVI_STATUS_NON_FINITE = 5,
  SYMVI_STATUS_FAILED = 6,
  SYMVI_STATUS_PANIC = 7,
} SymviStatus;

// Network layout.
typedef struct SymviArchitecture SymviArchitecture;

// Permutation of every hidden layer.
typedef struct SymviGroupElement SymviGroupElement;

// Mean-field Gaussian over the flattened weights.
typedef struct SymviPosterior SymviPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call.
const char *symvi_last_error(void);

// Library version as a static NUL-terminated string.
const char *symvi_version(void);

// MLP with layer widths `dims[0..n_dims]`, every layer with or without bias.
//
// # Safety
// `dims` must point to `n_dims` values and `out` must be writable.
enum SymviStatus symvi_architecture_new(const size_t *dims,
                                        size_t n_dims,
                                        bool has_bias,
                                        struct SymviArchitecture **out);

// The two-weight network `x ↦ relu(w₁x) + relu(w₂x)`.
//
// # Safety
// `out` must be writable.
enum SymviStatus symvi_architecture_toy(struct SymviArchitecture **out);

// # Safety
// `arch` must come from this library and not be used afterwards.
void symvi_architecture_free(struct SymviArchitecture *arch);

// Number of trainable parameters; 0 for a null handle.
//
// # Safety
// `arch` must be null or a live handle.
size_t symvi_architecture_num_params(const struct SymviArchitecture *arch);

// Group element from one permutation per hidden layer, concatenated.
//
// # Safety
// `perms` must point to `len` values and `out` must be writable.
enum SymviStatus symvi_group_element_new(const struct SymviArchitecture *arch,
                                         const size_t *perms,
                                         size_t len,
                                         struct SymviGroupElement **out);

// Uniformly random group element from `seed`.
//
// # Safety
// `out` must be writable.
enum SymviStatus symvi_group_element_sample(const struct SymviArchitecture *arch,
                                            uint64_t seed,
                                            struct SymviGroupElement **out);

// # Safety
// `g` must come from this library and not be used afterwards.
void symvi_group_element_free(struct SymviGroupElement *g);

// `out = g·w` on flattened weights of length `len`. `out` may alias `w`.
//
// # Safety
// `w` and `out` must each hold `len` values.
enum SymviStatus symvi_apply_action(const struct SymviArchitecture *arch,
                                    const struct SymviGroupElement *g,
                                    const double *w,
                                    double *out,
                                    size_t len);

// Mean-field Gaussian with means `mu` and stds `exp(rho)`.
//
// # Safety
// `mu` and `rho` must each hold `len` values and `out` must be writable.
enum SymviStatus symvi_posterior_new(const double *mu,
                                     const double *rho,
                                     size_t len,
                                     struct SymviPosterior **out);

// # Safety
// `q` must come from this library and not be used afterwards.
void symvi_posterior_free(struct SymviPosterior *q);

// `log q(w)`.
//
// # Safety
// `w` must hold `len` values and `out` must be writable.
enum SymviStatus symvi_posterior_log_density(const struct SymviPosterior *q,
                                             const double *w,
                                             size_t len,
                                             double *out);

// `log q^G(w)` averaged over the first `limit` enumerated group elements
// (the whole group when it is no larger).
//
// # Safety
// `w` must hold `len` values and `out` must be writable.
enum SymviStatus symvi_symmetric_log_density(const struct SymviPosterior *q,
                                             const struct SymviArchitecture *arch,
                                             const double *w,
                                             size_t len,
                                             size_t limit,
                                             double *out);

// Entropy estimates from `s` shared draws: `Ĥᴷ` into `out_hk` and the
// plain Monte Carlo `Ĥ¹` into `out_h1`.
//
// # Safety
// `out_hk` and `out_h1` must be writable.
enum SymviStatus symvi_hk_estimate(const struct SymviPosterior *q,
                                   const struct SymviArchitecture *arch,
                                   size_t k,
                                   size_t s,
                                   uint64_t seed,
                                   double *out_hk,
                                   double *out_h1);

// Distance from `w` to its nearest non-trivial permutation, by exhaustive
// search or by scanning transpositions.
//
// # Safety
// `w` must hold `len` values and `out` must be writable.
enum SymviStatus symvi_nearest_nontrivial(const struct SymviArchitecture *arch,
                                          const double *w,
                                          size_t len,
                                          bool brute_force,
                                          double *out);

// Upper bound on the nearest non-trivial permutation distance at `norm`.
//
// # Safety
// `out` must be writable.
enum SymviStatus symvi_proximity_bound(const struct SymviArchitecture *arch,
                                       double norm,
                                       double *out);

// `log p(x)` of the equal mixture `N(0, σ²I)` and `N(αu, σ²I)` in `d` dimensions.
//
// # Safety
// `u` and `x` must each hold `d` values and `out` must be writable.
enum SymviStatus symvi_mixture_log_density(double alpha,
                                           double sigma,
                                           const double *u,
                                           const double *x,
                                           size_t d,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYMVI_H */
