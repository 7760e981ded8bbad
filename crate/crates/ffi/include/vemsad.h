#ifndef VEMSAD_H
#define VEMSAD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VemsadMeshKind {
  VEMSAD_MESH_KIND_HEX = 0,
  VEMSAD_MESH_KIND_PRISM = 1,
} VemsadMeshKind;

typedef enum VemsadStatus {
  VEMSAD_STATUS_OK = 0,
  VEMSAD_STATUS_NULL_POINTER = 1,
  VEMSAD_STATUS_INVALID_INPUT = 2,
  VEMSAD_STATUS_PARSE = 3,
  VEMSAD_STATUS_MESH = 4,
  VEMSAD_STATUS_NON_CONVERGENCE = 5,
  VEMSAD_STATUS_NON_SPD = 6,
  VEMSAD_STATUS_LINEAR_SOLVER = 7,
  VEMSAD_STATUS_IO = 8,
  VEMSAD_STATUS_BUFFER_TOO_SMALL = 9,
  VEMSAD_STATUS_INTERNAL = 10,
} VemsadStatus;

// Opaque mesh handle.
typedef struct VemsadMesh VemsadMesh;

// Opaque solution handle.
typedef struct VemsadSolution VemsadSolution;

// Weighted errors of a manufactured solve.
typedef struct VemsadErrors {
  double u;
  double p;
  double zeta;
  double phi;
  double total;
} VemsadErrors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *vemsad_last_error(void);

// Library version as a static NUL-terminated string.
const char *vemsad_version(void);

// Reads a mesh file (`.json`, `.off` or `.vtu`).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum VemsadStatus vemsad_mesh_load(const char *path, struct VemsadMesh **out);

// Uniform mesh of the unit cube with `n` cells per direction.
//
// # Safety
// `out` must be a valid pointer.
enum VemsadStatus vemsad_mesh_structured(enum VemsadMeshKind kind,
                                         size_t n,
                                         struct VemsadMesh **out);

// Vertex, face and cell counts.
//
// # Safety
// `mesh` must come from this library; the out pointers may be null.
enum VemsadStatus vemsad_mesh_counts(const struct VemsadMesh *mesh,
                                     size_t *vertices,
                                     size_t *faces,
                                     size_t *cells);

// # Safety
// `mesh` must come from this library or be null.
void vemsad_mesh_free(struct VemsadMesh *mesh);

// Solves a manufactured case (`example1`, `patch-coupled`,
// `patch-transport`) on a copy of `mesh` and computes its errors.
//
// # Safety
// `mesh` must come from this library, `case` must be NUL-terminated and
// `out` valid.
enum VemsadStatus vemsad_solve_manufactured(const struct VemsadMesh *mesh,
                                            const char *case_,
                                            double tolerance,
                                            size_t max_iterations,
                                            struct VemsadSolution **out);

// Runs the lithiation setup on a copy of `mesh`.
//
// # Safety
// `mesh` must come from this library and `out` be valid.
enum VemsadStatus vemsad_run_lithiation(const struct VemsadMesh *mesh,
                                        bool clamped,
                                        double tolerance,
                                        size_t max_iterations,
                                        struct VemsadSolution **out);

// Number of Picard iterations taken.
//
// # Safety
// `sol` must come from this library and `out` be valid.
enum VemsadStatus vemsad_solution_iterations(const struct VemsadSolution *sol, size_t *out);

// Errors of a manufactured solve. Fails for solutions without an exact
// reference.
//
// # Safety
// `sol` must come from this library and `out` be valid.
enum VemsadStatus vemsad_solution_errors(const struct VemsadSolution *sol,
                                         struct VemsadErrors *out);

// Copies the cell concentrations into `buf`. With a null `buf` only the
// required length is written to `len`.
//
// # Safety
// `sol` must come from this library, `len` valid, and `buf` (if not null)
// must hold `*len` doubles.
enum VemsadStatus vemsad_solution_concentration(const struct VemsadSolution *sol,
                                                double *buf,
                                                size_t *len);

// Writes the solution fields as a VTU file.
//
// # Safety
// `sol` must come from this library and `path` be NUL-terminated.
enum VemsadStatus vemsad_solution_export_vtu(const struct VemsadSolution *sol, const char *path);

// # Safety
// `sol` must come from this library or be null.
void vemsad_solution_free(struct VemsadSolution *sol);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VEMSAD_H */
