//! C interface to the solver.
//!
//! Meshes and solutions are opaque handles created and released through
//! this API. Every fallible function returns a [`VemsadStatus`]; on failure
//! [`vemsad_last_error`] gives a message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vemsad::assembly::{Discretization, SolutionState};
use vemsad::coupling::StressReading;
use vemsad::harness::{
    example1_case, patch_coupled_case, patch_transport_case, prepare_mesh, run_lithiation, solve_case,
    ErrorComponents, LithiationConfig, PhiReference,
};
use vemsad::mesh::{build_structured_mesh, load_mesh, PolyMesh, StructuredKind};
use vemsad::solver::{FixedPointConfig, IterationTrace};
use vemsad::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VemsadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Mesh = 4,
    NonConvergence = 5,
    NonSpd = 6,
    LinearSolver = 7,
    Io = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VemsadMeshKind {
    Hex = 0,
    Prism = 1,
}

/// Weighted errors of a manufactured solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VemsadErrors {
    pub u: f64,
    pub p: f64,
    pub zeta: f64,
    pub phi: f64,
    pub total: f64,
}

/// Opaque mesh handle.
pub struct VemsadMesh {
    mesh: PolyMesh,
}

/// Opaque solution handle.
pub struct VemsadSolution {
    mesh: PolyMesh,
    disc: Discretization,
    state: SolutionState,
    trace: IterationTrace,
    errors: Option<ErrorComponents>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VemsadStatus {
    match e {
        Error::Parse(_) => VemsadStatus::Parse,
        Error::Topology(_)
        | Error::Geometry(_)
        | Error::EmptyDirichlet
        | Error::DegenerateCell(_)
        | Error::DegenerateFace(_)
        | Error::SingularProjection { .. }
        | Error::Constraint(_) => VemsadStatus::Mesh,
        Error::NonConvergence { .. } => VemsadStatus::NonConvergence,
        Error::NonSpd { .. } => VemsadStatus::NonSpd,
        Error::LinearSolver(_) => VemsadStatus::LinearSolver,
        Error::Io(_) => VemsadStatus::Io,
        Error::Dimension(_) | Error::Input(_) | Error::Quadrature(_) => VemsadStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), VemsadStatus>) -> VemsadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VemsadStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            VemsadStatus::Internal
        }
    }
}

fn fail(e: Error) -> VemsadStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null() -> VemsadStatus {
    set_error("null pointer argument".into());
    VemsadStatus::NullPointer
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, VemsadStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map(Path::new).map_err(|_| {
        set_error("path is not valid UTF-8".into());
        VemsadStatus::InvalidInput
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vemsad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vemsad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a mesh file (`.json`, `.off` or `.vtu`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vemsad_mesh_load(path: *const c_char, out: *mut *mut VemsadMesh) -> VemsadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let path = path_arg(path)?;
        let mesh = load_mesh(path, None).map_err(fail)?;
        *out = Box::into_raw(Box::new(VemsadMesh { mesh }));
        Ok(())
    })
}

/// Uniform mesh of the unit cube with `n` cells per direction.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vemsad_mesh_structured(kind: VemsadMeshKind, n: usize, out: *mut *mut VemsadMesh) -> VemsadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        if n == 0 {
            set_error("n must be positive".into());
            return Err(VemsadStatus::InvalidInput);
        }
        let kind = match kind {
            VemsadMeshKind::Hex => StructuredKind::Hex,
            VemsadMeshKind::Prism => StructuredKind::Prism,
        };
        let mesh = build_structured_mesh(kind, n, [0.0; 3], [1.0; 3]);
        *out = Box::into_raw(Box::new(VemsadMesh { mesh }));
        Ok(())
    })
}

/// Vertex, face and cell counts.
///
/// # Safety
/// `mesh` must come from this library; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn vemsad_mesh_counts(
    mesh: *const VemsadMesh,
    vertices: *mut usize,
    faces: *mut usize,
    cells: *mut usize,
) -> VemsadStatus {
    guard(|| {
        let m = &mesh.as_ref().ok_or_else(null)?.mesh;
        for (p, v) in [(vertices, m.num_vertices()), (faces, m.num_faces()), (cells, m.num_cells())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn vemsad_mesh_free(mesh: *mut VemsadMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

fn fixed_point(tolerance: f64, max_iterations: usize) -> FixedPointConfig {
    FixedPointConfig {
        tolerance,
        max_iterations,
        ..Default::default()
    }
}

/// Solves a manufactured case (`example1`, `patch-coupled`,
/// `patch-transport`) on a copy of `mesh` and computes its errors.
///
/// # Safety
/// `mesh` must come from this library, `case` must be NUL-terminated and
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vemsad_solve_manufactured(
    mesh: *const VemsadMesh,
    case: *const c_char,
    tolerance: f64,
    max_iterations: usize,
    out: *mut *mut VemsadSolution,
) -> VemsadStatus {
    guard(|| {
        let m = &mesh.as_ref().ok_or_else(null)?.mesh;
        if case.is_null() || out.is_null() {
            return Err(null());
        }
        let case = match CStr::from_ptr(case).to_str().unwrap_or("") {
            "example1" => example1_case(StressReading::Matrix),
            "patch-coupled" => patch_coupled_case(),
            "patch-transport" => patch_transport_case(),
            other => {
                set_error(format!("unknown case '{other}'"));
                return Err(VemsadStatus::InvalidInput);
            }
        };
        let mesh = prepare_mesh(m.clone(), &case).map_err(fail)?;
        let res = solve_case(&mesh, &case, &fixed_point(tolerance, max_iterations)).map_err(fail)?;
        let reference = if case.name.starts_with("patch") {
            PhiReference::CellMean
        } else {
            PhiReference::Pointwise
        };
        let errors = res.errors(&mesh, &case, 4, reference);
        *out = Box::into_raw(Box::new(VemsadSolution {
            mesh,
            disc: res.discretization,
            state: res.state,
            trace: res.trace,
            errors: Some(errors),
        }));
        Ok(())
    })
}

/// Runs the lithiation setup on a copy of `mesh`.
///
/// # Safety
/// `mesh` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vemsad_run_lithiation(
    mesh: *const VemsadMesh,
    clamped: bool,
    tolerance: f64,
    max_iterations: usize,
    out: *mut *mut VemsadSolution,
) -> VemsadStatus {
    guard(|| {
        let m = &mesh.as_ref().ok_or_else(null)?.mesh;
        if out.is_null() {
            return Err(null());
        }
        let base = LithiationConfig::default();
        let config = LithiationConfig {
            clamped,
            fixed_point: FixedPointConfig {
                tolerance,
                max_iterations,
                ..base.fixed_point.clone()
            },
            ..base
        };
        let res = run_lithiation(m.clone(), &config).map_err(fail)?;
        *out = Box::into_raw(Box::new(VemsadSolution {
            mesh: res.mesh,
            disc: res.discretization,
            state: res.state,
            trace: res.trace,
            errors: None,
        }));
        Ok(())
    })
}

/// Number of Picard iterations taken.
///
/// # Safety
/// `sol` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vemsad_solution_iterations(sol: *const VemsadSolution, out: *mut usize) -> VemsadStatus {
    guard(|| {
        let s = sol.as_ref().ok_or_else(null)?;
        *out.as_mut().ok_or_else(null)? = s.trace.iterations();
        Ok(())
    })
}

/// Errors of a manufactured solve. Fails for solutions without an exact
/// reference.
///
/// # Safety
/// `sol` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vemsad_solution_errors(sol: *const VemsadSolution, out: *mut VemsadErrors) -> VemsadStatus {
    guard(|| {
        let s = sol.as_ref().ok_or_else(null)?;
        let out = out.as_mut().ok_or_else(null)?;
        let e = s.errors.ok_or_else(|| {
            set_error("solution has no exact reference".into());
            VemsadStatus::InvalidInput
        })?;
        *out = VemsadErrors {
            u: e.u,
            p: e.p,
            zeta: e.zeta,
            phi: e.phi,
            total: e.total,
        };
        Ok(())
    })
}

/// Copies the cell concentrations into `buf`. With a null `buf` only the
/// required length is written to `len`.
///
/// # Safety
/// `sol` must come from this library, `len` valid, and `buf` (if not null)
/// must hold `*len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vemsad_solution_concentration(
    sol: *const VemsadSolution,
    buf: *mut f64,
    len: *mut usize,
) -> VemsadStatus {
    guard(|| {
        let s = sol.as_ref().ok_or_else(null)?;
        let len = len.as_mut().ok_or_else(null)?;
        let n = s.state.phi.len();
        if buf.is_null() {
            *len = n;
            return Ok(());
        }
        if *len < n {
            *len = n;
            set_error(format!("buffer holds fewer than {n} values"));
            return Err(VemsadStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(s.state.phi.as_ptr(), buf, n);
        *len = n;
        Ok(())
    })
}

/// Writes the solution fields as a VTU file.
///
/// # Safety
/// `sol` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vemsad_solution_export_vtu(sol: *const VemsadSolution, path: *const c_char) -> VemsadStatus {
    guard(|| {
        let s = sol.as_ref().ok_or_else(null)?;
        let path = path_arg(path)?;
        vemsad::harness::export_vtk(&s.mesh, &s.disc, &s.state, path).map_err(fail)
    })
}

/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn vemsad_solution_free(sol: *mut VemsadSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}
