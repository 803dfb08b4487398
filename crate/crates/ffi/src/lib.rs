//! C ABI over `confspec`. Every function returns a [`ConfspecStatus`]; on
//! failure the message is available from [`confspec_last_error`] on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use confspec::certify::{moebius_map, CertifyOptions};
use confspec::eigen::{solve_pencil, EigenOptions};
use confspec::fem::{assemble_mass, assemble_stiffness, DensityField, Floor, MassMode};
use confspec::maximizer::{maximize, AscentConfig, InitialDensity, MaximizeResult, RunStatus};
use confspec::mesh::{load_mesh, MeshFormat, MeshGenerator, TriangleMesh};
use confspec::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfspecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InputError = 3,
    NumericalError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfspecRunStatus {
    Converged = 0,
    Collapse = 1,
    IterationCap = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfspecInit {
    Uniform = 0,
    Random = 1,
}

/// Ascent parameters. `n_schedule` may be null to keep the default schedule
/// (4, 16, 64) in units of 1/A.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ConfspecAscentOptions {
    pub n_schedule: *const f64,
    pub n_schedule_len: usize,
    pub damping: f64,
    pub max_iters: usize,
    pub lambda_tol: f64,
    /// 0 or -0.5.
    pub floor: f64,
    pub seed: u64,
}

pub struct ConfspecMesh(TriangleMesh);

pub struct ConfspecResult(MaximizeResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn from_error(e: Error) -> ConfspecStatus {
    let status = if e.is_input_error() {
        ConfspecStatus::InputError
    } else {
        ConfspecStatus::NumericalError
    };
    set_error(e.to_string());
    status
}

fn fail(status: ConfspecStatus, message: &str) -> ConfspecStatus {
    set_error(message.to_string());
    status
}

fn guard(f: impl FnOnce() -> ConfspecStatus) -> ConfspecStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ConfspecStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, ConfspecStatus> {
    if p.is_null() {
        return Err(fail(
            ConfspecStatus::NullPointer,
            &format!("{name} is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        fail(
            ConfspecStatus::InvalidArgument,
            &format!("{name} is not UTF-8"),
        )
    })
}

macro_rules! check_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(ConfspecStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn confspec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn confspec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a mesh from a generator spec such as `icosphere:4` or
/// `flat-torus:equilateral:48`.
#[no_mangle]
pub unsafe extern "C" fn confspec_mesh_generate(
    spec: *const c_char,
    out: *mut *mut ConfspecMesh,
) -> ConfspecStatus {
    guard(|| {
        check_null!(out);
        let spec = try_status!(str_arg(spec, "spec"));
        let mesh = match spec.parse::<MeshGenerator>().and_then(|g| g.generate()) {
            Ok(m) => m,
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(ConfspecMesh(mesh)));
        ConfspecStatus::Ok
    })
}

/// Loads an OFF, OBJ or intrinsic-JSON mesh. `format` may be null to infer it
/// from the extension.
#[no_mangle]
pub unsafe extern "C" fn confspec_mesh_load(
    path: *const c_char,
    format: *const c_char,
    out: *mut *mut ConfspecMesh,
) -> ConfspecStatus {
    guard(|| {
        check_null!(out);
        let path = Path::new(try_status!(str_arg(path, "path")));
        let format = if format.is_null() {
            match MeshFormat::from_path(path) {
                Some(f) => f,
                None => {
                    return fail(
                        ConfspecStatus::InvalidArgument,
                        "cannot infer the mesh format",
                    )
                }
            }
        } else {
            match try_status!(str_arg(format, "format")).parse() {
                Ok(f) => f,
                Err(e) => return from_error(e),
            }
        };
        match load_mesh(path, format) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(ConfspecMesh(m)));
                ConfspecStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn confspec_mesh_free(mesh: *mut ConfspecMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Vertex count, genus and total area.
#[no_mangle]
pub unsafe extern "C" fn confspec_mesh_stats(
    mesh: *const ConfspecMesh,
    vertices: *mut usize,
    genus: *mut usize,
    area: *mut f64,
) -> ConfspecStatus {
    guard(|| {
        check_null!(mesh, vertices, genus, area);
        let m = &(*mesh).0;
        *vertices = m.vertex_count();
        *genus = m.genus();
        *area = m.area();
        ConfspecStatus::Ok
    })
}

/// Lowest `k` nonzero eigenvalues of the pencil, scaled so that they equal
/// `λ·A`. `density` may be null for the uniform density; otherwise it holds
/// one value per vertex and is rescaled to unit mass. `eigenvalues` must have
/// room for `k` entries.
#[no_mangle]
pub unsafe extern "C" fn confspec_spectrum(
    mesh: *const ConfspecMesh,
    density: *const f64,
    density_len: usize,
    k: usize,
    eigenvalues: *mut f64,
) -> ConfspecStatus {
    guard(|| {
        check_null!(mesh, eigenvalues);
        let m = &(*mesh).0;
        if k == 0 {
            return fail(ConfspecStatus::InvalidArgument, "k must be positive");
        }
        let values = if density.is_null() {
            vec![1.0; m.vertex_count()]
        } else {
            std::slice::from_raw_parts(density, density_len).to_vec()
        };
        let run = || -> confspec::Result<Vec<f64>> {
            let mu = DensityField::normalized(m, values, Floor::Zero, f64::INFINITY)?;
            let spec = solve_pencil(
                &assemble_stiffness(m),
                &assemble_mass(m, &mu, MassMode::Consistent),
                &EigenOptions::with_k(k),
            )?;
            Ok(spec.eigenvalues)
        };
        match run() {
            Ok(ev) => {
                let out = std::slice::from_raw_parts_mut(eigenvalues, k);
                for (o, v) in out
                    .iter_mut()
                    .zip(ev.iter().chain(std::iter::repeat(&f64::NAN)))
                {
                    *o = *v;
                }
                ConfspecStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub extern "C" fn confspec_ascent_options_default() -> ConfspecAscentOptions {
    let d = AscentConfig::default();
    ConfspecAscentOptions {
        n_schedule: ptr::null(),
        n_schedule_len: 0,
        damping: d.damping,
        max_iters: d.max_iters,
        lambda_tol: d.lambda_tol,
        floor: d.floor.value(),
        seed: d.seed,
    }
}

/// Runs the ascent and certifies the result. `options` may be null for
/// defaults; `init_seed` is used only with `CONFSPEC_INIT_RANDOM`.
#[no_mangle]
pub unsafe extern "C" fn confspec_maximize(
    mesh: *const ConfspecMesh,
    options: *const ConfspecAscentOptions,
    init: ConfspecInit,
    init_seed: u64,
    out: *mut *mut ConfspecResult,
) -> ConfspecStatus {
    guard(|| {
        check_null!(mesh, out);
        let m = &(*mesh).0;
        let mut config = AscentConfig::default();
        if !options.is_null() {
            let o = &*options;
            if !o.n_schedule.is_null() {
                config.n_schedule =
                    std::slice::from_raw_parts(o.n_schedule, o.n_schedule_len).to_vec();
            }
            config.damping = o.damping;
            config.max_iters = o.max_iters;
            config.lambda_tol = o.lambda_tol;
            config.seed = o.seed;
            config.floor = match Floor::from_value(o.floor) {
                Ok(f) => f,
                Err(e) => return from_error(e),
            };
        }
        let init = match init {
            ConfspecInit::Uniform => InitialDensity::Uniform,
            ConfspecInit::Random => InitialDensity::Random(init_seed),
        };
        match maximize(m, &init, &config, &CertifyOptions::default()) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(ConfspecResult(r)));
                ConfspecStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn confspec_result_free(result: *mut ConfspecResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[no_mangle]
pub unsafe extern "C" fn confspec_result_lambda1_area(
    result: *const ConfspecResult,
    value: *mut f64,
) -> ConfspecStatus {
    guard(|| {
        check_null!(result, value);
        *value = (*result).0.certificate.lambda1_area;
        ConfspecStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn confspec_result_status(
    result: *const ConfspecResult,
    status: *mut ConfspecRunStatus,
) -> ConfspecStatus {
    guard(|| {
        check_null!(result, status);
        *status = match (*result).0.trace.status {
            RunStatus::Converged => ConfspecRunStatus::Converged,
            RunStatus::Collapse => ConfspecRunStatus::Collapse,
            RunStatus::IterationCap => ConfspecRunStatus::IterationCap,
        };
        ConfspecStatus::Ok
    })
}

/// Copies the final density into `buffer`. `len` receives the vertex count;
/// with a null or short buffer nothing is copied and
/// `CONFSPEC_STATUS_BUFFER_TOO_SMALL` is returned.
#[no_mangle]
pub unsafe extern "C" fn confspec_result_density(
    result: *const ConfspecResult,
    buffer: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> ConfspecStatus {
    guard(|| {
        check_null!(result, len);
        let values = (*result).0.density.values();
        *len = values.len();
        if buffer.is_null() || capacity < values.len() {
            return fail(ConfspecStatus::BufferTooSmall, "density buffer too small");
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buffer, values.len());
        ConfspecStatus::Ok
    })
}

/// Certificate as JSON. Release the string with [`confspec_string_free`].
#[no_mangle]
pub unsafe extern "C" fn confspec_result_certificate_json(
    result: *const ConfspecResult,
    json: *mut *mut c_char,
) -> ConfspecStatus {
    guard(|| {
        check_null!(result, json);
        let text = (*result).0.certificate.to_json();
        *json = CString::new(text).expect("json has no nul").into_raw();
        ConfspecStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn confspec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `σ_e(x)` for `|e| < 1` and unit `x`; all arrays hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn confspec_moebius_map(
    e: *const f64,
    x: *const f64,
    out: *mut f64,
) -> ConfspecStatus {
    guard(|| {
        check_null!(e, x, out);
        let e = *e.cast::<[f64; 3]>();
        let x = *x.cast::<[f64; 3]>();
        match moebius_map(e, x) {
            Ok(y) => {
                *out.cast::<[f64; 3]>() = y;
                ConfspecStatus::Ok
            }
            Err(err) => from_error(err),
        }
    })
}
