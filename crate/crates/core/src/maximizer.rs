//! Damped fixed-point ascent on `μ ← Σ|∇u_i|²/λ` over the class `S_N`, with
//! continuation in `N` and collapse detection.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{certificate, Certificate, CertifyOptions};
use crate::eigen::{solve_first_cluster, EigenOptions, SpectralResult, DEFAULT_REL_GAP};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, integrate, l1_distance, DensityField, Floor, MassMode,
    StiffnessMatrix,
};
use crate::frame::{recover_density, select_frame, SphereFrame};
use crate::mesh::{graph_distances, TriangleMesh};

/// Tolerance on the mass constraint inside the projection.
pub const PROJECTION_TOLERANCE: f64 = 1e-12;
/// Inner iterations allowed to the projection.
pub const PROJECTION_ITERATIONS: usize = 50;
/// Relative margin below `N` still counted as saturated.
pub const SATURATION_MARGIN: f64 = 1e-6;
/// Default radii for [`detect_collapse`], as fractions of the diameter.
pub const COLLAPSE_RADII: [f64; 3] = [0.05, 0.1, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscentConfig {
    /// Density caps in units of `1/A`.
    pub n_schedule: Vec<f64>,
    pub damping: f64,
    pub max_iters: usize,
    /// Relative λ improvement below which a level counts as converged.
    pub lambda_tol: f64,
    pub floor: Floor,
    pub seed: u64,
    pub rel_gap: f64,
    pub max_halvings: usize,
    /// Eigenpairs requested before widening to the full first cluster.
    pub k: usize,
    pub eigen_tol: f64,
    pub mass_mode: MassMode,
    /// When every trial on the first cluster fails, the frame is rebuilt on
    /// the clusters within this relative window above λ₁.
    pub widen_window: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            n_schedule: vec![4.0, 16.0, 64.0],
            damping: 0.5,
            max_iters: 500,
            lambda_tol: 1e-7,
            floor: Floor::Zero,
            seed: 0x5eed,
            rel_gap: DEFAULT_REL_GAP,
            max_halvings: 6,
            k: 8,
            eigen_tol: 1e-9,
            mass_mode: MassMode::Consistent,
            widen_window: 0.25,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_schedule.is_empty() {
            return Err(Error::Config("empty N schedule".into()));
        }
        if self.n_schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "N schedule must be strictly increasing".into(),
            ));
        }
        if !(self.n_schedule[0] > 1.0) {
            return Err(Error::Config(
                "N schedule entries must exceed 1 (units of 1/A)".into(),
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        if !(self.widen_window >= 0.0) {
            return Err(Error::Config(format!(
                "widen window {} is negative",
                self.widen_window
            )));
        }
        if !(self.lambda_tol >= 0.0) || self.k == 0 {
            return Err(Error::Config(
                "lambda tolerance must be nonnegative and k positive".into(),
            ));
        }
        Ok(())
    }

    fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            k: self.k,
            tol: self.eigen_tol,
            seed: self.seed,
            rel_gap: self.rel_gap,
            ..EigenOptions::default()
        }
    }
}

/// Euclidean-in-`L²(vertex areas)` projection onto `{floor ≤ μ ≤ cap, ∫μ = 1}`:
/// `μ_v = clip(x_v + c)` with the scalar `c` fixed by the mass constraint.
pub fn project_density(
    mesh: &TriangleMesh,
    x: &[f64],
    floor: Floor,
    cap: f64,
) -> Result<DensityField> {
    let areas = mesh.vertex_areas();
    let lo = floor.value();
    let total: f64 = areas.iter().sum();
    if lo * total > 1.0 || cap * total < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "box [{lo}, {cap}] admits no unit-mass density"
        )));
    }
    let clipped = |c: f64| -> Vec<f64> { x.iter().map(|&v| (v + c).clamp(lo, cap)).collect() };
    let mass = |c: f64| -> (f64, f64) {
        let mut m = 0.0;
        let mut slope = 0.0;
        for (&v, &a) in x.iter().zip(areas) {
            let y = v + c;
            if y <= lo {
                m += a * lo;
            } else if y >= cap {
                m += a * cap;
            } else {
                m += a * y;
                slope += a;
            }
        }
        (m - 1.0, slope)
    };
    // Bracket: the mass is nondecreasing in c.
    let xmin = x.iter().copied().fold(f64::INFINITY, f64::min);
    let xmax = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut a, mut b) = (lo - xmax, cap - xmin);
    let mut c = 0.0f64.clamp(a, b);
    let mut residual = f64::INFINITY;
    for _ in 0..PROJECTION_ITERATIONS {
        let (r, slope) = mass(c);
        residual = r;
        if r.abs() <= PROJECTION_TOLERANCE {
            break;
        }
        if r > 0.0 {
            b = c;
        } else {
            a = c;
        }
        let newton = if slope > 0.0 { c - r / slope } else { f64::NAN };
        c = if newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
    }
    let mut mu = clipped(c);
    if residual.abs() > PROJECTION_TOLERANCE {
        let violation = mu
            .iter()
            .map(|&v| (lo - v).max(v - cap).max(0.0))
            .fold(0.0, f64::max);
        return Err(Error::Projection {
            mass_residual: residual.abs(),
            box_violation: violation,
        });
    }
    // Remove the last rounding of the mass on the free vertices.
    let m = integrate(mesh, &mu);
    let free: f64 = mu
        .iter()
        .zip(areas)
        .filter(|(v, _)| **v > lo && **v < cap)
        .map(|(_, a)| a)
        .sum();
    if free > 0.0 {
        let d = (1.0 - m) / free;
        mu.iter_mut()
            .filter(|v| **v > lo && **v < cap)
            .for_each(|v| *v = (*v + d).clamp(lo, cap));
    }
    DensityField::new(mesh, mu, floor, cap)
}

/// State carried between ascent steps at one density.
#[derive(Debug, Clone)]
pub struct AscentState {
    pub density: DensityField,
    pub spectrum: SpectralResult,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: AscentState,
    /// Frame selected at the incoming density.
    pub frame: SphereFrame,
    /// Accepted damping, or 0 when every trial lowered λ₁.
    pub step: f64,
    pub accepted: bool,
}

/// Pencil solve at a density.
pub fn evaluate(
    mesh: &TriangleMesh,
    stiffness: &StiffnessMatrix,
    density: DensityField,
    config: &AscentConfig,
) -> Result<AscentState> {
    let mass = assemble_mass(mesh, &density, config.mass_mode);
    let spectrum = solve_first_cluster(stiffness, &mass, &config.eigen_options())?;
    Ok(AscentState { density, spectrum })
}

/// Frame at the current density and the density it recovers.
pub fn frame_of(mesh: &TriangleMesh, state: &AscentState) -> Result<(SphereFrame, Vec<f64>)> {
    let spec = &state.spectrum;
    let frame = select_frame(
        mesh,
        &spec.first_cluster_basis(),
        spec.first_cluster_value(),
    )?;
    let nu = recover_density(mesh, &frame)?;
    Ok((frame, nu))
}

/// Eigenvector counts of the cluster prefixes lying within `window` of λ₁.
fn widened_prefixes(spec: &SpectralResult, window: f64) -> Vec<usize> {
    let limit = spec.lambda1() * (1.0 + window);
    let mut out = Vec::new();
    let mut count = 0;
    for (i, c) in spec.clusters.iter().enumerate() {
        let last = c.iter().copied().max().unwrap_or(0);
        // The highest cluster may be cut off by k.
        if i > 0 && (last + 1 >= spec.eigenvalues.len() || spec.eigenvalues[c[0]] > limit) {
            break;
        }
        count += c.len();
        if i > 0 {
            out.push(count);
        }
    }
    out
}

fn frame_on_prefix(
    mesh: &TriangleMesh,
    spec: &SpectralResult,
    count: usize,
) -> Result<(SphereFrame, Vec<f64>)> {
    let basis: Vec<Vec<f64>> = spec.eigenvectors[..count].to_vec();
    let lambda = spec.eigenvalues[..count].iter().sum::<f64>() / count as f64;
    let frame = select_frame(mesh, &basis, lambda)?;
    let nu = recover_density(mesh, &frame)?;
    Ok((frame, nu))
}

/// One damped step `μ ← Proj((1−t)μ + tν)`. A trial is accepted only if λ₁
/// does not decrease; `t` is halved up to `max_halvings` times. If every
/// trial fails, the frame is rebuilt on wider cluster prefixes within
/// `widen_window`; failing those too, the incoming state is returned unchanged.
pub fn ascent_step(
    mesh: &TriangleMesh,
    stiffness: &StiffnessMatrix,
    state: &AscentState,
    config: &AscentConfig,
) -> Result<StepOutcome> {
    let (frame, nu) = frame_of(mesh, state)?;
    if let Some((trial, step)) = damped_trials(mesh, stiffness, state, config, &nu)? {
        return Ok(StepOutcome {
            state: trial,
            frame,
            step,
            accepted: true,
        });
    }
    for count in widened_prefixes(&state.spectrum, config.widen_window) {
        let (_, wide) = frame_on_prefix(mesh, &state.spectrum, count)?;
        if let Some((trial, step)) = damped_trials(mesh, stiffness, state, config, &wide)? {
            log::debug!("step accepted on a frame of {count} eigenfunctions");
            return Ok(StepOutcome {
                state: trial,
                frame,
                step,
                accepted: true,
            });
        }
    }
    Ok(StepOutcome {
        state: state.clone(),
        frame,
        step: 0.0,
        accepted: false,
    })
}

fn damped_trials(
    mesh: &TriangleMesh,
    stiffness: &StiffnessMatrix,
    state: &AscentState,
    config: &AscentConfig,
    nu: &[f64],
) -> Result<Option<(AscentState, f64)>> {
    let mu = state.density.values();
    let lambda = state.spectrum.lambda1();
    let mut t = config.damping;
    for _ in 0..=config.max_halvings {
        let x: Vec<f64> = mu
            .iter()
            .zip(nu)
            .map(|(m, n)| (1.0 - t) * m + t * n)
            .collect();
        let candidate = project_density(mesh, &x, state.density.floor(), state.density.cap())?;
        let trial = evaluate(mesh, stiffness, candidate, config)?;
        if trial.spectrum.lambda1() >= lambda {
            return Ok(Some((trial, t)));
        }
        t *= 0.5;
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDensity {
    Uniform,
    Random(u64),
    Given(Vec<f64>),
}

impl InitialDensity {
    /// Raw (unprojected) starting values.
    pub fn values(&self, mesh: &TriangleMesh) -> Result<Vec<f64>> {
        let n = mesh.vertex_count();
        let a = mesh.area();
        match self {
            InitialDensity::Uniform => Ok(vec![1.0 / a; n]),
            InitialDensity::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..n).map(|_| rng.gen_range(0.5..1.5) / a).collect())
            }
            InitialDensity::Given(v) if v.len() == n => Ok(v.clone()),
            InitialDensity::Given(v) => Err(Error::InvalidDensity(format!(
                "{} values for {n} vertices",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    Collapse,
    IterationCap,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Collapse => "collapse",
            RunStatus::IterationCap => "iteration-cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Absolute density cap.
    pub n: f64,
    pub lambda1_area: f64,
    pub en_measure: f64,
    pub eneg_measure: f64,
    pub step: f64,
    pub frame_obj: f64,
    pub wall_ms: f64,
    pub accepted: bool,
}

/// Final state of one `N` level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSummary {
    pub n: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda1_area: f64,
    pub en_measure: f64,
    pub en_measure_times_n: f64,
    pub eneg_measure: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AscentTrace {
    pub records: Vec<TraceRecord>,
    pub levels: Vec<LevelSummary>,
    pub status: RunStatus,
}

impl AscentTrace {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("iter,N,lambda1_area,EN_measure,ENeg_measure,step,frame_obj,wall_ms\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.10e},{:.12e},{:.6e},{:.6e},{:.6e},{:.6e},{:.3}",
                r.iter,
                r.n,
                r.lambda1_area,
                r.en_measure,
                r.eneg_measure,
                r.step,
                r.frame_obj,
                r.wall_ms
            );
        }
        out
    }

    /// Largest `A(E_N)·N` over the schedule.
    pub fn saturation_constant(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| l.en_measure_times_n)
            .fold(0.0, f64::max)
    }

    /// λ₁·A along accepted iterates, in order.
    pub fn accepted_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.records {
            if r.iter == 0 || r.accepted {
                out.push(r.lambda1_area);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MaximizeResult {
    pub density: DensityField,
    pub spectrum: SpectralResult,
    pub frame: SphereFrame,
    pub trace: AscentTrace,
    pub certificate: Certificate,
}

/// Area of `{μ ≥ N(1 − 1e−6)}`.
pub fn saturated_measure(mesh: &TriangleMesh, density: &DensityField) -> f64 {
    let cut = density.cap() * (1.0 - SATURATION_MARGIN);
    density
        .values()
        .iter()
        .zip(mesh.vertex_areas())
        .filter(|(v, _)| **v >= cut)
        .fold(0.0, |s, (_, a)| s + a)
}

/// Area of `{μ < 0}`.
pub fn negative_measure(mesh: &TriangleMesh, density: &DensityField) -> f64 {
    density
        .values()
        .iter()
        .zip(mesh.vertex_areas())
        .filter(|(v, _)| **v < 0.0)
        .fold(0.0, |s, (_, a)| s + a)
}

pub fn maximize(
    mesh: &TriangleMesh,
    init: &InitialDensity,
    config: &AscentConfig,
    certify: &CertifyOptions,
) -> Result<MaximizeResult> {
    config.validate()?;
    let start = Instant::now();
    let area = mesh.area();
    let stiffness = assemble_stiffness(mesh);
    let raw = init.values(mesh)?;
    let first_cap = config.n_schedule[0] / area;
    let density = project_density(mesh, &raw, config.floor, first_cap)?;
    let mut state = evaluate(mesh, &stiffness, density, config)?;

    let mut records = Vec::new();
    let mut levels = Vec::new();
    let mut iter = 0;
    let mut capped = false;
    let mut last_frame = None;
    for (level, &scaled) in config.n_schedule.iter().enumerate() {
        let cap = scaled / area;
        if level > 0 {
            let d = state.density.with_bounds(mesh, config.floor, cap)?;
            state = AscentState {
                density: d,
                spectrum: state.spectrum,
            };
        }
        let record = |iter, state: &AscentState, step, frame_obj, accepted| TraceRecord {
            iter,
            n: cap,
            lambda1_area: state.spectrum.lambda1(),
            en_measure: saturated_measure(mesh, &state.density),
            eneg_measure: negative_measure(mesh, &state.density),
            step,
            frame_obj,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            accepted,
        };
        if level == 0 {
            records.push(record(0, &state, 0.0, f64::NAN, false));
        }
        let mut converged = false;
        let mut level_iters = 0;
        while level_iters < config.max_iters {
            level_iters += 1;
            iter += 1;
            let before = state.spectrum.lambda1();
            let out = ascent_step(mesh, &stiffness, &state, config)?;
            state = out.state;
            records.push(record(
                iter,
                &state,
                out.step,
                out.frame.objective,
                out.accepted,
            ));
            last_frame = Some(out.frame);
            let gain = (state.spectrum.lambda1() - before) / before;
            log::debug!(
                "iter {iter}: N·A = {scaled}, λ₁·A = {:.10}, step {}",
                state.spectrum.lambda1(),
                out.step
            );
            if !out.accepted || gain <= config.lambda_tol {
                converged = true;
                break;
            }
        }
        capped |= !converged;
        let en = saturated_measure(mesh, &state.density);
        levels.push(LevelSummary {
            n: cap,
            iterations: level_iters,
            converged,
            lambda1_area: state.spectrum.lambda1(),
            en_measure: en,
            en_measure_times_n: en * cap,
            eneg_measure: negative_measure(mesh, &state.density),
        });
    }
    // The frame returned belongs to the final density.
    let frame = match last_frame {
        Some(f) if f.lambda == state.spectrum.first_cluster_value() => f,
        _ => frame_of(mesh, &state)?.0,
    };
    let certificate = certificate(mesh, &state.density, &state.spectrum, &frame, certify)?;
    let status = if certificate.collapse.flag {
        RunStatus::Collapse
    } else if capped {
        RunStatus::IterationCap
    } else {
        RunStatus::Converged
    };
    Ok(MaximizeResult {
        density: state.density,
        spectrum: state.spectrum,
        frame,
        trace: AscentTrace {
            records,
            levels,
            status,
        },
        certificate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    pub radius_fractions: Vec<f64>,
    pub max_ball_mass: Vec<f64>,
    pub flag: bool,
}

/// Largest `μ`-mass inside intrinsic graph balls of radius `r·diam(M)`.
/// Flags collapse when a ball of radius `0.05·diam` holds more than half the mass.
pub fn detect_collapse(
    mesh: &TriangleMesh,
    density: &[f64],
    radius_fractions: &[f64],
) -> CollapseReport {
    let adj = mesh.adjacency();
    let diam = mesh.diameter();
    let areas = mesh.vertex_areas();
    let ball_mass = |r: f64| {
        (0..mesh.vertex_count())
            .into_par_iter()
            .map(|v| {
                graph_distances(&adj, v, r * diam)
                    .iter()
                    .map(|&(u, _)| density[u] * areas[u])
                    .sum::<f64>()
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    };
    let max_ball_mass: Vec<f64> = radius_fractions.iter().map(|&r| ball_mass(r)).collect();
    let at_005 = match radius_fractions.iter().position(|&r| r == 0.05) {
        Some(i) => max_ball_mass[i],
        None => ball_mass(0.05),
    };
    CollapseReport {
        radius_fractions: radius_fractions.to_vec(),
        max_ball_mass,
        flag: at_005 > 0.5,
    }
}

/// `∫ |μ − ν| dA` between two fields on the same mesh.
pub fn density_change(mesh: &TriangleMesh, a: &DensityField, b: &DensityField) -> f64 {
    l1_distance(mesh, a.values(), b.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_flat_torus, gen_icosphere};

    #[test]
    fn projection_hits_mass_and_box() {
        let mesh = gen_icosphere(2).unwrap();
        let a = mesh.area();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..mesh.vertex_count())
                .map(|_| rng.gen_range(-3.0..12.0) / a)
                .collect();
            let d = project_density(&mesh, &x, Floor::Zero, 4.0 / a).unwrap();
            assert!((integrate(&mesh, d.values()) - 1.0).abs() < 1e-12);
            assert!(d.values().iter().all(|&v| (0.0..=4.0 / a).contains(&v)));
        }
    }

    #[test]
    fn projection_is_identity_on_admissible_input() {
        let mesh = gen_flat_torus([[1.0, 0.0], [0.0, 1.0]], 6, 6).unwrap();
        let d = project_density(&mesh, &vec![1.0; 36], Floor::Zero, 4.0).unwrap();
        assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn infeasible_box_is_rejected() {
        let mesh = gen_flat_torus([[1.0, 0.0], [0.0, 1.0]], 6, 6).unwrap();
        assert!(project_density(&mesh, &vec![1.0; 36], Floor::Zero, 0.5).is_err());
    }

    #[test]
    fn uniform_sphere_density_has_no_collapse() {
        let mesh = gen_icosphere(3).unwrap();
        let mu = vec![1.0 / mesh.area(); mesh.vertex_count()];
        let r = detect_collapse(&mesh, &mu, &COLLAPSE_RADII);
        assert!(!r.flag);
        assert!(r.max_ball_mass[0] < 0.05);
    }

    #[test]
    fn concentrated_density_collapses() {
        let mesh = gen_icosphere(3).unwrap();
        let a = mesh.vertex_areas();
        let mut mu = vec![0.0; mesh.vertex_count()];
        mu[0] = 1.0 / a[0];
        let r = detect_collapse(&mesh, &mu, &COLLAPSE_RADII);
        assert!(r.flag);
    }

    #[test]
    fn config_validation() {
        let mut c = AscentConfig::default();
        assert!(c.validate().is_ok());
        c.n_schedule = vec![16.0, 4.0];
        assert!(c.validate().is_err());
        c = AscentConfig {
            damping: 0.0,
            ..AscentConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
