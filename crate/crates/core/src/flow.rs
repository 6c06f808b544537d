//! The modified moment map flow `Ḟ = −Π_α∇φ(F)` on `ℱ^c_α`.
//!
//! The state is kept as coordinates in a [`ClosedBasis`], so every iterate lies
//! in `ℱ^c_α` by construction. Writing `G x = b(∇φ)` for the Gram system, the
//! flow is the finite ODE `ċ = −x`.

use nalgebra::{DVector, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forms::{differentiate, norm2_g, periods, CellField, ClosedBasis, Potential};
use crate::mesh::TorusMesh;
use crate::moment::{grad_phi, mu};
use crate::quatgeom::Vector4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub integrator: Integrator,
    pub h0: f64,
    pub adaptive: bool,
    /// Upper bound for adaptive step growth.
    pub max_step: f64,
    /// Converged once `‖𝝁‖ ≤ mu_tol`.
    pub mu_tol: f64,
    pub max_time: f64,
    pub max_steps: usize,
    /// Record every `trace_stride`-th accepted step (the first and last are always kept).
    pub trace_stride: usize,
    /// `|τ| ≤ tau_min` classifies the limit as degenerate.
    pub tau_min: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            integrator: Integrator::Rk4,
            h0: 1e-2,
            adaptive: true,
            max_step: 1e12,
            mu_tol: 1e-9,
            max_time: 1e15,
            max_steps: 1_000_000,
            trace_stride: 1,
            tau_min: 1e-6,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("h0", self.h0),
            ("max_step", self.max_step),
            ("mu_tol", self.mu_tol),
            ("max_time", self.max_time),
            ("tau_min", self.tau_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_steps == 0 {
            return Err("max_steps must be positive".into());
        }
        if self.trace_stride == 0 {
            return Err("trace_stride must be positive".into());
        }
        Ok(())
    }
}

/// Ways to specify `F_0`. Fields outside `ℱ^c_α` are projected.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// The constant field `Id`.
    Identity,
    Field(CellField),
    Coords(DVector<f64>),
}

/// `Id + ε·𝒟u` with `u` uniform in `[−1, 1]⁴` per vertex.
pub fn perturbed_identity(mesh: &TorusMesh, eps: f64, rng: &mut ChaCha8Rng) -> CellField {
    let mut f = differentiate(mesh, &random_potential(mesh, rng));
    f = f.scale(eps);
    f.axpy(1.0, &CellField::constant(mesh.n_cells(), Matrix4::identity()));
    f
}

/// `𝒟u` rescaled to `𝒢`-norm `norm`.
pub fn random_exact(mesh: &TorusMesh, norm: f64, rng: &mut ChaCha8Rng) -> CellField {
    let f = differentiate(mesh, &random_potential(mesh, rng));
    let n = norm2_g(mesh, &f).sqrt();
    f.scale(norm / n)
}

pub fn random_potential(mesh: &TorusMesh, rng: &mut ChaCha8Rng) -> Potential {
    Potential {
        values: (0..mesh.n_vertices())
            .map(|_| Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect(),
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub h: f64,
    pub norm2: f64,
    pub phi: f64,
    #[serde(rename = "muI2")]
    pub mu_i2: f64,
    #[serde(rename = "muJ2")]
    pub mu_j2: f64,
    #[serde(rename = "muK2")]
    pub mu_k2: f64,
    pub tau: f64,
    /// `‖Π_α∇φ‖_𝒢`, kept for the Lojasiewicz estimate; not part of the CSV.
    #[serde(skip)]
    pub grad_norm: f64,
}

impl TraceRecord {
    pub fn mu_norm(&self) -> f64 {
        (self.mu_i2 + self.mu_j2 + self.mu_k2).sqrt()
    }
}

pub const TRACE_HEADER: [&str; 8] = ["t", "h", "norm2", "phi", "muI2", "muJ2", "muK2", "tau"];

pub fn write_trace<W: std::io::Write>(w: W, trace: &[TraceRecord]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in trace {
        wr.serialize(r)?;
    }
    if trace.is_empty() {
        wr.write_record(TRACE_HEADER)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub coords: DVector<f64>,
    pub field: CellField,
    pub t: f64,
    pub h: f64,
    pub steps: usize,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Converged,
    Inconclusive,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Generic,
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub status: Status,
    /// Set when `status` is `Aborted`.
    pub abort_reason: Option<String>,
    pub state: FlowState,
    pub final_mu_norm: f64,
    pub tau: f64,
    pub classification: Classification,
}

impl FlowResult {
    pub fn final_field(&self) -> &CellField {
        &self.state.field
    }
}

/// Scalar diagnostics of a field.
#[derive(Debug, Clone, Copy)]
struct Diag {
    norm2: f64,
    mu2: [f64; 3],
}

impl Diag {
    fn of(mesh: &TorusMesh, f: &CellField) -> Diag {
        Diag { norm2: norm2_g(mesh, f), mu2: mu(f).norms2(mesh) }
    }

    fn phi(&self) -> f64 {
        0.5 * self.mu2.iter().sum::<f64>()
    }
}

/// Coordinates of `Π_α∇φ(F)`.
pub fn projected_gradient_coords(basis: &ClosedBasis, f: &CellField) -> DVector<f64> {
    basis.project_coords(&grad_phi(f))
}

/// `−Π_α∇φ(F)` as a field.
pub fn rhs(basis: &ClosedBasis, f: &CellField) -> CellField {
    basis.materialize(&projected_gradient_coords(basis, f)).scale(-1.0)
}

fn rhs_coords(basis: &ClosedBasis, c: &DVector<f64>) -> DVector<f64> {
    -projected_gradient_coords(basis, &basis.materialize(c))
}

/// `τ = ⟨[F], [α]⟩ / ⟨[α], [α]⟩` from loop periods; 0 when `α = 0`.
pub fn class_multiplier(basis: &ClosedBasis, f: &CellField) -> f64 {
    if basis.is_degenerate() {
        return 0.0;
    }
    let mesh = basis.mesh();
    let pa = crate::forms::CohClass::of_constant(mesh, basis.alpha());
    periods(mesh, f).dot(&pa) / pa.dot(&pa)
}

fn advance(
    integrator: Integrator,
    c: &DVector<f64>,
    h: f64,
    k1: &DVector<f64>,
    rhs: &dyn Fn(&DVector<f64>) -> DVector<f64>,
) -> DVector<f64> {
    match integrator {
        Integrator::Euler => c + k1 * h,
        Integrator::Rk4 => {
            let k2 = rhs(&(c + k1 * (0.5 * h)));
            let k3 = rhs(&(c + &k2 * (0.5 * h)));
            let k4 = rhs(&(c + &k3 * h));
            c + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        }
    }
}

/// A single unconditional step of size `h` in basis coordinates.
pub fn step_coords(basis: &ClosedBasis, integrator: Integrator, c: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = rhs_coords(basis, c);
    advance(integrator, c, h, &k1, &|x| rhs_coords(basis, x))
}

struct Stepper<'a> {
    cfg: &'a FlowConfig,
    clean: usize,
}

enum StepOutcome {
    Accepted { c: DVector<f64>, h: f64 },
    Abort(String),
}

impl Stepper<'_> {
    /// Try steps from `c` until one passes the monotonicity checks.
    /// `monitor` returns `(norm2, phi)` for a candidate, `None` if non-finite.
    fn step(
        &mut self,
        c: &DVector<f64>,
        before: (f64, f64),
        h: &mut f64,
        time_left: f64,
        k1: &DVector<f64>,
        rhs: &dyn Fn(&DVector<f64>) -> DVector<f64>,
        monitor: &dyn Fn(&DVector<f64>) -> Option<(f64, f64)>,
        integrator: Integrator,
    ) -> StepOutcome {
        loop {
            let h_try = h.min(time_left);
            let next = advance(integrator, c, h_try, k1, rhs);
            let ok = next.iter().all(|x| x.is_finite());
            let verdict = if ok { monitor(&next) } else { None };
            if !self.cfg.adaptive {
                return match verdict {
                    Some(_) => StepOutcome::Accepted { c: next, h: h_try },
                    None => StepOutcome::Abort("non-finite state".into()),
                };
            }
            let good = verdict.is_some_and(|(n2, p)| monotone(before, (n2, p)));
            if good {
                self.clean += 1;
                if self.clean >= 10 {
                    self.clean = 0;
                    *h = (*h * 2.0).min(self.cfg.max_step);
                }
                return StepOutcome::Accepted { c: next, h: h_try };
            }
            self.clean = 0;
            *h *= 0.5;
            if *h < 1e-14 {
                return StepOutcome::Abort(format!("step size underflow (h = {:e})", *h));
            }
        }
    }
}

/// Step acceptance: neither `‖F‖²` nor `φ` may grow by more than `1e−12` relative.
/// `φ` near a zero is a sum of squares of cancelling terms, so its increase is also
/// allowed a roundoff floor of a few ulps of `‖𝝁‖·‖F‖²`.
fn monotone(before: (f64, f64), after: (f64, f64)) -> bool {
    let (n2, p) = before;
    let floor = 64.0 * f64::EPSILON * (2.0 * p).sqrt() * n2;
    after.0 <= n2 * (1.0 + 1e-12) && after.1 <= p * (1.0 + 1e-12) + floor
}

fn record(t: f64, h: f64, d: &Diag, tau: f64, grad_norm: f64) -> TraceRecord {
    TraceRecord {
        t,
        h,
        norm2: d.norm2,
        phi: d.phi(),
        mu_i2: d.mu2[0],
        mu_j2: d.mu2[1],
        mu_k2: d.mu2[2],
        tau,
        grad_norm,
    }
}

fn initial_coords(basis: &ClosedBasis, init: &InitialCondition) -> DVector<f64> {
    match init {
        InitialCondition::Identity => {
            basis.coords_of(&CellField::constant(basis.mesh().n_cells(), Matrix4::identity()))
        }
        InitialCondition::Field(f) => basis.coords_of(f),
        InitialCondition::Coords(c) => c.clone(),
    }
}

/// Integrate the flow until `‖𝝁‖ ≤ mu_tol`, the time or step budget runs out,
/// or the step size underflows.
pub fn run(basis: &ClosedBasis, init: &InitialCondition, cfg: &FlowConfig) -> FlowResult {
    let mesh = basis.mesh().clone();
    let mut c = initial_coords(basis, init);
    let mut field = basis.materialize(&c);
    let mut diag = Diag::of(&mesh, &field);
    let mut grad = projected_gradient_coords(basis, &field);
    let grad_norm = |g: &DVector<f64>| basis.inner_coords(g, g).max(0.0).sqrt();
    let mut state = FlowState {
        coords: c.clone(),
        field: field.clone(),
        t: 0.0,
        h: cfg.h0,
        steps: 0,
        trace: vec![record(0.0, cfg.h0, &diag, basis.tau_of(&c), grad_norm(&grad))],
    };
    let mut stepper = Stepper { cfg, clean: 0 };
    let mut status = Status::Inconclusive;
    let mut abort_reason = None;
    let rhs = |x: &DVector<f64>| rhs_coords(basis, x);
    let monitor = |x: &DVector<f64>| {
        let d = Diag::of(&mesh, &basis.materialize(x));
        (d.norm2.is_finite() && d.phi().is_finite()).then(|| (d.norm2, d.phi()))
    };
    loop {
        if diag.mu2.iter().sum::<f64>().sqrt() <= cfg.mu_tol {
            status = Status::Converged;
            break;
        }
        if state.steps >= cfg.max_steps || state.t >= cfg.max_time {
            break;
        }
        let k1 = -&grad;
        let mut h = state.h;
        match stepper.step(
            &c,
            (diag.norm2, diag.phi()),
            &mut h,
            cfg.max_time - state.t,
            &k1,
            &rhs,
            &monitor,
            cfg.integrator,
        ) {
            StepOutcome::Accepted { c: next, h: used } => {
                c = next;
                field = basis.materialize(&c);
                diag = Diag::of(&mesh, &field);
                grad = projected_gradient_coords(basis, &field);
                state.t += used;
                state.h = h;
                state.steps += 1;
                state.coords = c.clone();
                state.field = field.clone();
                let converged = diag.mu2.iter().sum::<f64>().sqrt() <= cfg.mu_tol;
                if state.steps % cfg.trace_stride == 0 || converged {
                    state.trace.push(record(state.t, used, &diag, basis.tau_of(&c), grad_norm(&grad)));
                }
            }
            StepOutcome::Abort(reason) => {
                status = Status::Aborted;
                abort_reason = Some(reason);
                break;
            }
        }
    }
    if status == Status::Inconclusive
        && state.trace.last().map(|r| r.t) != Some(state.t)
    {
        state.trace.push(record(state.t, state.h, &diag, basis.tau_of(&c), grad_norm(&grad)));
    }
    finish(basis, state, status, abort_reason, cfg)
}

fn finish(
    basis: &ClosedBasis,
    state: FlowState,
    status: Status,
    abort_reason: Option<String>,
    cfg: &FlowConfig,
) -> FlowResult {
    let mesh = basis.mesh();
    let final_mu_norm = mu(&state.field).norm2(mesh).sqrt();
    let tau = class_multiplier(basis, &state.field);
    let classification = classify(tau, cfg.tau_min);
    FlowResult { status, abort_reason, state, final_mu_norm, tau, classification }
}

pub fn classify(tau: f64, tau_min: f64) -> Classification {
    if tau.abs() <= tau_min {
        Classification::Degenerate
    } else {
        Classification::Generic
    }
}

/// Outcome of the renormalized `(G, τ)` system.
#[derive(Debug, Clone)]
pub struct RenormalizedResult {
    pub status: Status,
    /// True when `|τ|` dropped below `1e−10`: the flow is approaching the degenerate locus.
    pub degenerating: bool,
    pub abort_reason: Option<String>,
    pub coords: DVector<f64>,
    pub field: CellField,
    pub tau: f64,
    pub t: f64,
    pub steps: usize,
    /// Trace of `G`: `norm2`, `phi` and `muX2` refer to `G`, `tau` to `τ(t)`.
    pub trace: Vec<TraceRecord>,
    /// `max_t ‖[G_t] − α‖` over the recorded steps.
    pub max_class_drift: f64,
}

/// Integrate `Ġ = τ²(c(G)·G − Π_α∇φ(G))`, `τ̇ = −τ³c(G)`, where
/// `[Π_α∇φ(G)] = c(G)·α`. `F = τG` solves the unnormalized flow, and the class
/// of `G` stays equal to `α`.
pub fn run_renormalized(basis: &ClosedBasis, g0: &CellField, cfg: &FlowConfig) -> RenormalizedResult {
    let mesh = basis.mesh().clone();
    let ia = basis.alpha_index().expect("renormalized flow needs α ≠ 0");
    let n = basis.dim();
    let mut g = basis.coords_of(g0);
    // enforce [G] = α exactly in coordinates
    g[ia] = 1.0;
    let mut y = DVector::zeros(n + 1);
    y.rows_mut(0, n).copy_from(&g);
    y[n] = 1.0;
    let split = |y: &DVector<f64>| (y.rows(0, n).into_owned(), y[n]);
    let rhs = |y: &DVector<f64>| {
        let (g, tau) = split(y);
        let x = projected_gradient_coords(basis, &basis.materialize(&g));
        let c = x[ia];
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&((&g * c - x) * (tau * tau)));
        out[n] = -tau * tau * tau * c;
        out
    };
    // monitor the unnormalized quantities ‖τG‖² and φ(τG) = τ⁴φ(G)
    let monitor = |y: &DVector<f64>| {
        let (g, tau) = split(y);
        let d = Diag::of(&mesh, &basis.materialize(&g));
        let (n2, p) = (tau * tau * d.norm2, tau.powi(4) * d.phi());
        (n2.is_finite() && p.is_finite()).then_some((n2, p))
    };
    let alpha_class = crate::forms::CohClass::of_constant(&mesh, basis.alpha());
    let drift = |f: &CellField| (periods(&mesh, f).0 - alpha_class.0).amax();
    let mut field = basis.materialize(&g);
    let mut diag = Diag::of(&mesh, &field);
    let mut max_class_drift = drift(&field);
    let mut trace = vec![record(0.0, cfg.h0, &diag, 1.0, 0.0)];
    let mut stepper = Stepper { cfg, clean: 0 };
    let (mut t, mut h, mut steps) = (0.0, cfg.h0, 0usize);
    let mut status = Status::Inconclusive;
    let mut degenerating = false;
    let mut abort_reason = None;
    loop {
        let tau = y[n];
        if diag.mu2.iter().sum::<f64>().sqrt() <= cfg.mu_tol {
            status = Status::Converged;
            break;
        }
        if tau.abs() < 1e-10 {
            degenerating = true;
            status = Status::Aborted;
            abort_reason = Some(format!("τ underflow ({tau:e})"));
            break;
        }
        if steps >= cfg.max_steps || t >= cfg.max_time {
            break;
        }
        let k1 = rhs(&y);
        let before = (tau * tau * diag.norm2, tau.powi(4) * diag.phi());
        match stepper.step(&y, before, &mut h, cfg.max_time - t, &k1, &rhs, &monitor, cfg.integrator) {
            StepOutcome::Accepted { c: next, h: used } => {
                y = next;
                t += used;
                steps += 1;
                let (g, tau) = split(&y);
                field = basis.materialize(&g);
                diag = Diag::of(&mesh, &field);
                max_class_drift = max_class_drift.max(drift(&field));
                if steps % cfg.trace_stride == 0 {
                    trace.push(record(t, used, &diag, tau, 0.0));
                }
            }
            StepOutcome::Abort(reason) => {
                status = Status::Aborted;
                abort_reason = Some(reason);
                break;
            }
        }
    }
    let (coords, tau) = split(&y);
    if trace.last().map(|r| r.t) != Some(t) {
        trace.push(record(t, h, &diag, tau, 0.0));
    }
    RenormalizedResult {
        status,
        degenerating,
        abort_reason,
        coords,
        field,
        tau,
        t,
        steps,
        trace,
        max_class_drift,
    }
}

/// Least-squares slope `s` of `log ‖∇φ‖` against `log φ` over the last
/// `tail` records. A Lojasiewicz inequality `‖∇φ‖ ≥ c·φ^{1−θ}` shows up as
/// `s ≈ 1 − θ`; `θ = ½` is the nondegenerate (exponential) case.
pub fn lojasiewicz_slope(trace: &[TraceRecord], tail: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .rev()
        .take(tail)
        .filter(|r| r.phi > 0.0 && r.grad_norm > 0.0)
        .map(|r| (r.phi.ln(), r.grad_norm.ln()))
        .collect();
    slope(&pts)
}

/// Exponential rate `λ` in `φ ∼ e^{−λt}` fitted over the last `tail` records.
pub fn decay_rate(trace: &[TraceRecord], tail: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .rev()
        .take(tail)
        .filter(|r| r.phi > 0.0)
        .map(|r| (r.t, r.phi.ln()))
        .collect();
    slope(&pts).map(|s| -s)
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
