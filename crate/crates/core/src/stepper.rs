//! Positivity-aware IMEX time integration of the chemotaxis system for
//! tau in {0, 1}: conservative donor-cell upwind chemotactic flux, explicit
//! reaction, implicit diffusion, adaptive time step.

use crate::diagnostics::{DiagnosticsRecord, DiagnosticsSeries};
use crate::error::{KsError, Result};
use crate::kinetics::SourceKind;
use crate::linsolve::{solve_shifted_poisson, SolveSpec};
use crate::mesh::{Grid, ScalarField};

/// Model coefficients of the PDE system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Chemosensitivity chi > 0.
    pub chi: f64,
    /// 0: parabolic-elliptic, 1: fully parabolic.
    pub tau: u8,
    pub source: SourceKind,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi > 0.0) || !self.chi.is_finite() {
            return Err(KsError::Config(format!("chi must be positive, got {}", self.chi)));
        }
        if self.tau > 1 {
            return Err(KsError::Config(format!("tau must be 0 or 1, got {}", self.tau)));
        }
        self.source.validate()
    }
}

/// Solution pair at one time level.
#[derive(Debug, Clone)]
pub struct State {
    pub u: ScalarField,
    pub v: ScalarField,
    pub t: f64,
}

/// Time-step control for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Record a diagnostics row every this many steps (plus first and last).
    pub record_every: usize,
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(KsError::Config(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} {} {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(KsError::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(KsError::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(KsError::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why a simulation stopped. Statuses are data, not faults.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminationStatus {
    CompletedHorizon,
    DtCollapse { t: f64 },
    PositivityLoss { t: f64 },
    SolverFailure { t: f64, detail: String },
    LinfOverflow { t: f64 },
}

impl TerminationStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TerminationStatus::CompletedHorizon => "completed",
            TerminationStatus::DtCollapse { .. } => "dt_collapse",
            TerminationStatus::PositivityLoss { .. } => "positivity_loss",
            TerminationStatus::SolverFailure { .. } => "solver_failure",
            TerminationStatus::LinfOverflow { .. } => "linf_overflow",
        }
    }
}

/// Conservative upwind discretization of -chi * div(u grad v).
///
/// Face velocity q = chi * (dv/h) selects the donor cell; each face flux
/// enters its two neighbors with opposite signs, so the cell-area-weighted
/// sum telescopes to zero exactly and boundary fluxes vanish under the
/// mirror-ghost convention.
pub fn chemotactic_divergence(u: &ScalarField, v: &ScalarField, chi: f64) -> ScalarField {
    let g = u.grid;
    let uu = &u.values;
    let vv = &v.values;
    let mut out = vec![0.0; uu.len()];
    // x-faces
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            let l = g.idx(i, j);
            let r = g.idx(i + 1, j);
            let q = chi * (vv[r] - vv[l]) / g.hx;
            let flux = if q >= 0.0 { q * uu[l] } else { q * uu[r] };
            out[l] -= flux / g.hx;
            out[r] += flux / g.hx;
        }
    }
    // y-faces
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            let b = g.idx(i, j);
            let t = g.idx(i, j + 1);
            let q = chi * (vv[t] - vv[b]) / g.hy;
            let flux = if q >= 0.0 { q * uu[b] } else { q * uu[t] };
            out[b] -= flux / g.hy;
            out[t] += flux / g.hy;
        }
    }
    ScalarField { grid: g, values: out }
}

fn max_face_slope(v: &ScalarField) -> f64 {
    let g = v.grid;
    let vv = &v.values;
    let mut m: f64 = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            m = m.max(((vv[g.idx(i + 1, j)] - vv[g.idx(i, j)]) / g.hx).abs());
        }
    }
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            m = m.max(((vv[g.idx(i, j + 1)] - vv[g.idx(i, j)]) / g.hy).abs());
        }
    }
    m
}

/// Adaptive time step: minimum of the advective CFL bound and the explicit
/// reaction positivity bound, scaled by the safety factor and clamped to
/// [dt_min, dt_max]. Diffusion is implicit and imposes no constraint.
///
/// A required step below dt_min is a numerical failure, read downstream as
/// blow-up suspicion.
pub fn stable_dt(
    state: &State,
    params: &ModelParams,
    grid: &Grid,
    control: &StepControl,
) -> Result<f64> {
    let tiny = f64::MIN_POSITIVE;
    let adv = grid.h_min() / (params.chi * max_face_slope(&state.v) + tiny);
    let mut max_rate: f64 = 0.0;
    if params.source != SourceKind::None {
        for &s in &state.u.values {
            max_rate = max_rate.max(params.source.growth_rate(s).abs());
        }
    }
    let react = 0.5 / (max_rate + tiny);
    let dt = control.cfl_safety * adv.min(react);
    if dt < control.dt_min {
        return Err(KsError::Numerical(format!(
            "required time step {dt:.3e} fell below dt_min {:.3e} at t={}",
            control.dt_min, state.t
        )));
    }
    Ok(dt.min(control.dt_max))
}

/// Advance one IMEX step of size dt. On entry the state invariant holds:
/// for tau = 0 the signal satisfies (I - Lap) v = u for the current u.
///
/// tau = 0: advance u with explicit upwind advection along the current v
/// plus explicit reaction and an implicit diffusion solve
/// (I - dt*Lap) u_new = u + dt*(advection + reaction), then restore the
/// invariant by solving (I - Lap) v_new = u_new.
///
/// tau = 1: advance v implicitly by ((1+dt) I - dt*Lap) v_new = v + dt*u,
/// then advance u as above using v_new.
pub fn step(
    state: &State,
    params: &ModelParams,
    _grid: &Grid,
    dt: f64,
    solver: &SolveSpec,
) -> Result<State> {
    let g = state.u.grid;
    let v_adv = if params.tau == 0 {
        state.v.clone()
    } else {
        let rhs = ScalarField {
            grid: g,
            values: state
                .v
                .values
                .iter()
                .zip(&state.u.values)
                .map(|(v, u)| v + dt * u)
                .collect(),
        };
        let v_new =
            solve_shifted_poisson(&rhs, &solver.with_coeffs(1.0 + dt, dt)?, Some(&state.v))?;
        if v_new.norms().min < 0.0 {
            return Err(KsError::Numerical(format!(
                "signal field went negative at t={}",
                state.t
            )));
        }
        v_new
    };

    let adv = chemotactic_divergence(&state.u, &v_adv, params.chi);
    let mut rhs_u = Vec::with_capacity(state.u.values.len());
    for (k, &u) in state.u.values.iter().enumerate() {
        rhs_u.push(u + dt * (adv.values[k] + params.source.eval_unchecked(u)));
    }
    let rhs_u = ScalarField { grid: g, values: rhs_u };
    let u_new = solve_shifted_poisson(&rhs_u, &solver.with_coeffs(1.0, dt)?, Some(&state.u))?;
    u_new.check_finite("u after step")?;
    if u_new.norms().min < 0.0 {
        return Err(KsError::Numerical(format!(
            "positivity lost in u at t={} (min {})",
            state.t,
            u_new.norms().min
        )));
    }

    let v_new = if params.tau == 0 {
        let v = solve_shifted_poisson(&u_new, &solver.with_coeffs(1.0, 1.0)?, Some(&state.v))?;
        if v.norms().min < 0.0 {
            return Err(KsError::Numerical(format!(
                "signal field went negative at t={}",
                state.t
            )));
        }
        v
    } else {
        v_adv
    };
    Ok(State {
        u: u_new,
        v: v_new,
        t: state.t + dt,
    })
}

/// Everything one run needs besides I/O.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub grid: Grid,
    pub params: ModelParams,
    pub u0: ScalarField,
    /// Initial signal, required for tau = 1 and ignored for tau = 0
    /// (where v at t = 0 comes from the elliptic solve).
    pub v0: Option<ScalarField>,
    pub control: StepControl,
    pub solver: SolveSpec,
    /// u_max beyond this value terminates with LinfOverflow.
    pub linf_threshold: f64,
}

fn record(state: &State, params: &ModelParams, dt_used: f64) -> Result<DiagnosticsRecord> {
    let un = state.u.norms();
    let vn = state.v.norms();
    Ok(DiagnosticsRecord {
        t: state.t,
        dt_used,
        mass: state.u.integrate(),
        entropy: crate::diagnostics::entropy(&state.u)?,
        grad_v_energy: state.v.gradient_energy(),
        lyapunov_f: crate::diagnostics::lyapunov_f(&state.u, &state.v, params.chi, params.tau)?,
        u_max: un.max,
        u_min: un.min,
        u_l2: un.l2,
        v_max: vn.max,
    })
}

/// Run from t = 0 to t_end with adaptive dt, recording diagnostics and
/// invoking the observer at every recorded level. Numerical trouble is
/// reported through the status, not as an error.
pub fn simulate_with(
    spec: &RunSpec,
    mut observer: impl FnMut(&State, &DiagnosticsRecord),
) -> Result<(DiagnosticsSeries, TerminationStatus)> {
    spec.params.validate()?;
    spec.control.validate()?;
    spec.u0.check_finite("initial u")?;
    if spec.u0.norms().min < 0.0 {
        return Err(KsError::Config("initial u must be nonnegative".into()));
    }

    let v_init = match (spec.params.tau, &spec.v0) {
        (0, _) => solve_shifted_poisson(&spec.u0, &spec.solver.with_coeffs(1.0, 1.0)?, None)?,
        (1, Some(v0)) => {
            v0.check_finite("initial v")?;
            if v0.norms().min < 0.0 {
                return Err(KsError::Config("initial v must be nonnegative".into()));
            }
            v0.clone()
        }
        (1, None) => {
            return Err(KsError::Config("tau = 1 requires an initial signal field".into()))
        }
        _ => unreachable!(),
    };

    let mut state = State {
        u: spec.u0.clone(),
        v: v_init,
        t: 0.0,
    };
    let mut series = DiagnosticsSeries::default();
    let r0 = record(&state, &spec.params, 0.0)?;
    observer(&state, &r0);
    series.push(r0);

    let mut steps: usize = 0;
    let mut first = true;
    while state.t < spec.control.t_end {
        let dt = match stable_dt(&state, &spec.params, &spec.grid, &spec.control) {
            Ok(dt) => dt,
            Err(_) => {
                return Ok((series, TerminationStatus::DtCollapse { t: state.t }));
            }
        };
        let mut dt = if first { dt.min(spec.control.dt_init) } else { dt };
        first = false;
        dt = dt.min(spec.control.t_end - state.t);

        state = match step(&state, &spec.params, &spec.grid, dt, &spec.solver) {
            Ok(s) => s,
            Err(KsError::Numerical(detail)) => {
                let status = if detail.contains("positivity") {
                    TerminationStatus::PositivityLoss { t: state.t }
                } else {
                    TerminationStatus::SolverFailure { t: state.t, detail }
                };
                return Ok((series, status));
            }
            Err(e) => return Err(e),
        };
        steps += 1;

        let at_end = state.t >= spec.control.t_end;
        let overflow = state.u.norms().max > spec.linf_threshold;
        if steps % spec.control.record_every == 0 || at_end || overflow {
            let r = record(&state, &spec.params, dt)?;
            observer(&state, &r);
            series.push(r);
        }
        if overflow {
            return Ok((series, TerminationStatus::LinfOverflow { t: state.t }));
        }
    }
    Ok((series, TerminationStatus::CompletedHorizon))
}

/// [`simulate_with`] without an observer.
pub fn simulate(spec: &RunSpec) -> Result<(DiagnosticsSeries, TerminationStatus)> {
    simulate_with(spec, |_, _| {})
}
