//! Matrix-free conjugate-gradient solver for the shifted five-point
//! Laplacian system (a*I - b*Lap_h) w = rhs with homogeneous Neumann
//! boundary via mirror ghost cells.
//!
//! With a = b = 1 this is the elliptic chemoattractant equation
//! (I - Lap) v = u of the parabolic-elliptic regime; with a = 1, b = dt
//! (or a = 1 + dt, b = dt) it is the implicit diffusion sub-step.

use crate::error::{KsError, Result};
use crate::mesh::ScalarField;

/// Parameters of one linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSpec {
    /// Mass shift a >= 0.
    pub a: f64,
    /// Diffusion weight b > 0.
    pub b: f64,
    /// Relative residual target in the discrete l2 norm.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl SolveSpec {
    pub fn new(a: f64, b: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        if !(a >= 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(KsError::Config(format!(
                "solve spec requires a >= 0 and b > 0, got a={a}, b={b}"
            )));
        }
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(KsError::Config(format!(
                "rel_tol must lie in (0, 1), got {rel_tol}"
            )));
        }
        if max_iter == 0 {
            return Err(KsError::Config("max_iter must be at least 1".into()));
        }
        Ok(SolveSpec { a, b, rel_tol, max_iter })
    }

    /// Spec with the same tolerances but different operator coefficients.
    pub fn with_coeffs(&self, a: f64, b: f64) -> Result<Self> {
        SolveSpec::new(a, b, self.rel_tol, self.max_iter)
    }
}

/// Apply a*w - b*Lap_h w with the mirror-ghost Neumann stencil.
pub fn apply_operator(w: &ScalarField, a: f64, b: f64) -> ScalarField {
    let g = w.grid;
    let v = &w.values;
    let mut out = vec![0.0; v.len()];
    let ihx2 = 1.0 / (g.hx * g.hx);
    let ihy2 = 1.0 / (g.hy * g.hy);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = v[g.idx(i, j)];
            let mut lap = 0.0;
            if i > 0 {
                lap += (v[g.idx(i - 1, j)] - c) * ihx2;
            }
            if i + 1 < g.nx {
                lap += (v[g.idx(i + 1, j)] - c) * ihx2;
            }
            if j > 0 {
                lap += (v[g.idx(i, j - 1)] - c) * ihy2;
            }
            if j + 1 < g.ny {
                lap += (v[g.idx(i, j + 1)] - c) * ihy2;
            }
            out[g.idx(i, j)] = a * c - b * lap;
        }
    }
    ScalarField { grid: g, values: out }
}

/// Solve (a*I - b*Lap_h) w = rhs by conjugate gradients, optionally warm
/// started from `guess`. Returns w with relative residual below
/// `spec.rel_tol` in the discrete l2 norm.
pub fn solve_shifted_poisson(
    rhs: &ScalarField,
    spec: &SolveSpec,
    guess: Option<&ScalarField>,
) -> Result<ScalarField> {
    rhs.check_finite("linear solve rhs")?;
    let g = rhs.grid;
    let rhs_norm = rhs.norms().l2;
    if spec.a == 0.0 {
        // pure Neumann Poisson is singular; only zero-mean rhs is admissible
        let mean = rhs.integrate() / g.area;
        if mean.abs() > spec.rel_tol * rhs_norm.max(f64::MIN_POSITIVE) {
            return Err(KsError::Config(format!(
                "singular Neumann system: rhs mean {mean} is not negligible"
            )));
        }
    }
    if rhs_norm == 0.0 && guess.is_none() {
        return Ok(ScalarField::zeros(g));
    }

    let mut x = match guess {
        Some(w) => w.clone(),
        None => ScalarField::zeros(g),
    };
    let ax = apply_operator(&x, spec.a, spec.b);
    let mut r = ScalarField {
        grid: g,
        values: rhs
            .values
            .iter()
            .zip(&ax.values)
            .map(|(b, a)| b - a)
            .collect(),
    };
    let target = spec.rel_tol * rhs_norm.max(f64::MIN_POSITIVE);
    let mut rr = r.dot(&r);
    if rr.sqrt() <= target {
        return Ok(x);
    }
    let mut p = r.clone();
    for _ in 0..spec.max_iter {
        let ap = apply_operator(&p, spec.a, spec.b);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(KsError::Numerical(format!(
                "conjugate gradient broke down: p^T A p = {pap}"
            )));
        }
        let alpha = rr / pap;
        for (xi, pi) in x.values.iter_mut().zip(&p.values) {
            *xi += alpha * pi;
        }
        for (ri, api) in r.values.iter_mut().zip(&ap.values) {
            *ri -= alpha * api;
        }
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= target {
            x.check_finite("linear solve result")?;
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.values.iter_mut().zip(&r.values) {
            *pi = ri + beta * *pi;
        }
    }
    Err(KsError::Numerical(format!(
        "conjugate gradient did not converge in {} iterations (residual {:.3e}, target {:.3e})",
        spec.max_iter,
        rr.sqrt(),
        target
    )))
}
