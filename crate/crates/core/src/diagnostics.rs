//! Trajectory functionals (mass, entropy, gradient energy of the signal,
//! the Lyapunov functional), the closed-form mass envelope, and the
//! bounded-vs-blow-up run classifier.

use crate::error::{KsError, Result};
use crate::mesh::ScalarField;
use crate::stepper::TerminationStatus;

/// One sampled time level.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt_used: f64,
    pub mass: f64,
    pub entropy: f64,
    pub grad_v_energy: f64,
    pub lyapunov_f: f64,
    pub u_max: f64,
    pub u_min: f64,
    pub u_l2: f64,
    pub v_max: f64,
}

/// Chronological sequence of records for one run.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsSeries {
    pub records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsSeries {
    pub fn push(&mut self, r: DiagnosticsRecord) {
        self.records.push(r);
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sup_mass(&self) -> f64 {
        self.records.iter().map(|r| r.mass).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_f(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.lyapunov_f)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_umax(&self) -> f64 {
        self.records.iter().map(|r| r.u_max).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Discrete entropy integral of u ln u, with the convention 0 * ln 0 = 0.
pub fn entropy(u: &ScalarField) -> Result<f64> {
    let mut acc = 0.0;
    for &v in &u.values {
        if v < 0.0 {
            return Err(KsError::Precondition(format!(
                "entropy requires nonnegative entries, got {v}"
            )));
        }
        if v > 0.0 {
            acc += v * v.ln();
        }
    }
    Ok(u.grid.cell_area() * acc)
}

/// F = integral of u ln u + tau * (chi/2) * integral of |grad v|^2.
pub fn lyapunov_f(u: &ScalarField, v: &ScalarField, chi: f64, tau: u8) -> Result<f64> {
    Ok(entropy(u)? + f64::from(tau) * 0.5 * chi * v.gradient_energy())
}

/// Closed-form solution of the comparison ODE z' = alpha z ln(K*area / z):
/// z(t) = K*area * exp(ln(z0/(K*area)) * e^(-alpha t)).
pub fn mass_envelope(z0: f64, alpha: f64, k: f64, area: f64, t: f64) -> Result<f64> {
    let cap = k * area;
    if !(z0 > 0.0) || !(alpha > 0.0) || !(cap > 0.0) {
        return Err(KsError::Precondition(format!(
            "mass_envelope requires positive z0, alpha, K*area; got {z0}, {alpha}, {cap}"
        )));
    }
    Ok(cap * ((z0 / cap).ln() * (-alpha * t).exp()).exp())
}

/// Finite-horizon run classification.
#[derive(Debug, Clone, PartialEq)]
pub enum RunVerdict {
    Bounded { sup_linf: f64, sup_f: f64 },
    BlowupSuspect { reason: BlowupReason, t_event: f64 },
    Inconclusive { note: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowupReason {
    DtCollapse,
    LinfOverflow,
}

impl RunVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            RunVerdict::Bounded { .. } => "bounded",
            RunVerdict::BlowupSuspect { .. } => "blowup_suspect",
            RunVerdict::Inconclusive { .. } => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// Bounded requires terminal u_max within this factor of the initial scale.
    pub bounded_factor: f64,
    /// Relative growth of u_max over the last quarter of the series that is
    /// still considered settled.
    pub growth_tol: f64,
    /// Reference scale (the carrying capacity or an equivalent); combined
    /// with u_max at t = 0.
    pub scale: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            bounded_factor: 10.0,
            growth_tol: 0.05,
            scale: 1.0,
        }
    }
}

/// Classify a completed run.
pub fn classify(
    series: &DiagnosticsSeries,
    status: &TerminationStatus,
    cfg: &ClassifierConfig,
) -> Result<RunVerdict> {
    if series.is_empty() {
        return Err(KsError::Precondition("classify requires a non-empty series".into()));
    }
    match status {
        TerminationStatus::DtCollapse { t } => {
            return Ok(RunVerdict::BlowupSuspect {
                reason: BlowupReason::DtCollapse,
                t_event: *t,
            })
        }
        TerminationStatus::LinfOverflow { t } => {
            return Ok(RunVerdict::BlowupSuspect {
                reason: BlowupReason::LinfOverflow,
                t_event: *t,
            })
        }
        TerminationStatus::PositivityLoss { t } => {
            return Ok(RunVerdict::Inconclusive {
                note: format!("positivity loss at t={t}"),
            })
        }
        TerminationStatus::SolverFailure { t, detail } => {
            return Ok(RunVerdict::Inconclusive {
                note: format!("solver failure at t={t}: {detail}"),
            })
        }
        TerminationStatus::CompletedHorizon => {}
    }

    let recs = &series.records;
    let n = recs.len();
    let ref_scale = recs[0].u_max.max(cfg.scale);
    let last_half_max = recs[n / 2..]
        .iter()
        .map(|r| r.u_max)
        .fold(f64::NEG_INFINITY, f64::max);
    if last_half_max > cfg.bounded_factor * ref_scale {
        return Ok(RunVerdict::Inconclusive {
            note: format!(
                "completed horizon but terminal u_max {last_half_max} exceeds {} x initial scale",
                cfg.bounded_factor
            ),
        });
    }
    // least-squares slope of ln(u_max) over the last quarter
    let tail = &recs[n - (n / 4).max(2).min(n)..];
    if tail.len() >= 2 {
        let slope = log_slope(tail);
        let window = tail.last().unwrap().t - tail[0].t;
        if window > 0.0 && slope * window > (1.0 + cfg.growth_tol).ln() {
            return Ok(RunVerdict::Inconclusive {
                note: format!("u_max still growing at horizon end (log-slope {slope:.3e})"),
            });
        }
    }
    Ok(RunVerdict::Bounded {
        sup_linf: series.sup_umax(),
        sup_f: series.sup_f(),
    })
}

fn log_slope(recs: &[DiagnosticsRecord]) -> f64 {
    let n = recs.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for r in recs {
        let y = r.u_max.max(f64::MIN_POSITIVE).ln();
        st += r.t;
        sy += y;
        stt += r.t * r.t;
        sty += r.t * y;
    }
    let denom = n * stt - st * st;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (n * sty - st * sy) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use std::f64::consts::E;

    #[test]
    fn entropy_simple_cases() {
        let g = Grid::new(1.0, 1.0, 4, 4).unwrap();
        assert_eq!(entropy(&ScalarField::constant(g, 1.0)).unwrap(), 0.0);
        let v = entropy(&ScalarField::constant(g, E)).unwrap();
        assert!((v - E).abs() < 1e-13);
        let mut w = ScalarField::constant(g, 1.0);
        w.values[0] = 0.0;
        assert_eq!(entropy(&w).unwrap(), 0.0);
        w.values[0] = -0.5;
        assert!(entropy(&w).is_err());
    }

    #[test]
    fn lyapunov_cases() {
        let g = Grid::new(1.0, 1.0, 8, 8).unwrap();
        let u = ScalarField::constant(g, 1.0);
        let v = ScalarField::from_fn(g, |x, _| x * x);
        // tau = 0 ignores v entirely
        let f0 = lyapunov_f(&u, &v, 3.0, 0).unwrap();
        assert_eq!(f0, 0.0);
        let vc = ScalarField::constant(g, 7.0);
        assert_eq!(lyapunov_f(&u, &vc, 1.0, 1).unwrap(), 0.0);
        // entropy 0, chi/2 * grad energy
        let f1 = lyapunov_f(&u, &v, 1.0, 1).unwrap();
        assert!((f1 - 0.5 * v.gradient_energy()).abs() < 1e-14);
    }

    #[test]
    fn envelope_endpoints() {
        assert!((mass_envelope(0.7, 1.3, 2.0, 1.0, 0.0).unwrap() - 0.7).abs() < 1e-14);
        let alpha = 0.8;
        let z = mass_envelope(0.3, alpha, 2.0, 1.5, 50.0 / alpha).unwrap();
        assert!((z - 3.0).abs() <= 1e-10 * 3.0);
        assert!(mass_envelope(-1.0, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn envelope_closed_form_value() {
        // z0 = e, K*area = 1, alpha = 1, t = ln 2 -> exp(0.5)
        let z = mass_envelope(E, 1.0, 1.0, 1.0, std::f64::consts::LN_2).unwrap();
        assert!((z - 0.5f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn envelope_monotone_toward_cap() {
        let cap = 2.0 * 1.5;
        let mut prev = mass_envelope(0.1, 1.0, 2.0, 1.5, 0.0).unwrap();
        for k in 1..200 {
            let z = mass_envelope(0.1, 1.0, 2.0, 1.5, 0.05 * k as f64).unwrap();
            assert!(z >= prev && z <= cap * (1.0 + 1e-12));
            prev = z;
        }
        let mut prev = mass_envelope(10.0, 1.0, 2.0, 1.5, 0.0).unwrap();
        for k in 1..200 {
            let z = mass_envelope(10.0, 1.0, 2.0, 1.5, 0.05 * k as f64).unwrap();
            assert!(z <= prev && z >= cap * (1.0 - 1e-12));
            prev = z;
        }
    }

    fn flat_series(n: usize, umax: f64) -> DiagnosticsSeries {
        let mut s = DiagnosticsSeries::default();
        for k in 0..n {
            s.push(DiagnosticsRecord {
                t: k as f64,
                dt_used: 1.0,
                mass: 1.0,
                entropy: 0.0,
                grad_v_energy: 0.0,
                lyapunov_f: 0.0,
                u_max: umax,
                u_min: umax,
                u_l2: umax,
                v_max: umax,
            });
        }
        s
    }

    #[test]
    fn classify_constant_series_is_bounded() {
        let s = flat_series(20, 1.0);
        let v = classify(&s, &TerminationStatus::CompletedHorizon, &ClassifierConfig::default())
            .unwrap();
        assert!(matches!(v, RunVerdict::Bounded { .. }));
    }

    #[test]
    fn classify_dt_collapse() {
        let s = flat_series(5, 1.0);
        let v = classify(
            &s,
            &TerminationStatus::DtCollapse { t: 0.37 },
            &ClassifierConfig::default(),
        )
        .unwrap();
        assert_eq!(
            v,
            RunVerdict::BlowupSuspect {
                reason: BlowupReason::DtCollapse,
                t_event: 0.37
            }
        );
    }

    #[test]
    fn classify_doubling_series_is_inconclusive() {
        let mut s = DiagnosticsSeries::default();
        for k in 0..24 {
            let mut r = flat_series(1, 2.0f64.powi(k)).records.pop().unwrap();
            r.t = k as f64;
            s.push(r);
        }
        let v = classify(&s, &TerminationStatus::CompletedHorizon, &ClassifierConfig::default())
            .unwrap();
        assert!(matches!(v, RunVerdict::Inconclusive { .. }), "{v:?}");
    }

    #[test]
    fn classify_empty_series_is_error() {
        let s = DiagnosticsSeries::default();
        assert!(classify(&s, &TerminationStatus::CompletedHorizon, &ClassifierConfig::default())
            .is_err());
    }
}
