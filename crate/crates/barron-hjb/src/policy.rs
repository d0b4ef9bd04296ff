//! Policy iteration: alternate the linearized solve and the feedback
//! control update, logging the uniform norm bounds, pointwise decrease,
//! and HJB residual at every iteration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{FixedPointReport, ValidatedProblem};
use crate::solver::{solve_linearized, SolveOptions};
use crate::spectral::SpectralFunction;

#[derive(Debug, Clone, Serialize)]
pub struct IterationRow {
    pub i: usize,
    pub u_norm_s: f64,
    #[serde(rename = "V_norm_s1")]
    pub v_norm_s1: f64,
    pub hjb_residual: f64,
    pub value_decrease_ok: bool,
    pub worst_violation: f64,
    pub solve_cert: f64,
    /// Accumulated certificate up to and including this iteration.
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    ResidualTol,
    IterCap,
    NotContractive,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyIterationReport {
    pub iterations: Vec<IterationRow>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub fixed_point: FixedPointReport,
    pub final_u: Vec<SpectralFunction>,
    #[serde(rename = "final_V")]
    pub final_v: SpectralFunction,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub max_iter: usize,
    pub res_tol: f64,
    pub grid: Vec<Vec<f64>>,
    pub solve: SolveOptions,
}

impl RunOptions {
    pub fn new(d: usize) -> Self {
        RunOptions {
            max_iter: 50,
            res_tol: 1e-6,
            grid: default_grid(d, std::f64::consts::PI),
            solve: SolveOptions::default(),
        }
    }
}

/// Uniform grid over [-window, window]^d with 2^ceil(10/d) points per axis,
/// plus 100 quasi-random probes in [-5, 5]^d (Kronecker sequence).
pub fn default_grid(d: usize, window: f64) -> Vec<Vec<f64>> {
    let per_axis = 1usize << 10usize.div_ceil(d);
    let mut points = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = idx
            .iter()
            .map(|&i| -window + 2.0 * window * i as f64 / (per_axis - 1) as f64)
            .collect();
        points.push(x);
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                points.extend(kronecker_points(d, 100));
                return points;
            }
        }
    }
}

fn kronecker_points(d: usize, n: usize) -> Vec<Vec<f64>> {
    // Generalized golden-ratio lattice; deterministic and well spread.
    let mut phi = 1.0f64;
    for _ in 0..32 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=d).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
    (1..=n)
        .map(|i| {
            alphas
                .iter()
                .map(|a| -5.0 + 10.0 * ((i as f64 * a + 0.5).fract()))
                .collect()
        })
        .collect()
}

/// Residual of the equivalent (minimized) HJB form:
/// r = -gamma V + grad V . f + Delta V + ell
///     - 1/4 (grad V)^T g R^{-1} g^T grad V.
pub fn hjb_residual(
    vp: &ValidatedProblem,
    v: &SpectralFunction,
    points: &[Vec<f64>],
) -> Result<f64> {
    let d = vp.spec.d;
    let m = vp.spec.m;
    let grad: Vec<SpectralFunction> =
        (0..d).map(|k| v.partial_derivative(k)).collect::<Result<_>>()?;
    let mut r = v.scale(-vp.spec.gamma);
    for k in 0..d {
        r = r.add(&vp.spec.f[k].multiply(&grad[k])?)?;
    }
    r = r.add(&v.laplacian())?;
    r = r.add(&vp.spec.ell)?;
    // p_j = (g^T grad V)_j; nonlinear term -1/4 p^T R^{-1} p.
    let mut p = Vec::with_capacity(m);
    for j in 0..m {
        let mut pj = SpectralFunction::zero(d);
        for k in 0..d {
            pj = pj.add(&vp.spec.g[k][j].multiply(&grad[k])?)?;
        }
        p.push(pj);
    }
    for j in 0..m {
        for jp in 0..m {
            let c = vp.r_inv[j][jp];
            if c != 0.0 {
                r = r.add(&p[j].multiply(&p[jp])?.scale(-0.25 * c))?;
            }
        }
    }
    let mut worst = 0.0f64;
    for x in points {
        worst = worst.max(r.eval(x)?.abs());
    }
    Ok(worst)
}

pub struct MonotonicityCheck {
    pub ok: bool,
    pub worst_violation: f64,
}

/// Pointwise decrease check: V_next <= V_prev + slack at every point.
pub fn monotonicity_check(
    v_prev: &SpectralFunction,
    v_next: &SpectralFunction,
    points: &[Vec<f64>],
    slack: f64,
) -> Result<MonotonicityCheck> {
    let mut worst = f64::NEG_INFINITY;
    for x in points {
        worst = worst.max(v_next.eval(x)? - v_prev.eval(x)?);
    }
    Ok(MonotonicityCheck { ok: worst <= slack, worst_violation: worst })
}

pub fn run(
    vp: &ValidatedProblem,
    u0: Vec<SpectralFunction>,
    opts: &RunOptions,
) -> Result<PolicyIterationReport> {
    let fixed_point = vp.fixed_point()?;
    let u0_norm = vp.norm_of_control(&u0);
    // ||u0|| = 0 is always admissible (h(0) >= 0 starts the induction even
    // in the degenerate x0 = 0 case, where the solution is identically 0).
    if u0_norm > 0.0 && u0_norm >= fixed_point.x0 {
        return Err(Error::InitialControlTooLarge { norm: u0_norm, x0: fixed_point.x0 });
    }

    let mut u = u0;
    let mut v_prev: Option<SpectralFunction> = None;
    let mut slack = 0.0;
    let mut iterations = Vec::new();
    let mut stop_reason = StopReason::IterCap;
    let mut converged = false;

    for i in 0..opts.max_iter {
        let solve = match solve_linearized(vp, &u, &opts.solve) {
            Ok(s) => s,
            Err(e @ Error::NotContractive { .. }) => {
                if iterations.is_empty() {
                    return Err(e);
                }
                stop_reason = StopReason::NotContractive;
                break;
            }
            Err(e) => return Err(e),
        };
        let cert = solve.certificate();
        slack += cert;
        let residual = hjb_residual(vp, &solve.v, &opts.grid)?;
        // Differenced quantities get the doubled certificate.
        let mono = match &v_prev {
            Some(prev) => monotonicity_check(prev, &solve.v, &opts.grid, 2.0 * slack)?,
            None => MonotonicityCheck { ok: true, worst_violation: 0.0 },
        };
        iterations.push(IterationRow {
            i,
            u_norm_s: vp.norm_of_control(&u),
            v_norm_s1: solve.v.barron_norm(vp.spec.s + 1.0),
            hjb_residual: residual,
            value_decrease_ok: mono.ok,
            worst_violation: mono.worst_violation,
            solve_cert: cert,
            slack,
        });
        let next_u = vp.control_update(&solve.v)?;
        let done = residual <= opts.res_tol;
        v_prev = Some(solve.v);
        u = next_u;
        if done {
            converged = true;
            stop_reason = StopReason::ResidualTol;
            break;
        }
    }

    Ok(PolicyIterationReport {
        iterations,
        converged,
        stop_reason,
        fixed_point,
        final_u: u,
        final_v: v_prev.unwrap_or_else(|| SpectralFunction::zero(vp.spec.d)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{validate, ProblemSpec};

    pub fn benchmark_1d() -> ValidatedProblem {
        // f = 0, g = 1, R = 1, ell = 0.05 (1 + cos x), gamma = 5.
        let ell = SpectralFunction::constant(1, 0.05)
            .add(&SpectralFunction::cosine(vec![1.0], 0.05, 0.0))
            .unwrap();
        validate(ProblemSpec {
            d: 1,
            m: 1,
            gamma: 5.0,
            s: 2.0,
            r: vec![vec![1.0]],
            f: vec![SpectralFunction::zero(1)],
            g: vec![vec![SpectralFunction::constant(1, 1.0)]],
            ell,
        })
        .unwrap()
    }

    #[test]
    fn degenerate_zero_cost() {
        let vp = validate(ProblemSpec {
            d: 1,
            m: 1,
            gamma: 2.0,
            s: 2.0,
            r: vec![vec![1.0]],
            f: vec![SpectralFunction::zero(1)],
            g: vec![vec![SpectralFunction::constant(1, 1.0)]],
            ell: SpectralFunction::zero(1),
        })
        .unwrap();
        let report = run(&vp, vec![SpectralFunction::zero(1)], &RunOptions::new(1)).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations.len(), 1);
        assert_eq!(report.iterations[0].hjb_residual, 0.0);
        assert!(report.final_v.is_zero());
        assert!(report.final_u[0].is_zero());
    }

    #[test]
    fn benchmark_converges_with_bounds() {
        let vp = benchmark_1d();
        let mut opts = RunOptions::new(1);
        opts.max_iter = 20;
        let report = run(&vp, vec![SpectralFunction::zero(1)], &opts).unwrap();
        assert!(report.converged, "stop: {:?}", report.stop_reason);
        let fp = &report.fixed_point;
        let final_row = report.iterations.last().unwrap();
        assert!(final_row.hjb_residual <= 1e-6);
        for row in &report.iterations {
            assert!(row.u_norm_s <= fp.x0 + row.slack + 1e-13, "iter {}", row.i);
            assert!(
                row.v_norm_s1 <= fp.a0 * fp.x0 + row.slack + 1e-13,
                "iter {}: {} > {}",
                row.i,
                row.v_norm_s1,
                fp.a0 * fp.x0
            );
            assert!(row.value_decrease_ok, "iter {}", row.i);
        }
        // Recurrence ||u^{(i+1)}|| <= h(||u^{(i)}||) + slack.
        for w in report.iterations.windows(2) {
            assert!(w[1].u_norm_s <= vp.h(w[0].u_norm_s) + w[1].slack + 1e-13);
        }
    }

    #[test]
    fn rejects_oversized_initial_control() {
        let vp = benchmark_1d();
        let fp = vp.fixed_point().unwrap();
        let u0 = vec![SpectralFunction::constant(1, fp.x0 + 0.1)];
        let err = run(&vp, u0, &RunOptions::new(1)).unwrap_err();
        assert!(matches!(err, Error::InitialControlTooLarge { .. }));
    }

    #[test]
    fn residual_of_zero_v() {
        let vp = benchmark_1d();
        let grid = default_grid(1, std::f64::consts::PI);
        // V = 0 -> residual = max |ell|.
        let r = hjb_residual(&vp, &SpectralFunction::zero(1), &grid).unwrap();
        assert!((r - 0.1).abs() < 1e-4);
    }

    #[test]
    fn monotonicity_trivial_cases() {
        let v = SpectralFunction::cosine(vec![1.0], 1.0, 0.0);
        let grid = default_grid(1, std::f64::consts::PI);
        let same = monotonicity_check(&v, &v, &grid, 0.0).unwrap();
        assert!(same.ok);
        assert_eq!(same.worst_violation, 0.0);
        let lower = v.add(&SpectralFunction::constant(1, -0.1)).unwrap();
        let down = monotonicity_check(&v, &lower, &grid, 0.0).unwrap();
        assert!(down.ok);
        assert!((down.worst_violation + 0.1).abs() < 1e-12);
        let up = monotonicity_check(&lower, &v, &grid, 0.0).unwrap();
        assert!(!up.ok);
    }

    #[test]
    fn final_pair_passes_on_larger_grid() {
        let vp = benchmark_1d();
        let mut opts = RunOptions::new(1);
        opts.max_iter = 20;
        let report = run(&vp, vec![SpectralFunction::zero(1)], &opts).unwrap();
        let big_grid = default_grid(1, 1.5 * std::f64::consts::PI);
        let slack = report.iterations.last().unwrap().slack;
        let r = hjb_residual(&vp, &report.final_v, &big_grid).unwrap();
        assert!(r <= opts.res_tol + slack + 1e-12);
    }

    #[test]
    fn grid_shape() {
        assert_eq!(default_grid(1, 1.0).len(), 1024 + 100);
        let g2 = default_grid(2, 1.0);
        assert_eq!(g2.len(), 32 * 32 + 100);
        assert!(g2.iter().all(|x| x.len() == 2));
    }
}
