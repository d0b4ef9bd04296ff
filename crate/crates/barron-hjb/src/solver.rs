//! Truncated Neumann-series solver for the linearized HJB equation
//! gamma V - Delta V - (f + g u) . grad V = ell + ||u||_R^2,
//! operating entirely on spectral functions. The series
//! V = sum_k T^k w with T = (gamma I - Delta)^{-1} mu . grad and
//! w = (gamma I - Delta)^{-1} (ell + ||u||_R^2) converges when the
//! contraction factor q = C_gamma ||mu||_{B^s} < 1, with a certified
//! geometric tail bound in B^{s+1}.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::ValidatedProblem;
use crate::spectral::SpectralFunction;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_terms: usize,
    pub max_atoms: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, max_terms: 200, max_atoms: 20_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearSolveResult {
    #[serde(rename = "V")]
    pub v: SpectralFunction,
    pub terms_used: usize,
    #[serde(rename = "q")]
    pub contraction_q: f64,
    #[serde(rename = "tail_bound")]
    pub tail_bound_b_s1: f64,
    pub prune_ledger: f64,
    /// B^{s+1} norm of each Neumann term, for decay diagnostics.
    #[serde(skip)]
    pub term_norms: Vec<f64>,
}

impl LinearSolveResult {
    /// Total certified B^{s+1} error: truncation tail plus pruned mass.
    pub fn certificate(&self) -> f64 {
        self.tail_bound_b_s1 + self.prune_ledger
    }
}

pub fn c_gamma(gamma: f64) -> f64 {
    1.0 / (2.0 * ((1.0 + gamma).sqrt() - 1.0))
}

/// Closed-loop drift mu_k = f_k + sum_j g_{kj} u_j.
pub fn drift(vp: &ValidatedProblem, u: &[SpectralFunction]) -> Result<Vec<SpectralFunction>> {
    if u.len() != vp.spec.m {
        return Err(Error::DimensionMismatch { expected: vp.spec.m, got: u.len() });
    }
    let mut mu = Vec::with_capacity(vp.spec.d);
    for k in 0..vp.spec.d {
        let mut comp = vp.spec.f[k].clone();
        for (j, uj) in u.iter().enumerate() {
            comp = comp.add(&vp.spec.g[k][j].multiply(uj)?)?;
        }
        mu.push(comp);
    }
    Ok(mu)
}

/// T v = (gamma I - Delta)^{-1} (mu . grad v).
pub fn apply_t(mu: &[SpectralFunction], v: &SpectralFunction, gamma: f64) -> Result<SpectralFunction> {
    if gamma <= 0.0 {
        return Err(Error::NonPositiveGamma(gamma));
    }
    let mut adv = SpectralFunction::zero(v.dim());
    for (k, mu_k) in mu.iter().enumerate() {
        adv = adv.add(&mu_k.multiply(&v.partial_derivative(k)?)?)?;
    }
    adv.resolvent(gamma)
}

pub fn solve_linearized(
    vp: &ValidatedProblem,
    u: &[SpectralFunction],
    opts: &SolveOptions,
) -> Result<LinearSolveResult> {
    let s = vp.spec.s;
    let gamma = vp.spec.gamma;
    let mu = drift(vp, u)?;
    let mu_norm: f64 = mu.iter().map(|c| c.barron_norm(s)).sum();
    let q = c_gamma(gamma) * mu_norm;
    if q >= 1.0 {
        return Err(Error::NotContractive { q });
    }

    let source = vp.spec.ell.add(&vp.control_cost(u)?)?;
    let w = source.resolvent(gamma)?;
    let w_norm = w.barron_norm(s + 1.0);

    let mut v = w.clone();
    let mut term = w;
    let mut term_norms = vec![w_norm];
    let mut prune_ledger = 0.0;
    let mut terms_used = 1;
    // After K+1 terms (powers 0..K) the tail is sum_{k>K} q^k ||w||.
    let mut tail = if q > 0.0 { q / (1.0 - q) * w_norm } else { 0.0 };
    while tail > opts.tol {
        if terms_used >= opts.max_terms {
            return Err(Error::BudgetExceeded { terms: terms_used, tail, tol: opts.tol });
        }
        term = apply_t(&mu, &term, gamma)?;
        let before = term.discarded_mass(s + 1.0);
        term = term.prune(opts.max_atoms, s + 1.0);
        prune_ledger += term.discarded_mass(s + 1.0) - before;
        term_norms.push(term.barron_norm(s + 1.0));
        v = v.add(&term)?;
        terms_used += 1;
        tail = q.powi(terms_used as i32) / (1.0 - q) * w_norm;
    }
    Ok(LinearSolveResult {
        v,
        terms_used,
        contraction_q: q,
        tail_bound_b_s1: tail,
        prune_ledger,
        term_norms,
    })
}

/// Max over `points` of |r(x)| where
/// r = -gamma V + (f + g u) . grad V + Delta V + ell + ||u||_R^2,
/// with the Laplacian taken atom-wise.
pub fn pde_residual(
    vp: &ValidatedProblem,
    u: &[SpectralFunction],
    v: &SpectralFunction,
    points: &[Vec<f64>],
) -> Result<f64> {
    let mu = drift(vp, u)?;
    let mut r = v.scale(-vp.spec.gamma);
    for (k, mu_k) in mu.iter().enumerate() {
        r = r.add(&mu_k.multiply(&v.partial_derivative(k)?)?)?;
    }
    r = r.add(&v.laplacian())?;
    r = r.add(&vp.spec.ell)?;
    r = r.add(&vp.control_cost(u)?)?;
    let mut worst = 0.0f64;
    for x in points {
        worst = worst.max(r.eval(x)?.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{validate, ProblemSpec};
    use crate::spectral::SpectralFunction;

    fn problem_1d(f: SpectralFunction, ell: SpectralFunction, gamma: f64) -> ValidatedProblem {
        validate(ProblemSpec {
            d: 1,
            m: 1,
            gamma,
            s: 2.0,
            r: vec![vec![1.0]],
            f: vec![f],
            g: vec![vec![SpectralFunction::constant(1, 1.0)]],
            ell,
        })
        .unwrap()
    }

    fn grid_1d(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                vec![-std::f64::consts::PI
                    + 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64]
            })
            .collect()
    }

    #[test]
    fn drift_examples() {
        let cosx = SpectralFunction::cosine(vec![1.0], 1.0, 0.0);
        let vp = problem_1d(cosx.clone(), SpectralFunction::zero(1), 5.0);
        // u = 0 -> mu = f.
        let mu = drift(&vp, &[SpectralFunction::zero(1)]).unwrap();
        assert_eq!(mu[0], cosx);
        // f = cos x, g = 1, u = cos x -> mu = 2 cos x.
        let mu2 = drift(&vp, &[cosx.clone()]).unwrap();
        assert!((mu2[0].eval(&[0.3]).unwrap() - 2.0 * 0.3f64.cos()).abs() < 1e-14);
        // f = 0, constant g, u given -> g u.
        let vp0 = problem_1d(SpectralFunction::zero(1), SpectralFunction::zero(1), 5.0);
        let mu3 = drift(&vp0, &[cosx.clone()]).unwrap();
        assert_eq!(mu3[0], cosx);
    }

    #[test]
    fn apply_t_examples() {
        let mu = vec![SpectralFunction::constant(1, 2.0)];
        // v constant -> zero.
        let z = apply_t(&mu, &SpectralFunction::constant(1, 3.0), 1.0).unwrap();
        assert!(z.is_zero());
        // mu = c, v = cos x, gamma = 1 -> -(c/2) sin x.
        let v = SpectralFunction::cosine(vec![1.0], 1.0, 0.0);
        let tv = apply_t(&mu, &v, 1.0).unwrap();
        for i in 0..10 {
            let x = -2.0 + 0.5 * i as f64;
            assert!((tv.eval(&[x]).unwrap() + x.sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn apply_t_norm_bound() {
        let mu = vec![SpectralFunction::cosine(vec![2.0], 0.7, 0.4)];
        let v = SpectralFunction::cosine(vec![1.0], 1.3, -0.2)
            .add(&SpectralFunction::cosine(vec![3.0], 0.5, 1.0))
            .unwrap();
        for gamma in [0.5, 2.0, 8.0] {
            let tv = apply_t(&mu, &v, gamma).unwrap();
            for s in [0.0, 1.0, 2.0] {
                let bound = c_gamma(gamma) * mu[0].barron_norm(s) * v.barron_norm(s + 1.0);
                assert!(tv.barron_norm(s + 1.0) <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn solve_pure_resolvent() {
        // f = 0, u = 0, ell = cos x, gamma = 1 -> V = cos(x)/2, one term.
        let vp = problem_1d(
            SpectralFunction::zero(1),
            SpectralFunction::cosine(vec![1.0], 1.0, 0.0),
            1.0,
        );
        let res = solve_linearized(&vp, &[SpectralFunction::zero(1)], &SolveOptions::default())
            .unwrap();
        assert_eq!(res.terms_used, 1);
        assert_eq!(res.contraction_q, 0.0);
        assert_eq!(res.tail_bound_b_s1, 0.0);
        for i in 0..20 {
            let x = -3.0 + 0.3 * i as f64;
            assert!((res.v.eval(&[x]).unwrap() - x.cos() / 2.0).abs() < 1e-14);
        }
        let worst = pde_residual(&vp, &[SpectralFunction::zero(1)], &res.v, &grid_1d(50)).unwrap();
        assert!(worst < 1e-12);
    }

    #[test]
    fn solve_zero_source() {
        let vp = problem_1d(
            SpectralFunction::cosine(vec![1.0], 0.3, 0.0),
            SpectralFunction::zero(1),
            4.0,
        );
        let res = solve_linearized(&vp, &[SpectralFunction::zero(1)], &SolveOptions::default())
            .unwrap();
        assert!(res.v.is_zero());
    }

    #[test]
    fn solve_with_drift_residual_certified() {
        // f = 0.1 cos x, u = 0, ell = cos x, gamma = 4.
        let vp = problem_1d(
            SpectralFunction::cosine(vec![1.0], 0.1, 0.0),
            SpectralFunction::cosine(vec![1.0], 1.0, 0.0),
            4.0,
        );
        let opts = SolveOptions { tol: 1e-10, ..Default::default() };
        let res = solve_linearized(&vp, &[SpectralFunction::zero(1)], &opts).unwrap();
        assert!(res.contraction_q < 1.0);
        let worst = pde_residual(&vp, &[SpectralFunction::zero(1)], &res.v, &grid_1d(200)).unwrap();
        assert!(worst <= 10.0 * opts.tol, "residual {worst} > 10 tol");
        // Geometric decay of term norms.
        for w in res.term_norms.windows(2) {
            assert!(w[1] <= res.contraction_q * w[0] + 1e-10);
        }
        // Norm bound from the iteration analysis.
        let s = vp.spec.s;
        let denom = 2.0 * ((1.0 + vp.spec.gamma).sqrt() - 1.0) - vp.norm_f;
        let bound = vp.norm_ell / denom + opts.tol;
        assert!(res.v.barron_norm(s + 1.0) <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn solve_rejects_noncontractive() {
        // Huge drift at small gamma.
        let vp = problem_1d(
            SpectralFunction::cosine(vec![1.0], 10.0, 0.0),
            SpectralFunction::cosine(vec![1.0], 1.0, 0.0),
            0.5,
        );
        let err =
            solve_linearized(&vp, &[SpectralFunction::zero(1)], &SolveOptions::default())
                .unwrap_err();
        assert!(matches!(err, Error::NotContractive { .. }));
    }

    #[test]
    fn residual_detects_perturbation() {
        let vp = problem_1d(
            SpectralFunction::zero(1),
            SpectralFunction::cosine(vec![1.0], 1.0, 0.0),
            1.0,
        );
        let res = solve_linearized(&vp, &[SpectralFunction::zero(1)], &SolveOptions::default())
            .unwrap();
        let grid = grid_1d(200);
        let clean = pde_residual(&vp, &[SpectralFunction::zero(1)], &res.v, &grid).unwrap();
        let bad = res
            .v
            .add(&SpectralFunction::cosine(vec![3.0], 0.1, 0.0))
            .unwrap();
        let perturbed = pde_residual(&vp, &[SpectralFunction::zero(1)], &bad, &grid).unwrap();
        // Perturbation adds 0.1 (gamma + 9) cos 3x to the residual.
        assert!(perturbed > clean);
        assert!(perturbed >= 0.1 * (1.0 + 9.0) - clean - 1e-10);
    }

    #[test]
    fn finite_difference_laplacian_cross_check() {
        let v = SpectralFunction::cosine(vec![1.0], 0.8, 0.2)
            .add(&SpectralFunction::cosine(vec![2.0], 0.3, -0.5))
            .unwrap();
        let lap = v.laplacian();
        let h = 1e-4;
        for i in 0..20 {
            let x = -3.0 + 0.3 * i as f64;
            let fd = (v.eval(&[x + h]).unwrap() - 2.0 * v.eval(&[x]).unwrap()
                + v.eval(&[x - h]).unwrap())
                / (h * h);
            assert!((lap.eval(&[x]).unwrap() - fd).abs() < 1e-5);
        }
    }

    #[test]
    fn uniqueness_probe_different_schedules() {
        let vp = problem_1d(
            SpectralFunction::cosine(vec![1.0], 0.4, 0.1),
            SpectralFunction::cosine(vec![1.0], 1.0, 0.0)
                .add(&SpectralFunction::constant(1, 0.5))
                .unwrap(),
            5.0,
        );
        let u = [SpectralFunction::zero(1)];
        let a = solve_linearized(&vp, &u, &SolveOptions { tol: 1e-9, max_atoms: 40, ..Default::default() }).unwrap();
        let b = solve_linearized(&vp, &u, &SolveOptions { tol: 1e-12, max_atoms: 20_000, ..Default::default() }).unwrap();
        let cert = a.certificate() + b.certificate();
        for i in 0..20 {
            let x = -3.0 + 0.3 * i as f64;
            let diff = (a.v.eval(&[x]).unwrap() - b.v.eval(&[x]).unwrap()).abs();
            assert!(diff <= cert + 1e-12, "diff {diff} > certificate {cert}");
        }
    }
}
