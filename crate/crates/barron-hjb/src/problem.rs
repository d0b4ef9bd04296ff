//! HJB problem instance: coefficients, validation, and the explicit
//! constants controlling the policy iteration (C_{R,1}, C_{R,2}, the
//! discount threshold, and the fixed point of h).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralFunction;

/// The HJB instance: drift f, control matrix g, running cost ell,
/// quadratic control cost R, discount gamma, Barron order s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub d: usize,
    pub m: usize,
    pub gamma: f64,
    pub s: f64,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub f: Vec<SpectralFunction>,
    pub g: Vec<Vec<SpectralFunction>>,
    pub ell: SpectralFunction,
}

#[derive(Debug, Clone)]
pub struct ValidatedProblem {
    pub spec: ProblemSpec,
    pub r_inv: Vec<Vec<f64>>,
    pub c_r1: f64,
    pub c_r2: f64,
    /// ||f||_{B^s}, summed over components.
    pub norm_f: f64,
    /// ||g||_{B^s}, summed over entries.
    pub norm_g: f64,
    pub norm_ell: f64,
    /// s in [1, 2): only the linearized solver is certified.
    pub linear_solver_only: bool,
    /// Grid spot-check found ell < 0 somewhere (warned, not rejected).
    pub ell_negative_warning: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d_coef: f64,
    pub threshold: f64,
    pub gamma_ok: bool,
    pub x0: f64,
    pub a0: f64,
    #[serde(rename = "V_bound")]
    pub v_bound: f64,
}

fn validation_err(code: &'static str, detail: String) -> Error {
    Error::Validation { code, detail }
}

/// Leading-principal-minor test for symmetric positive definiteness.
fn is_spd(r: &[Vec<f64>]) -> bool {
    let m = r.len();
    for i in 0..m {
        if r[i].len() != m {
            return false;
        }
        for j in 0..m {
            if !r[i][j].is_finite() || (r[i][j] - r[j][i]).abs() > 1e-12 * (1.0 + r[i][j].abs()) {
                return false;
            }
        }
    }
    for k in 1..=m {
        if leading_minor(r, k) <= 0.0 {
            return false;
        }
    }
    true
}

fn leading_minor(r: &[Vec<f64>], k: usize) -> f64 {
    let mut a: Vec<Vec<f64>> = (0..k).map(|i| r[i][..k].to_vec()).collect();
    let mut det = 1.0;
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for i in col + 1..k {
            let factor = a[i][col] / a[col][col];
            for j in col..k {
                a[i][j] -= factor * a[col][j];
            }
        }
    }
    det
}

/// Gauss-Jordan inverse with partial pivoting; m is small.
pub fn invert(r: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = r.len();
    let mut a: Vec<Vec<f64>> = r
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut ext = row.clone();
            ext.extend((0..m).map(|j| if i == j { 1.0 } else { 0.0 }));
            ext
        })
        .collect();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(validation_err("singular_R", "R is numerically singular".into()));
        }
        a.swap(pivot, col);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for i in 0..m {
            if i != col {
                let factor = a[i][col];
                for j in 0..2 * m {
                    a[i][j] -= factor * a[col][j];
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[m..].to_vec()).collect())
}

/// C_{R,1} = max_{i,j} R_{ij}.
pub fn c_r1(r: &[Vec<f64>]) -> f64 {
    r.iter()
        .flat_map(|row| row.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// C_{R,2} = (1/2) sum_i max_j |(R^{-1})_{ij}|.
pub fn c_r2(r_inv: &[Vec<f64>]) -> f64 {
    0.5 * r_inv
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).fold(0.0, f64::max))
        .sum::<f64>()
}

pub fn validate(spec: ProblemSpec) -> Result<ValidatedProblem> {
    if spec.gamma <= 0.0 {
        return Err(Error::NonPositiveGamma(spec.gamma));
    }
    if spec.s < 1.0 {
        return Err(validation_err("order_too_small", format!("s = {} < 1", spec.s)));
    }
    if spec.r.len() != spec.m {
        return Err(validation_err("R_shape", format!("R must be {0}x{0}", spec.m)));
    }
    if !is_spd(&spec.r) {
        return Err(validation_err(
            "R_not_spd",
            "R failed the leading-principal-minor positivity test".into(),
        ));
    }
    if spec.f.len() != spec.d {
        return Err(validation_err("f_shape", format!("f must have {} components", spec.d)));
    }
    if spec.g.len() != spec.d || spec.g.iter().any(|row| row.len() != spec.m) {
        return Err(validation_err("g_shape", format!("g must be {}x{}", spec.d, spec.m)));
    }
    for comp in spec.f.iter().chain(spec.g.iter().flatten()).chain([&spec.ell]) {
        if comp.dim() != spec.d {
            return Err(Error::DimensionMismatch { expected: spec.d, got: comp.dim() });
        }
    }
    let s = spec.s;
    let norm_f: f64 = spec.f.iter().map(|c| c.barron_norm(s)).sum();
    let norm_g: f64 = spec.g.iter().flatten().map(|c| c.barron_norm(s)).sum();
    if norm_g == 0.0 {
        return Err(validation_err("zero_g", "||g||_{B^s} must be positive".into()));
    }
    let norm_ell = spec.ell.barron_norm(s);

    // ell is required nonnegative only for the control interpretation;
    // spot-check a coarse grid and warn on violations.
    let mut ell_min = f64::INFINITY;
    for i in 0..64 {
        let t = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / 63.0;
        let x = vec![t; spec.d];
        ell_min = ell_min.min(spec.ell.eval(&x)?);
    }
    let ell_negative_warning = (ell_min < -1e-12).then_some(ell_min);

    let r_inv = invert(&spec.r)?;
    let c1 = c_r1(&spec.r);
    let c2 = c_r2(&r_inv);
    let linear_solver_only = s < 2.0;
    Ok(ValidatedProblem {
        spec,
        r_inv,
        c_r1: c1,
        c_r2: c2,
        norm_f,
        norm_g,
        norm_ell,
        linear_solver_only,
        ell_negative_warning,
    })
}

impl ValidatedProblem {
    /// RHS of the discount condition:
    /// T = ||f|| + 2 ||g|| ||ell||^{1/2} (C_{R,1} C_{R,2}^2 + C_{R,2})^{1/2}.
    pub fn condition_rhs(&self) -> f64 {
        self.norm_f
            + 2.0
                * self.norm_g
                * self.norm_ell.sqrt()
                * (self.c_r1 * self.c_r2 * self.c_r2 + self.c_r2).sqrt()
    }

    /// Minimal discount gamma* satisfying 2(sqrt(1+gamma) - 1) >= T.
    pub fn discount_threshold(&self) -> f64 {
        let t = self.condition_rhs();
        (1.0 + t / 2.0).powi(2) - 1.0
    }

    pub fn gamma_ok(&self) -> bool {
        2.0 * ((1.0 + self.spec.gamma).sqrt() - 1.0) >= self.condition_rhs() - 1e-14
    }

    /// Coefficients of h(x) = (a + b x^2) / (c - d x).
    pub fn h_coefficients(&self) -> (f64, f64, f64, f64) {
        let a = self.c_r2 * self.norm_g * self.norm_ell;
        let b = self.c_r1 * self.c_r2 * self.norm_g;
        let c = 2.0 * ((1.0 + self.spec.gamma).sqrt() - 1.0) - self.norm_f;
        let d = self.norm_g;
        (a, b, c, d)
    }

    pub fn h(&self, x: f64) -> f64 {
        let (a, b, c, d) = self.h_coefficients();
        (a + b * x * x) / (c - d * x)
    }

    /// Fixed point x0 of h: the smaller root of (b+d) x^2 - c x + a = 0.
    pub fn fixed_point(&self) -> Result<FixedPointReport> {
        let (a, b, c, d) = self.h_coefficients();
        let threshold = self.discount_threshold();
        let gamma_ok = self.gamma_ok();
        if !gamma_ok {
            return Err(Error::GammaTooSmall { gamma: self.spec.gamma, threshold });
        }
        let disc = c * c - 4.0 * a * (b + d);
        if disc < -1e-12 * c * c {
            // Only reachable through floating-point boundary noise.
            return Err(Error::GammaTooSmall { gamma: self.spec.gamma, threshold });
        }
        // A double root evaluates to |disc| ~ eps * c^2 in floating point;
        // taking its square root would shift x0 by ~sqrt(eps). Snap to the
        // exact double root in that regime.
        let sq = if disc <= 1e-12 * c * c { 0.0 } else { disc.sqrt() };
        let x0 = (c - sq) / (2.0 * (b + d));
        let a0 = 1.0 / (self.c_r2 * self.norm_g);
        Ok(FixedPointReport {
            a,
            b,
            c,
            d_coef: d,
            threshold,
            gamma_ok,
            x0,
            a0,
            v_bound: a0 * x0,
        })
    }

    /// ||u||_R^2 = sum_{ij} u_i R_{ij} u_j as a spectral function.
    pub fn control_cost(&self, u: &[SpectralFunction]) -> Result<SpectralFunction> {
        if u.len() != self.spec.m {
            return Err(Error::DimensionMismatch { expected: self.spec.m, got: u.len() });
        }
        let mut out = SpectralFunction::zero(self.spec.d);
        for (i, ui) in u.iter().enumerate() {
            for (j, uj) in u.iter().enumerate() {
                let rij = self.spec.r[i][j];
                if rij != 0.0 {
                    out = out.add(&ui.multiply(uj)?.scale(rij))?;
                }
            }
        }
        Ok(out)
    }

    /// Policy update u = -1/2 R^{-1} g^T grad V, componentwise
    /// u_i = -1/2 sum_j (R^{-1})_{ij} sum_k g_{kj} dV/dx_k.
    pub fn control_update(&self, v: &SpectralFunction) -> Result<Vec<SpectralFunction>> {
        let grad: Vec<SpectralFunction> = (0..self.spec.d)
            .map(|k| v.partial_derivative(k))
            .collect::<Result<_>>()?;
        let mut u = Vec::with_capacity(self.spec.m);
        for i in 0..self.spec.m {
            let mut ui = SpectralFunction::zero(self.spec.d);
            for j in 0..self.spec.m {
                let rij = self.r_inv[i][j];
                if rij == 0.0 {
                    continue;
                }
                for k in 0..self.spec.d {
                    ui = ui.add(&self.spec.g[k][j].multiply(&grad[k])?.scale(rij))?;
                }
            }
            u.push(ui.scale(-0.5));
        }
        Ok(u)
    }

    pub fn norm_of_control(&self, u: &[SpectralFunction]) -> f64 {
        u.iter().map(|c| c.barron_norm(self.spec.s)).sum()
    }
}
