//! Monte-Carlo extraction of cosine-activated two-layer networks from
//! spectral functions, sampling frequencies with probability proportional
//! to their Barron weight |a| (1 + |xi|)^k, and empirical H^k(K) error
//! estimation by tensor midpoint quadrature.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::spectral::SpectralFunction;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Neuron {
    pub a: f64,
    pub w: Vec<f64>,
    pub b: f64,
}

/// f_n(x) = (1/n) sum_l a_l cos(w_l . x + b_l).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CosineNetwork {
    pub n: usize,
    pub k: usize,
    pub source_norm: f64,
    pub neurons: Vec<Neuron>,
}

/// One category per +-xi pair (a conjugate pair yields one real cosine):
/// weight is the combined Barron mass of both members at order k.
struct Category {
    freq: Vec<f64>,
    phase: f64,
    weight: f64,
}

fn categories(f: &SpectralFunction, k: usize) -> Result<Vec<Category>> {
    let (zero, pairs) = f.pair_partition()?;
    let atoms = f.atoms();
    let mut cats = Vec::new();
    if let Some(i) = zero {
        let amp = atoms[i].amp;
        cats.push(Category {
            freq: atoms[i].freq.clone(),
            phase: if amp.re >= 0.0 { 0.0 } else { std::f64::consts::PI },
            weight: amp.norm(),
        });
    }
    for (i, j) in pairs {
        // Representative: the member whose amplitude argument is the phase
        // theta with a * e^{i(xi.x + theta)} + c.c. = 2|a| cos(xi.x + theta).
        let a = &atoms[i];
        let w = a.weight(k as f64) + atoms[j].weight(k as f64);
        cats.push(Category { freq: a.freq.clone(), phase: a.amp.arg(), weight: w });
    }
    Ok(cats)
}

/// Draw `n` neurons i.i.d. from the Barron density of order `k`.
pub fn sample_network(
    f: &SpectralFunction,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<CosineNetwork> {
    sample_network_stream(f, k, n, seed, 0)
}

/// Same, on an explicit RNG stream (for parallel trials).
pub fn sample_network_stream(
    f: &SpectralFunction,
    k: usize,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<CosineNetwork> {
    if f.is_zero() {
        return Err(Error::ZeroFunction);
    }
    let cats = categories(f, k)?;
    let total: f64 = cats.iter().map(|c| c.weight).sum();
    let source_norm = f.barron_norm(k as f64);
    debug_assert!((total - source_norm).abs() <= 1e-12 * source_norm);
    let mut cdf = Vec::with_capacity(cats.len());
    let mut acc = 0.0;
    for c in &cats {
        acc += c.weight;
        cdf.push(acc);
    }
    let mut rng = stream_rng(seed, stream);
    let neurons = (0..n)
        .map(|_| {
            let t: f64 = rng.gen::<f64>() * total;
            let idx = cdf.partition_point(|&c| c < t).min(cats.len() - 1);
            let cat = &cats[idx];
            let a = source_norm * (1.0 + norm(&cat.freq)).powi(-(k as i32));
            Neuron { a, w: cat.freq.clone(), b: cat.phase }
        })
        .collect();
    Ok(CosineNetwork { n, k, source_norm, neurons })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

impl CosineNetwork {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let inv_n = 1.0 / self.n as f64;
        self.neurons
            .iter()
            .map(|nr| {
                let phase: f64 = nr.w.iter().zip(x).map(|(w, xi)| w * xi).sum();
                nr.a * (phase + nr.b).cos()
            })
            .sum::<f64>()
            * inv_n
    }

    /// d^alpha f_n with a multi-index alpha: each derivative multiplies by
    /// the frequency component and shifts the cosine phase by pi/2.
    pub fn eval_derivative(&self, x: &[f64], alpha: &[usize]) -> f64 {
        let order: usize = alpha.iter().sum();
        let shift = order as f64 * std::f64::consts::FRAC_PI_2;
        let inv_n = 1.0 / self.n as f64;
        self.neurons
            .iter()
            .map(|nr| {
                let mut coef = nr.a;
                for (ai, wi) in alpha.iter().zip(&nr.w) {
                    for _ in 0..*ai {
                        coef *= *wi;
                    }
                }
                let phase: f64 = nr.w.iter().zip(x).map(|(w, xi)| w * xi).sum();
                coef * (phase + nr.b + shift).cos()
            })
            .sum::<f64>()
            * inv_n
    }
}

/// Axis-aligned box [lo_i, hi_i]^d.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn symmetric(d: usize, half_width: f64) -> Self {
        BoxDomain { lo: vec![-half_width; d], hi: vec![half_width; d] }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

fn multi_indices(d: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; d]];
    for _ in 0..max_order {
        let mut next = Vec::new();
        for alpha in &out {
            for i in 0..d {
                let mut beta = alpha.clone();
                beta[i] += 1;
                if !next.contains(&beta) {
                    next.push(beta);
                }
            }
        }
        out.extend(next);
    }
    out.sort();
    out.dedup();
    out
}

/// ||f_n - f||_{H^k(K)} by tensor midpoint quadrature, with per-axis
/// resolution doubling until the estimate settles to 0.1% or 2^20 points.
pub fn network_h_k_error(
    net: &CosineNetwork,
    f: &SpectralFunction,
    domain: &BoxDomain,
    k: usize,
) -> Result<f64> {
    if k > 2 {
        return Err(Error::UnsupportedOrder(k));
    }
    let d = f.dim();
    let alphas = multi_indices(d, k);
    // Exact derivatives of the atomic side, one per multi-index.
    let mut derivs = Vec::with_capacity(alphas.len());
    for alpha in &alphas {
        let mut g = f.clone();
        for (axis, &count) in alpha.iter().enumerate() {
            for _ in 0..count {
                g = g.partial_derivative(axis)?;
            }
        }
        derivs.push(g);
    }

    let mut per_axis = 16usize;
    let mut prev: Option<f64> = None;
    loop {
        let total = per_axis.pow(d as u32);
        let mut sum = 0.0;
        let mut idx = vec![0usize; d];
        let cell: f64 = domain
            .lo
            .iter()
            .zip(&domain.hi)
            .map(|(l, h)| (h - l) / per_axis as f64)
            .product();
        'outer: loop {
            let x: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(i, &j)| {
                    domain.lo[i]
                        + (j as f64 + 0.5) * (domain.hi[i] - domain.lo[i]) / per_axis as f64
                })
                .collect();
            for (alpha, df) in alphas.iter().zip(&derivs) {
                let diff = net.eval_derivative(&x, alpha) - df.eval(&x)?;
                sum += diff * diff;
            }
            let mut a = 0;
            loop {
                idx[a] += 1;
                if idx[a] < per_axis {
                    break;
                }
                idx[a] = 0;
                a += 1;
                if a == d {
                    break 'outer;
                }
            }
        }
        let estimate = (sum * cell).sqrt();
        if let Some(p) = prev {
            if (estimate - p).abs() <= 1e-3 * p.max(1e-300) || total * 2usize.pow(d as u32) > 1 << 20 {
                return Ok(estimate);
            }
        }
        prev = Some(estimate);
        per_axis *= 2;
    }
}

/// Monte-Carlo rate study: for each n, `trials` independent networks and
/// their H^k errors, plus the per-n mean-square bound |K| ||f||_{B^k}^2 / n.
pub fn rate_study(
    f: &SpectralFunction,
    k: usize,
    domain: &BoxDomain,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<(usize, usize, f64, f64)>> {
    let norm_k = f.barron_norm(k as f64);
    let vol = domain.volume();
    let mut rows = Vec::new();
    for (ni, &n) in ns.iter().enumerate() {
        let bound = (vol * norm_k * norm_k / n as f64).sqrt();
        let errs: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let stream = (ni * trials + t) as u64;
                let net = sample_network_stream(f, k, n, seed, stream)?;
                network_h_k_error(&net, f, domain, k)
            })
            .collect::<Result<_>>()?;
        for (t, err) in errs.into_iter().enumerate() {
            rows.push((n, t, err, bound));
        }
    }
    Ok(rows)
}

/// Least-squares slope of log(rms error) against log(n).
pub fn log_log_slope(rows: &[(usize, usize, f64, f64)]) -> f64 {
    use std::collections::BTreeMap;
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (n, _, err, _) in rows {
        by_n.entry(*n).or_default().push(*err);
    }
    let pts: Vec<(f64, f64)> = by_n
        .into_iter()
        .map(|(n, errs)| {
            let ms = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
            ((n as f64).ln(), ms.sqrt().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cosine_reproduced_exactly() {
        let f = SpectralFunction::cosine(vec![2.0, -1.0], 1.7, 0.6);
        for seed in [0u64, 9] {
            let net = sample_network(&f, 2, 5, seed).unwrap();
            for i in 0..20 {
                let x = [i as f64 * 0.3 - 3.0, 1.0 - i as f64 * 0.2];
                assert!((net.eval(&x) - f.eval(&x).unwrap()).abs() < 1e-12);
            }
            // Amplitude law.
            for nr in &net.neurons {
                let lhs = nr.a.abs() * (1.0 + norm(&nr.w)).powi(net.k as i32);
                assert!((lhs - net.source_norm).abs() < 1e-12 * net.source_norm);
            }
        }
    }

    #[test]
    fn constant_reproduced() {
        let f = SpectralFunction::constant(1, 2.5);
        let net = sample_network(&f, 0, 3, 1).unwrap();
        assert!((net.eval(&[0.7]) - 2.5).abs() < 1e-14);
        let neg = SpectralFunction::constant(1, -1.5);
        let net2 = sample_network(&neg, 0, 3, 1).unwrap();
        assert!((net2.eval(&[0.7]) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn zero_function_rejected() {
        assert!(matches!(
            sample_network(&SpectralFunction::zero(1), 0, 4, 0),
            Err(Error::ZeroFunction)
        ));
    }

    #[test]
    fn sampling_frequencies_match_weights() {
        // Weights 3/4 and 1/4 at k = 0.
        let f = SpectralFunction::cosine(vec![1.0], 1.5, 0.0)
            .add(&SpectralFunction::cosine(vec![2.0], 0.5, 0.0))
            .unwrap();
        let n = 10_000;
        let net = sample_network(&f, 0, n, 42).unwrap();
        let heavy = net.neurons.iter().filter(|nr| (norm(&nr.w) - 1.0).abs() < 1e-9).count();
        let p = heavy as f64 / n as f64;
        let sigma = (0.75 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() <= 3.0 * sigma, "p = {p}");
    }

    #[test]
    fn h_k_error_zero_for_exact_network() {
        let f = SpectralFunction::cosine(vec![1.0], 1.0, 0.3);
        let net = sample_network(&f, 2, 4, 3).unwrap();
        let dom = BoxDomain::symmetric(1, std::f64::consts::PI);
        for k in 0..=2 {
            let err = network_h_k_error(&net, &f, &dom, k).unwrap();
            assert!(err < 1e-12, "k = {k}: {err}");
        }
        assert!(network_h_k_error(&net, &f, &dom, 3).is_err());
    }

    #[test]
    fn h_k_error_matches_closed_form() {
        // net = 0 network vs f = cos x on [-pi, pi]:
        // H^0 error^2 = int cos^2 = pi.
        let f = SpectralFunction::cosine(vec![1.0], 1.0, 0.0);
        let net = CosineNetwork { n: 1, k: 0, source_norm: 0.0, neurons: vec![Neuron { a: 0.0, w: vec![0.0], b: 0.0 }] };
        let dom = BoxDomain::symmetric(1, std::f64::consts::PI);
        let err = network_h_k_error(&net, &f, &dom, 0).unwrap();
        assert!((err - std::f64::consts::PI.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn unbiased_at_probe_points() {
        let f = SpectralFunction::cosine(vec![1.0], 1.0, 0.2)
            .add(&SpectralFunction::cosine(vec![3.0], 0.5, -0.7))
            .unwrap()
            .add(&SpectralFunction::constant(1, 0.3))
            .unwrap();
        let trials = 10_000;
        let probes: Vec<f64> = (0..10).map(|i| -4.0 + 0.9 * i as f64).collect();
        let mut sums = vec![0.0f64; probes.len()];
        let mut sq = vec![0.0f64; probes.len()];
        for t in 0..trials {
            let net = sample_network_stream(&f, 1, 1, 99, t as u64).unwrap();
            for (j, &x) in probes.iter().enumerate() {
                let v = net.eval(&[x]);
                sums[j] += v;
                sq[j] += v * v;
            }
        }
        for (j, &x) in probes.iter().enumerate() {
            let mean = sums[j] / trials as f64;
            let var = (sq[j] / trials as f64 - mean * mean).max(0.0);
            let se = (var / trials as f64).sqrt();
            let truth = f.eval(&[x]).unwrap();
            assert!(
                (mean - truth).abs() <= 3.5 * se + 1e-9,
                "x = {x}: mean {mean} vs {truth} (se {se})"
            );
        }
    }

    #[test]
    fn multi_index_count() {
        // d = 2, k = 2: alpha in {00,10,01,20,11,02} -> 6.
        assert_eq!(multi_indices(2, 2).len(), 6);
        assert_eq!(multi_indices(1, 2).len(), 3);
    }
}
