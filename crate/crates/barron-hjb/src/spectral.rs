//! Exact algebra on real functions represented as finite sums of Fourier
//! atoms `a * exp(i xi . x)`, stored with enforced conjugate symmetry so
//! every represented function is real-valued.
//!
//! Barron norms of any order are exact finite sums over atoms. Pruning
//! charges the removed norm mass to a per-order ledger so downstream
//! certificates remain valid upper bounds.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Frequencies closer than this per component are merged.
pub const FREQ_TOL: f64 = 1e-12;
/// Amplitudes below this after merging are dropped.
pub const AMP_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct FourierAtom {
    pub freq: Vec<f64>,
    pub amp: Complex64,
}

impl FourierAtom {
    pub fn freq_norm(&self) -> f64 {
        self.freq.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    fn is_zero_freq(&self) -> bool {
        self.freq.iter().all(|c| c.abs() <= FREQ_TOL)
    }

    /// Barron weight |a| (1 + |xi|)^s of this atom.
    pub fn weight(&self, s: f64) -> f64 {
        self.amp.norm() * (1.0 + self.freq_norm()).powf(s)
    }
}

/// Cumulative Barron-norm mass removed by pruning, keyed by order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger(BTreeMap<u64, f64>);

impl Ledger {
    pub fn get(&self, s: f64) -> f64 {
        self.0.get(&s.to_bits()).copied().unwrap_or(0.0)
    }

    pub fn charge(&mut self, s: f64, mass: f64) {
        if mass > 0.0 {
            *self.0.entry(s.to_bits()).or_insert(0.0) += mass;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.0.iter().map(|(k, v)| (f64::from_bits(*k), *v))
    }

    fn merge_add(&mut self, other: &Ledger) {
        for (s, v) in other.iter() {
            self.charge(s, v);
        }
    }

    fn scaled(&self, c: f64) -> Ledger {
        let mut out = Ledger::default();
        for (s, v) in self.iter() {
            out.charge(s, v * c.abs());
        }
        out
    }
}

impl Serialize for Ledger {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<String, f64> =
            self.iter().map(|(s, v)| (format!("{s}"), v)).collect();
        map.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Ledger {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(de)?;
        let mut out = Ledger::default();
        for (k, v) in map {
            let s: f64 = k.parse().map_err(|_| D::Error::custom("bad ledger key"))?;
            if v < 0.0 {
                return Err(D::Error::custom("negative ledger mass"));
            }
            out.charge(s, v);
        }
        Ok(out)
    }
}

/// A real function represented by a finite conjugate-symmetric atom list.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunction {
    dim: usize,
    atoms: Vec<FourierAtom>,
    ledger: Ledger,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).expect("finite frequency") {
            std::cmp::Ordering::Equal => continue,
            ord => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

fn freq_close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= FREQ_TOL)
}

impl SpectralFunction {
    pub fn zero(dim: usize) -> Self {
        SpectralFunction { dim, atoms: Vec::new(), ledger: Ledger::default() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut f = Self::zero(dim);
        if c != 0.0 {
            f.atoms.push(FourierAtom { freq: vec![0.0; dim], amp: Complex64::new(c, 0.0) });
        }
        f
    }

    /// `amplitude * cos(freq . x + phase)` as a conjugate pair.
    pub fn cosine(freq: Vec<f64>, amplitude: f64, phase: f64) -> Self {
        let dim = freq.len();
        let half = Complex64::from_polar(amplitude / 2.0, phase);
        let neg: Vec<f64> = freq.iter().map(|c| -c).collect();
        let atoms = vec![
            FourierAtom { freq, amp: half },
            FourierAtom { freq: neg, amp: half.conj() },
        ];
        let mut f = SpectralFunction { dim, atoms, ledger: Ledger::default() };
        f.canonicalize();
        f
    }

    /// Build from a raw atom list; merges duplicates and drops dust.
    pub fn from_atoms(dim: usize, atoms: Vec<FourierAtom>) -> Result<Self> {
        for a in &atoms {
            if a.freq.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: a.freq.len() });
            }
            if !a.freq.iter().all(|c| c.is_finite()) || !a.amp.re.is_finite() || !a.amp.im.is_finite() {
                return Err(Error::Malformed("non-finite atom".into()));
            }
        }
        let mut f = SpectralFunction { dim, atoms, ledger: Ledger::default() };
        f.canonicalize();
        f.check_conjugate_symmetry()?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[FourierAtom] {
        &self.atoms
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn discarded_mass(&self, s: f64) -> f64 {
        self.ledger.get(s)
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    fn canonicalize(&mut self) {
        self.atoms.sort_by(|a, b| lex_cmp(&a.freq, &b.freq));
        let mut merged: Vec<FourierAtom> = Vec::with_capacity(self.atoms.len());
        for atom in self.atoms.drain(..) {
            match merged.last_mut() {
                Some(last) if freq_close(&last.freq, &atom.freq) => last.amp += atom.amp,
                _ => merged.push(atom),
            }
        }
        merged.retain(|a| a.amp.norm() >= AMP_TOL);
        // A zero-frequency atom must carry a real amplitude; the imaginary
        // residue after merging a conjugate pair is floating-point noise.
        for a in &mut merged {
            if a.is_zero_freq() {
                a.freq.iter_mut().for_each(|c| *c = 0.0);
                a.amp.im = 0.0;
            }
        }
        self.atoms = merged;
    }

    pub fn check_conjugate_symmetry(&self) -> Result<()> {
        for atom in &self.atoms {
            if atom.is_zero_freq() {
                continue;
            }
            let neg: Vec<f64> = atom.freq.iter().map(|c| -c).collect();
            let partner = self.find_atom(&neg).ok_or_else(|| {
                Error::Malformed(format!("missing conjugate partner for {:?}", atom.freq))
            })?;
            let expect = atom.amp.conj();
            if (partner.amp - expect).norm() > 1e-9 * (1.0 + expect.norm()) {
                return Err(Error::Malformed("conjugate amplitudes do not match".into()));
            }
        }
        Ok(())
    }

    fn find_atom(&self, freq: &[f64]) -> Option<&FourierAtom> {
        let idx = self
            .atoms
            .partition_point(|a| lex_cmp(&a.freq, freq) == std::cmp::Ordering::Less);
        // Tolerance window: scan neighbors around the insertion point.
        let lo = idx.saturating_sub(2);
        let hi = (idx + 2).min(self.atoms.len());
        self.atoms[lo..hi].iter().find(|a| freq_close(&a.freq, freq))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut sum = 0.0;
        for a in &self.atoms {
            let phase: f64 = a.freq.iter().zip(x).map(|(f, xi)| f * xi).sum();
            sum += a.amp.re * phase.cos() - a.amp.im * phase.sin();
        }
        Ok(sum)
    }

    /// Spectral Barron norm of order `s`: sum of |a_j| (1 + |xi_j|)^s.
    /// Does not include the discarded-mass ledger.
    pub fn barron_norm(&self, s: f64) -> f64 {
        self.atoms.iter().map(|a| a.weight(s)).sum()
    }

    /// Certified bound on sup_x |f(x)|: the B^0 norm.
    pub fn sup_bound(&self) -> f64 {
        self.barron_norm(0.0)
    }

    pub fn add(&self, other: &SpectralFunction) -> Result<SpectralFunction> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let mut ledger = self.ledger.clone();
        ledger.merge_add(&other.ledger);
        let mut f = SpectralFunction { dim: self.dim, atoms, ledger };
        f.canonicalize();
        Ok(f)
    }

    pub fn scale(&self, c: f64) -> SpectralFunction {
        if c == 0.0 {
            return SpectralFunction::zero(self.dim);
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| FourierAtom { freq: a.freq.clone(), amp: a.amp * c })
            .collect();
        let mut f = SpectralFunction { dim: self.dim, atoms, ledger: self.ledger.scaled(c) };
        f.canonicalize();
        f
    }

    /// Exact convolution of atomic measures: all pairwise frequency sums.
    pub fn multiply(&self, other: &SpectralFunction) -> Result<SpectralFunction> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut atoms = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for a in &self.atoms {
            for b in &other.atoms {
                let freq: Vec<f64> = a.freq.iter().zip(&b.freq).map(|(x, y)| x + y).collect();
                atoms.push(FourierAtom { freq, amp: a.amp * b.amp });
            }
        }
        // Worst-case product rule for the ledgers, per recorded order.
        let mut ledger = Ledger::default();
        for (s, lf) in self.ledger.iter() {
            ledger.charge(s, lf * other.barron_norm(s) + lf * other.ledger.get(s));
        }
        for (s, lg) in other.ledger.iter() {
            ledger.charge(s, self.barron_norm(s) * lg);
        }
        let mut f = SpectralFunction { dim: self.dim, atoms, ledger };
        f.canonicalize();
        Ok(f)
    }

    /// d/dx_i: each amplitude multiplied by i * xi_i.
    pub fn partial_derivative(&self, axis: usize) -> Result<SpectralFunction> {
        if axis >= self.dim {
            return Err(Error::AxisOutOfRange { axis, dim: self.dim });
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| FourierAtom {
                freq: a.freq.clone(),
                amp: a.amp * Complex64::new(0.0, a.freq[axis]),
            })
            .collect();
        let mut f = SpectralFunction { dim: self.dim, atoms, ledger: self.ledger.clone() };
        f.canonicalize();
        Ok(f)
    }

    /// Laplacian: amplitude multiplied by -|xi|^2.
    pub fn laplacian(&self) -> SpectralFunction {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let n2: f64 = a.freq.iter().map(|c| c * c).sum();
                FourierAtom { freq: a.freq.clone(), amp: a.amp * (-n2) }
            })
            .collect();
        let mut f = SpectralFunction { dim: self.dim, atoms, ledger: self.ledger.clone() };
        f.canonicalize();
        f
    }

    /// (gamma I - Delta)^{-1}: divide each amplitude by gamma + |xi|^2.
    pub fn resolvent(&self, gamma: f64) -> Result<SpectralFunction> {
        if gamma <= 0.0 {
            return Err(Error::NonPositiveGamma(gamma));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let n2: f64 = a.freq.iter().map(|c| c * c).sum();
                FourierAtom { freq: a.freq.clone(), amp: a.amp / (gamma + n2) }
            })
            .collect();
        // ||(gamma I - Delta)^{-1} r||_{B^s} <= ||r||_{B^s} / gamma.
        let mut f = SpectralFunction {
            dim: self.dim,
            atoms,
            ledger: self.ledger.scaled(1.0 / gamma),
        };
        f.canonicalize();
        Ok(f)
    }

    /// Partition atoms into the zero-frequency atom (if any) and +-xi pairs.
    /// Returns (zero index, pairs of indices).
    pub fn pair_partition(&self) -> Result<(Option<usize>, Vec<(usize, usize)>)> {
        let mut zero = None;
        let mut pairs = Vec::new();
        let mut seen = vec![false; self.atoms.len()];
        for (i, atom) in self.atoms.iter().enumerate() {
            if seen[i] {
                continue;
            }
            if atom.is_zero_freq() {
                zero = Some(i);
                seen[i] = true;
                continue;
            }
            let neg: Vec<f64> = atom.freq.iter().map(|c| -c).collect();
            let j = self
                .atoms
                .iter()
                .enumerate()
                .position(|(j, a)| !seen[j] && j != i && freq_close(&a.freq, &neg))
                .ok_or_else(|| Error::Malformed("unpaired atom".into()))?;
            seen[i] = true;
            seen[j] = true;
            pairs.push((i, j));
        }
        Ok((zero, pairs))
    }

    /// Keep the `max_atoms` heaviest atoms at order `s_account`, removing
    /// +-xi pairs together; removed mass is charged to the ledger.
    pub fn prune(&self, max_atoms: usize, s_account: f64) -> SpectralFunction {
        if self.atoms.len() <= max_atoms {
            return self.clone();
        }
        let (zero, pairs) = self.pair_partition().expect("canonical function is paired");
        // Categories: (atom indices, total weight at s_account).
        let mut cats: Vec<(Vec<usize>, f64)> = Vec::new();
        if let Some(i) = zero {
            cats.push((vec![i], self.atoms[i].weight(s_account)));
        }
        for (i, j) in pairs {
            let w = self.atoms[i].weight(s_account) + self.atoms[j].weight(s_account);
            cats.push((vec![i, j], w));
        }
        cats.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| lex_cmp(&self.atoms[a.0[0]].freq, &self.atoms[b.0[0]].freq))
        });
        let mut keep = vec![false; self.atoms.len()];
        let mut kept = 0usize;
        let mut removed_mass = 0.0;
        for (members, w) in &cats {
            if kept + members.len() <= max_atoms {
                kept += members.len();
                for &i in members {
                    keep[i] = true;
                }
            } else {
                removed_mass += w;
            }
        }
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[*i])
            .map(|(_, a)| a.clone())
            .collect();
        let mut ledger = self.ledger.clone();
        ledger.charge(s_account, removed_mass);
        SpectralFunction { dim: self.dim, atoms, ledger }
    }

    /// Largest |xi| over atoms (0 for the zero function).
    pub fn max_freq_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.freq_norm()).fold(0.0, f64::max)
    }
}

// JSON encoding stores one representative per +-pair with a "pair" flag.

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    freq: Vec<f64>,
    re: f64,
    im: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pair: bool,
}

#[derive(Serialize, Deserialize)]
struct FunctionRepr {
    dim: usize,
    atoms: Vec<AtomRepr>,
    #[serde(default, skip_serializing_if = "Ledger::is_empty")]
    ledger: Ledger,
}

impl Serialize for SpectralFunction {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let (zero, pairs) = self
            .pair_partition()
            .map_err(|e| serde::ser::Error::custom(e.to_string()))?;
        let mut atoms = Vec::new();
        if let Some(i) = zero {
            let a = &self.atoms[i];
            atoms.push(AtomRepr { freq: a.freq.clone(), re: a.amp.re, im: 0.0, pair: false });
        }
        for (i, j) in pairs {
            // Deterministic representative: lexicographically larger frequency.
            let a = if lex_cmp(&self.atoms[i].freq, &self.atoms[j].freq)
                == std::cmp::Ordering::Greater
            {
                &self.atoms[i]
            } else {
                &self.atoms[j]
            };
            atoms.push(AtomRepr { freq: a.freq.clone(), re: a.amp.re, im: a.amp.im, pair: true });
        }
        FunctionRepr { dim: self.dim, atoms, ledger: self.ledger.clone() }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SpectralFunction {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = FunctionRepr::deserialize(de)?;
        let mut atoms = Vec::new();
        for a in repr.atoms {
            if a.freq.len() != repr.dim {
                return Err(D::Error::custom("atom frequency has wrong dimension"));
            }
            let amp = Complex64::new(a.re, a.im);
            if a.pair {
                let neg: Vec<f64> = a.freq.iter().map(|c| -c).collect();
                atoms.push(FourierAtom { freq: a.freq, amp });
                atoms.push(FourierAtom { freq: neg, amp: amp.conj() });
            } else {
                atoms.push(FourierAtom { freq: a.freq, amp });
            }
        }
        let mut f = SpectralFunction { dim: repr.dim, atoms, ledger: repr.ledger };
        f.canonicalize();
        f.check_conjugate_symmetry()
            .map_err(|e| D::Error::custom(e.to_string()))?;
        Ok(f)
    }
}
