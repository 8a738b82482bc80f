//! Feature maps for linear-in-parameters value functions and dynamics
//! models: Gaussian RBFs on a lattice, raw-state features, and one-hot
//! tabular encodings for lattice worlds.

use crate::error::{Error, Result};
use crate::mdp::StateVector;

#[derive(Debug, Clone, PartialEq)]
pub struct RbfBasis {
    pub centers: Vec<StateVector>,
    /// Diagonal of the bandwidth matrix Sigma (covariance units).
    pub variances: Vec<f64>,
    pub bias: bool,
}

impl RbfBasis {
    pub fn new(centers: Vec<StateVector>, variances: Vec<f64>, bias: bool) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Precondition("RBF basis needs at least one center".into()));
        }
        let dim = centers[0].dim();
        if centers.iter().any(|c| c.dim() != dim) || variances.len() != dim {
            return Err(Error::Precondition(
                "RBF centers and bandwidth must share one dimension".into(),
            ));
        }
        if variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Precondition(
                "RBF bandwidth matrix must be positive-definite".into(),
            ));
        }
        Ok(RbfBasis {
            centers,
            variances,
            bias,
        })
    }

    /// Centers on a uniform lattice over the box [lo, hi], with per-dimension
    /// counts chosen as the most balanced factorisation of `count`.
    pub fn lattice(lo: &[f64], hi: &[f64], count: usize, variances: Vec<f64>, bias: bool) -> Result<Self> {
        let dims = lo.len();
        let counts = lattice_counts(count, dims);
        let mut centers = Vec::with_capacity(count);
        let mut idx = vec![0usize; dims];
        'outer: loop {
            let c: StateVector = (0..dims)
                .map(|d| {
                    let n = counts[d];
                    if n == 1 {
                        0.5 * (lo[d] + hi[d])
                    } else {
                        lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / (n - 1) as f64
                    }
                })
                .collect();
            centers.push(c);
            if centers.len() == count {
                break;
            }
            // row-major increment
            for d in (0..dims).rev() {
                idx[d] += 1;
                if idx[d] < counts[d] {
                    continue 'outer;
                }
                idx[d] = 0;
            }
            break;
        }
        RbfBasis::new(centers, variances, bias)
    }
}

/// Per-dimension lattice counts whose product is `count` when a balanced
/// factorisation exists; otherwise the row-major enumeration is truncated.
pub fn lattice_counts(count: usize, dims: usize) -> Vec<usize> {
    if dims == 1 {
        return vec![count];
    }
    // search balanced exact factorisations
    fn search(count: usize, dims: usize) -> Option<Vec<usize>> {
        if dims == 1 {
            return Some(vec![count]);
        }
        let mut best: Option<Vec<usize>> = None;
        let target = (count as f64).powf(1.0 / dims as f64);
        let mut divisors: Vec<usize> = (1..=count).filter(|d| count % d == 0).collect();
        divisors.sort_by(|a, b| {
            (*a as f64 - target)
                .abs()
                .partial_cmp(&(*b as f64 - target).abs())
                .unwrap()
        });
        for d in divisors {
            if let Some(mut rest) = search(count / d, dims - 1) {
                let mut cand = vec![d];
                cand.append(&mut rest);
                let spread = cand.iter().max().unwrap() - cand.iter().min().unwrap();
                let best_spread = best
                    .as_ref()
                    .map(|b| b.iter().max().unwrap() - b.iter().min().unwrap());
                if best_spread.map(|s| spread < s).unwrap_or(true) {
                    best = Some(cand);
                }
            }
        }
        best
    }
    if let Some(mut counts) = search(count, dims) {
        counts.sort_unstable_by(|a, b| b.cmp(a)); // larger counts first
        return counts;
    }
    let n = (count as f64).powf(1.0 / dims as f64).ceil() as usize;
    vec![n.max(1); dims]
}

/// The feature maps used across the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Rbf(RbfBasis),
    /// Raw state components, optionally with a trailing constant feature.
    Raw { dim: usize, bias: bool },
    /// One-hot over an integer lattice (row-major over `dims`).
    Tabular { dims: Vec<usize> },
}

impl Basis {
    pub fn output_dim(&self) -> usize {
        match self {
            Basis::Rbf(rbf) => rbf.centers.len() + usize::from(rbf.bias),
            Basis::Raw { dim, bias } => dim + usize::from(*bias),
            Basis::Tabular { dims } => dims.iter().product(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Basis::Rbf(rbf) => rbf.centers[0].dim(),
            Basis::Raw { dim, .. } => *dim,
            Basis::Tabular { dims } => dims.len(),
        }
    }

    pub fn eval(&self, s: &StateVector) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.eval_into(s, &mut out);
        out
    }

    pub fn eval_into(&self, s: &StateVector, out: &mut [f64]) {
        match self {
            Basis::Rbf(rbf) => {
                for (j, c) in rbf.centers.iter().enumerate() {
                    let mut q = 0.0;
                    for d in 0..c.dim() {
                        let diff = s[d] - c[d];
                        q += diff * diff / rbf.variances[d];
                    }
                    out[j] = (-0.5 * q).exp();
                }
                if rbf.bias {
                    out[rbf.centers.len()] = 1.0;
                }
            }
            Basis::Raw { dim, bias } => {
                out[..*dim].copy_from_slice(&s.as_slice()[..*dim]);
                if *bias {
                    out[*dim] = 1.0;
                }
            }
            Basis::Tabular { dims } => {
                out.fill(0.0);
                let mut index = 0usize;
                for (d, &n) in dims.iter().enumerate() {
                    let i = (s[d].round().max(0.0) as usize).min(n - 1);
                    index = index * n + i;
                }
                out[index] = 1.0;
            }
        }
    }
}
