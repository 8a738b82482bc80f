//! Inter-task state mapping learned from unpaired trajectory datasets.
//!
//! The procedure is a linear unsupervised manifold alignment: z-normalize
//! each domain, build kNN graph Laplacians, solve the locality-preserving
//! generalized eigenproblem Z'LZ u = lambda Z'DZ u per domain, pair the
//! latent dimensions by eigenvalue order, and lift each latent space back to
//! raw coordinates with a closed-form least-squares map. Composing
//! projection and lift yields the affine forward map chi_s (source ->
//! target) and inverse chi_s+ (target -> source).
//!
//! Latent coordinates of matched eigen-directions are only defined up to
//! sign, so after the deterministic per-eigenvector convention (first
//! nonzero component positive) two data-driven consistency passes run on
//! the target side: distribution-skewness matching per latent dimension,
//! and rotational-flow matching per latent pair computed from trajectory
//! order. Both are deterministic functions of the datasets.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mdp::{ActionSet, StateVector};

/// Unpaired per-domain state samples. `*_traj_lens` partition the state
/// lists into the rollouts they came from (used by the orientation pass);
/// a single block is assumed when empty.
#[derive(Debug, Clone, Default)]
pub struct AlignmentDataset {
    pub source_states: Vec<StateVector>,
    pub target_states: Vec<StateVector>,
    pub source_traj_lens: Vec<usize>,
    pub target_traj_lens: Vec<usize>,
}

impl AlignmentDataset {
    pub fn from_states(source: Vec<StateVector>, target: Vec<StateVector>) -> Self {
        AlignmentDataset {
            source_states: source,
            target_states: target,
            source_traj_lens: Vec::new(),
            target_traj_lens: Vec::new(),
        }
    }
}

/// y = A x + b
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        AffineMap {
            a: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x);
        let y = &self.a * v + &self.b;
        y.iter().copied().collect()
    }

    pub fn in_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Per-dimension mean/scale recorded at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }
}

/// Invertible mapping chi_s / chi_s+ between source and target state
/// manifolds. Both directions are plain affine maps on raw coordinates
/// (fit-time normalization is already composed in).
#[derive(Debug, Clone, PartialEq)]
pub struct InterTaskMap {
    /// chi_s: source -> target
    pub forward: AffineMap,
    /// chi_s+: target -> source
    pub inverse: AffineMap,
    pub source_norm: Normalization,
    pub target_norm: Normalization,
    /// Max round-trip error achieved on the fitted source data, in
    /// normalized units.
    pub round_trip_tol: f64,
}

impl InterTaskMap {
    /// Exact identity map for same-domain transfer.
    pub fn identity(dim: usize) -> Self {
        InterTaskMap {
            forward: AffineMap::identity(dim),
            inverse: AffineMap::identity(dim),
            source_norm: Normalization::identity(dim),
            target_norm: Normalization::identity(dim),
            round_trip_tol: 0.0,
        }
    }
}

/// chi_s+ : map a target state into source coordinates.
pub fn map_state(m: &InterTaskMap, s_target: &StateVector) -> StateVector {
    StateVector::new(m.inverse.apply(s_target.as_slice()))
}

/// chi_s : map a source state into target coordinates.
pub fn unmap_state(m: &InterTaskMap, s_source: &StateVector) -> StateVector {
    StateVector::new(m.forward.apply(s_source.as_slice()))
}

/// Ordinal action correspondence between equal-cardinality action sets
/// stored sorted ascending by magnitude.
pub fn map_action(
    source_action_index: usize,
    source_set: &ActionSet,
    target_set: &ActionSet,
) -> Result<usize> {
    if source_set.cardinality() != target_set.cardinality() {
        return Err(Error::ActionMismatch(format!(
            "transfer requires equal action cardinality, got |A^S| = {} and |A^T| = {}",
            source_set.cardinality(),
            target_set.cardinality()
        )));
    }
    if source_action_index >= source_set.cardinality() {
        return Err(Error::Precondition(format!(
            "action index {source_action_index} out of range"
        )));
    }
    Ok(source_action_index)
}

#[derive(Debug, Clone)]
pub struct AlignmentOptions {
    pub knn: usize,
    /// Shared latent dimension; defaults to min(source_dim, target_dim).
    pub latent_dim: Option<usize>,
    /// Fail the fit if the achieved round-trip error (normalized units)
    /// exceeds this.
    pub round_trip_bound: f64,
    /// |skewness| below this is treated as inconclusive for sign matching.
    pub skew_tol: f64,
}

impl Default for AlignmentOptions {
    fn default() -> Self {
        AlignmentOptions {
            knn: 10,
            latent_dim: None,
            round_trip_bound: 0.1,
            skew_tol: 0.15,
        }
    }
}

/// Learn the inter-task map from unpaired datasets.
pub fn fit_alignment(
    data: &AlignmentDataset,
    knn: usize,
    latent_dim: usize,
) -> Result<InterTaskMap> {
    fit_alignment_with(
        data,
        &AlignmentOptions {
            knn,
            latent_dim: Some(latent_dim),
            ..AlignmentOptions::default()
        },
    )
}

pub fn fit_alignment_with(
    data: &AlignmentDataset,
    opts: &AlignmentOptions,
) -> Result<InterTaskMap> {
    if data.source_states.is_empty() || data.target_states.is_empty() {
        return Err(Error::Precondition(
            "alignment needs non-empty source and target datasets".into(),
        ));
    }
    let d_s = data.source_states[0].dim();
    let d_t = data.target_states[0].dim();
    let p = opts.latent_dim.unwrap_or(d_s.min(d_t));
    if p == 0 || p > d_s.min(d_t) {
        return Err(Error::Precondition(format!(
            "latent_dim must lie in 1..=min(source_dim, target_dim) = {}",
            d_s.min(d_t)
        )));
    }
    if opts.knn == 0 {
        return Err(Error::Precondition("knn must be >= 1".into()));
    }

    let (z_s, norm_s) = normalize(&data.source_states, "source")?;
    let (z_t, norm_t) = normalize(&data.target_states, "target")?;

    let mut u_s = lpp_projections(&z_s, opts.knn, p, "source")?;
    let mut u_t = lpp_projections(&z_t, opts.knn, p, "target")?;

    // deterministic per-eigenvector sign convention
    fix_eigvec_signs(&mut u_s);
    fix_eigvec_signs(&mut u_t);

    // data-driven cross-domain consistency (flips applied on the target side)
    let t_s = &z_s * &u_s;
    let mut t_t = &z_t * &u_t;
    let mut skew_fixed = vec![false; p];
    for j in 0..p {
        let col_s: Vec<f64> = t_s.column(j).iter().copied().collect();
        let col_t: Vec<f64> = t_t.column(j).iter().copied().collect();
        let sk_s = skewness(&col_s);
        let sk_t = skewness(&col_t);
        if sk_s.abs() > opts.skew_tol && sk_t.abs() > opts.skew_tol {
            skew_fixed[j] = true;
            if sk_s.signum() != sk_t.signum() {
                flip_column(&mut u_t, j);
                flip_column(&mut t_t, j);
            }
        }
    }
    let mut j = 0;
    while j + 1 < p {
        let or_s = flow_orientation(&t_s, j, j + 1, &data.source_traj_lens);
        let or_t = flow_orientation(&t_t, j, j + 1, &data.target_traj_lens);
        if or_s != 0 && or_t != 0 && or_s != or_t {
            if !skew_fixed[j + 1] {
                flip_column(&mut u_t, j + 1);
                flip_column(&mut t_t, j + 1);
            } else if !skew_fixed[j] {
                flip_column(&mut u_t, j);
                flip_column(&mut t_t, j);
            }
        }
        j += 2;
    }

    // least-squares lifts latent -> normalized coordinates
    let g_s = lift(&t_s, &z_s)?;
    let g_t = lift(&t_t, &z_t)?;

    let forward = compose(&norm_s, &u_s, &g_t, &norm_t);
    let inverse = compose(&norm_t, &u_t, &g_s, &norm_s);

    // achieved round-trip error on the fitted source data, normalized units
    let mut worst = 0.0f64;
    for s in &data.source_states {
        let there = forward.apply(s.as_slice());
        let back = inverse.apply(&there);
        let err: f64 = back
            .iter()
            .zip(s.as_slice())
            .zip(&norm_s.scale)
            .map(|((b, x), sc)| {
                let e = (b - x) / sc;
                e * e
            })
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err);
    }
    if worst > opts.round_trip_bound {
        return Err(Error::Numerical(format!(
            "alignment round-trip error {worst:.4} exceeds bound {} (normalized units)",
            opts.round_trip_bound
        )));
    }

    Ok(InterTaskMap {
        forward,
        inverse,
        source_norm: norm_s,
        target_norm: norm_t,
        round_trip_tol: worst,
    })
}

fn normalize(states: &[StateVector], domain: &str) -> Result<(DMatrix<f64>, Normalization)> {
    let n = states.len();
    let d = states[0].dim();
    if states.iter().any(|s| s.dim() != d) {
        return Err(Error::Precondition(format!(
            "{domain} states have inconsistent dimension"
        )));
    }
    let mut mean = vec![0.0; d];
    for s in states {
        for (m, &x) in mean.iter_mut().zip(s.as_slice()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for s in states {
        for (v, (m, &x)) in var.iter_mut().zip(mean.iter().zip(s.as_slice())) {
            let e = x - m;
            *v += e * e;
        }
    }
    let mut scale = vec![0.0; d];
    for (k, v) in var.iter().enumerate() {
        let sd = (v / n as f64).sqrt();
        if sd < 1e-12 {
            return Err(Error::RankDeficient(format!(
                "{domain} dimension {k} is degenerate (zero variance)"
            )));
        }
        scale[k] = sd;
    }
    let z = DMatrix::from_fn(n, d, |i, k| (states[i][k] - mean[k]) / scale[k]);
    Ok((z, Normalization { mean, scale }))
}

/// Symmetric binary kNN adjacency on the rows of `z`.
fn knn_graph(z: &DMatrix<f64>, knn: usize) -> DMatrix<f64> {
    let n = z.nrows();
    let k = knn.min(n - 1);
    let mut w = DMatrix::zeros(n, n);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2 = (z.row(i) - z.row(j)).norm_squared();
            dists.push((d2, j));
        }
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in dists.iter().take(k) {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
    }
    w
}

/// Locality-preserving projections: the `p` generalized eigenvectors of
/// Z'LZ u = lambda Z'DZ u with the smallest eigenvalues. Eigenvectors are
/// B-normalized (u' Z'DZ u = 1), which makes latent coordinates invariant
/// to invertible linear distortions of the data given the same graph.
fn lpp_projections(z: &DMatrix<f64>, knn: usize, p: usize, domain: &str) -> Result<DMatrix<f64>> {
    let n = z.nrows();
    let d = z.ncols();
    if n < knn + 2 {
        return Err(Error::Precondition(format!(
            "{domain} dataset too small ({n} states) for knn = {knn}"
        )));
    }
    let w = knn_graph(z, knn);
    let deg = DVector::from_iterator(n, w.row_iter().map(|r| r.sum()));
    // A = Z' L Z, B = Z' D Z with L = D - W
    let dz = DMatrix::from_fn(n, d, |i, k| deg[i] * z[(i, k)]);
    let b = z.transpose() * &dz;
    let a = &b - z.transpose() * (&w * z);
    let chol = Cholesky::new(b.clone()).ok_or_else(|| {
        Error::RankDeficient(format!(
            "{domain} graph-weighted covariance is not positive-definite"
        ))
    })?;
    let l = chol.l();
    // C = L^-1 A L^-T, symmetrized against rounding
    let y = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::Numerical(format!("{domain} triangular solve failed")))?;
    let c_t = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Numerical(format!("{domain} triangular solve failed")))?;
    let c = (&c_t + c_t.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap()
            .then(i.cmp(&j))
    });
    let lt = l.transpose();
    let mut u = DMatrix::zeros(d, p);
    for (col, &idx) in order.iter().take(p).enumerate() {
        let yvec = eig.eigenvectors.column(idx).into_owned();
        let uvec = lt
            .solve_upper_triangular(&yvec)
            .ok_or_else(|| Error::Numerical(format!("{domain} triangular solve failed")))?;
        u.set_column(col, &uvec);
    }
    Ok(u)
}

/// First nonzero component of each eigenvector made positive.
fn fix_eigvec_signs(u: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        let mut sign = 0.0;
        for i in 0..u.nrows() {
            if u[(i, j)].abs() > 1e-9 {
                sign = u[(i, j)].signum();
                break;
            }
        }
        if sign < 0.0 {
            flip_column(u, j);
        }
    }
}

fn flip_column(m: &mut DMatrix<f64>, j: usize) {
    for i in 0..m.nrows() {
        m[(i, j)] = -m[(i, j)];
    }
}

fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Sign of the mean signed area swept by consecutive latent points in the
/// (j0, j1) plane, following trajectory order; 0 when inconclusive.
fn flow_orientation(t: &DMatrix<f64>, j0: usize, j1: usize, traj_lens: &[usize]) -> i32 {
    let n = t.nrows();
    let lens: Vec<usize> = if traj_lens.is_empty() {
        vec![n]
    } else {
        traj_lens.to_vec()
    };
    let mut total = 0.0;
    let mut scale = 0.0;
    let mut start = 0;
    for &len in &lens {
        let end = (start + len).min(n);
        for i in start + 1..end {
            let (x0, y0) = (t[(i - 1, j0)], t[(i - 1, j1)]);
            let (x1, y1) = (t[(i, j0)], t[(i, j1)]);
            total += x0 * (y1 - y0) - y0 * (x1 - x0);
            scale += (x0 * x0 + y0 * y0).sqrt()
                * ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        }
        start = end;
        if start >= n {
            break;
        }
    }
    if scale <= 0.0 || total.abs() < 0.05 * scale {
        0
    } else if total > 0.0 {
        1
    } else {
        -1
    }
}

/// Least-squares lift from latent coordinates back to normalized
/// coordinates: G minimizing ||T G - Z||_F.
fn lift(t: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = t.clone().svd(true, true);
    svd.solve(z, 1e-12)
        .map_err(|e| Error::Numerical(format!("latent lift solve failed: {e}")))
}

/// Compose denormalize(out) . lift' . projection' . normalize(in) into one
/// affine map on raw coordinates.
fn compose(
    norm_in: &Normalization,
    u_in: &DMatrix<f64>,
    g_out: &DMatrix<f64>,
    norm_out: &Normalization,
) -> AffineMap {
    let d_in = norm_in.mean.len();
    let d_out = norm_out.mean.len();
    // x_out = S_out G' U' S_in^-1 (x - mu_in) + mu_out
    let mut s_in_inv = DMatrix::zeros(d_in, d_in);
    for i in 0..d_in {
        s_in_inv[(i, i)] = 1.0 / norm_in.scale[i];
    }
    let mut s_out = DMatrix::zeros(d_out, d_out);
    for i in 0..d_out {
        s_out[(i, i)] = norm_out.scale[i];
    }
    let core = s_out * g_out.transpose() * u_in.transpose() * s_in_inv;
    let mu_in = DVector::from_column_slice(&norm_in.mean);
    let mu_out = DVector::from_column_slice(&norm_out.mean);
    let b = mu_out - &core * mu_in;
    AffineMap { a: core, b }
}

// ---------------------------------------------------------------------------
// plain-text serialization
// ---------------------------------------------------------------------------

/// Blocks `FORWARD_A`, `FORWARD_B`, `INVERSE_A`, `INVERSE_B`, `NORM_MEAN`,
/// `NORM_SCALE`, `ROUND_TRIP_TOL`; each header carries the row count, NORM
/// blocks hold the source row first.
pub fn map_to_string(m: &InterTaskMap) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let join = |v: &mut dyn Iterator<Item = f64>| -> String {
        v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    };
    let mat = |out: &mut String, name: &str, a: &DMatrix<f64>| {
        let _ = writeln!(out, "{name} {}", a.nrows());
        for i in 0..a.nrows() {
            let _ = writeln!(
                out,
                "{}",
                (0..a.ncols())
                    .map(|j| a[(i, j)].to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            );
        }
    };
    mat(&mut out, "FORWARD_A", &m.forward.a);
    let _ = writeln!(out, "FORWARD_B 1");
    let _ = writeln!(out, "{}", join(&mut m.forward.b.iter().copied()));
    mat(&mut out, "INVERSE_A", &m.inverse.a);
    let _ = writeln!(out, "INVERSE_B 1");
    let _ = writeln!(out, "{}", join(&mut m.inverse.b.iter().copied()));
    let _ = writeln!(out, "NORM_MEAN 2");
    let _ = writeln!(out, "{}", join(&mut m.source_norm.mean.iter().copied()));
    let _ = writeln!(out, "{}", join(&mut m.target_norm.mean.iter().copied()));
    let _ = writeln!(out, "NORM_SCALE 2");
    let _ = writeln!(out, "{}", join(&mut m.source_norm.scale.iter().copied()));
    let _ = writeln!(out, "{}", join(&mut m.target_norm.scale.iter().copied()));
    let _ = writeln!(out, "ROUND_TRIP_TOL 1");
    let _ = writeln!(out, "{}", m.round_trip_tol);
    out
}

pub fn map_from_string(text: &str) -> Result<InterTaskMap> {
    let mut lines = text.lines();
    let mut block = |name: &str| -> Result<Vec<Vec<f64>>> {
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("truncated map file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 2 || parts[0] != name {
            return Err(Error::Parse(format!(
                "expected block '{name}', found '{header}'"
            )));
        }
        let rows: usize = parts[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad row count in '{header}'")))?;
        let mut out = Vec::with_capacity(rows);
        for _ in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated matrix block".into()))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad number '{v}'")))
                })
                .collect::<Result<_>>()?;
            out.push(row);
        }
        Ok(out)
    };
    let to_matrix = |rows: Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        if rows.iter().any(|x| x.len() != c) {
            return Err(Error::Parse("ragged matrix block".into()));
        }
        Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    };

    let fa = to_matrix(block("FORWARD_A")?)?;
    let fb = block("FORWARD_B")?.remove(0);
    let ia = to_matrix(block("INVERSE_A")?)?;
    let ib = block("INVERSE_B")?.remove(0);
    let mut means = block("NORM_MEAN")?;
    let mut scales = block("NORM_SCALE")?;
    let tol = block("ROUND_TRIP_TOL")?[0][0];
    if means.len() != 2 || scales.len() != 2 {
        return Err(Error::Parse("NORM blocks must have two rows".into()));
    }
    Ok(InterTaskMap {
        forward: AffineMap {
            a: fa,
            b: DVector::from_vec(fb),
        },
        inverse: AffineMap {
            a: ia,
            b: DVector::from_vec(ib),
        },
        source_norm: Normalization {
            mean: means.remove(0),
            scale: scales.remove(0),
        },
        target_norm: Normalization {
            mean: means.remove(0),
            scale: scales.remove(0),
        },
        round_trip_tol: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A skewed planar curve with trajectory ordering; spread is roughly
    /// isotropic so kNN graphs survive rotation + renormalization.
    fn curve_states(n: usize) -> Vec<StateVector> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let x = t * t * 2.0 - 0.3;
                let y = (3.0 * t).sin() * 0.8 + t;
                StateVector::new(vec![x, y])
            })
            .collect()
    }

    fn rotate(states: &[StateVector], angle: f64) -> Vec<StateVector> {
        let (c, s) = (angle.cos(), angle.sin());
        states
            .iter()
            .map(|p| StateVector::new(vec![c * p[0] - s * p[1], s * p[0] + c * p[1]]))
            .collect()
    }

    #[test]
    fn self_alignment_is_identity() {
        let pts = curve_states(300);
        let data = AlignmentDataset::from_states(pts.clone(), pts.clone());
        let m = fit_alignment(&data, 10, 2).unwrap();
        for p in pts.iter().step_by(17) {
            let fwd = unmap_state(&m, p);
            assert!(p.distance(&fwd) < 1e-6, "forward moved {p:?} to {fwd:?}");
            let inv = map_state(&m, p);
            assert!(p.distance(&inv) < 1e-6);
        }
        assert!(m.round_trip_tol < 1e-6);
    }

    #[test]
    fn known_rotation_is_recovered() {
        let src = curve_states(300);
        let angle = 0.62;
        let tgt = rotate(&src, angle);
        let data = AlignmentDataset::from_states(src.clone(), tgt.clone());
        let m = fit_alignment(&data, 10, 2).unwrap();
        // forward map should act like the rotation on the data
        let mut worst = 0.0f64;
        for (s, t) in src.iter().zip(&tgt) {
            let mapped = unmap_state(&m, s);
            worst = worst.max(mapped.distance(t));
        }
        assert!(worst < 1e-3, "forward map deviates from rotation by {worst}");
        // and the matrix itself should be the rotation
        let (c, s) = (angle.cos(), angle.sin());
        let r = [[c, -s], [s, c]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (m.forward.a[(i, j)] - r[i][j]).abs() < 1e-3,
                    "A[{i}{j}] = {} vs R = {}",
                    m.forward.a[(i, j)],
                    r[i][j]
                );
            }
        }
        // round trip comes back to the source point
        for p in src.iter().step_by(13) {
            let back = map_state(&m, &unmap_state(&m, p));
            assert!(p.distance(&back) < 1e-3);
        }
    }

    #[test]
    fn map_state_inverts_pure_scaling() {
        let mut m = InterTaskMap::identity(2);
        m.forward.a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        m.inverse.a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let s = StateVector::new(vec![1.0, 1.0]);
        assert_eq!(map_state(&m, &s).as_slice(), &[0.5, 0.5]);
        assert_eq!(unmap_state(&m, &s).as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn identity_map_is_exact() {
        let m = InterTaskMap::identity(3);
        let s = StateVector::new(vec![0.3, -0.7, 2.0]);
        assert_eq!(map_state(&m, &s), s);
        assert_eq!(unmap_state(&m, &s), s);
    }

    #[test]
    fn map_action_is_ordinal_and_checks_cardinality() {
        let cp = ActionSet::new(vec![-20.0, 0.0, 20.0]).unwrap();
        let bike = ActionSet::new(vec![-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(map_action(2, &cp, &bike).unwrap(), 2);
        assert_eq!(map_action(0, &cp, &bike).unwrap(), 0);
        let four = ActionSet::new(vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            map_action(0, &cp, &four),
            Err(Error::ActionMismatch(_))
        ));
    }

    #[test]
    fn degenerate_dimension_is_named() {
        let flat: Vec<StateVector> = (0..50)
            .map(|i| StateVector::new(vec![i as f64, 3.0]))
            .collect();
        let data = AlignmentDataset::from_states(flat.clone(), flat);
        let err = fit_alignment(&data, 5, 2).unwrap_err();
        match err {
            Error::RankDeficient(msg) => assert!(msg.contains("dimension 1"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn serialization_round_trips() {
        let pts = curve_states(120);
        let data = AlignmentDataset::from_states(pts.clone(), rotate(&pts, 0.3));
        let m = fit_alignment(&data, 8, 2).unwrap();
        let text = map_to_string(&m);
        let back = map_from_string(&text).unwrap();
        assert_eq!(m.forward, back.forward);
        assert_eq!(m.inverse, back.inverse);
        assert_eq!(m.source_norm, back.source_norm);
        assert_eq!(m.target_norm, back.target_norm);
        assert_eq!(m.round_trip_tol, back.round_trip_tol);
    }

    #[test]
    fn deterministic_fit() {
        let pts = curve_states(200);
        let data = AlignmentDataset::from_states(pts.clone(), rotate(&pts, 1.1));
        let a = fit_alignment(&data, 10, 2).unwrap();
        let b = fit_alignment(&data, 10, 2).unwrap();
        assert_eq!(a.forward, b.forward);
        assert_eq!(a.inverse, b.inverse);
    }
}
