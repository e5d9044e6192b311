//! Non-negative CP (PARAFAC) decomposition with multiple seeded restarts.
//!
//! Each restart runs hierarchical alternating least squares (HALS): one
//! factor column at a time is updated in closed form and clipped at a tiny
//! positive floor, and each sweep is followed by an extrapolation step that
//! is kept only when it lowers the error. The fit with the smallest
//! Frobenius reconstruction error over all restarts is returned; ties go to
//! the lowest restart index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{for_each_index, strides, DenseTensor};

/// Lower clip for factor entries during HALS updates.
const FACTOR_FLOOR: f64 = 1e-16;

/// Residual norm (relative to the tensor norm) below which a fit is exact.
const EXACT_FIT: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop a restart when the relative change of the residual norm drops
    /// below this value.
    pub tol: f64,
    pub seed: u64,
    /// Skip the remaining restarts once a fit reaches this residual norm.
    pub target_error: Option<f64>,
}

impl Default for CpConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 1000,
            tol: 1e-10,
            seed: 0,
            target_error: None,
        }
    }
}

/// Weighted sum of `rank` rank-one tensors.
///
/// `factors[k]` is a `dims[k] × rank` matrix stored row-major; column `i`
/// holds the mode-`k` vector of component `i`. Columns are normalized to
/// sum to one, with the scale carried by `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpDecomposition {
    rank: usize,
    dims: Vec<usize>,
    factors: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl CpDecomposition {
    /// Build from per-mode column vectors: `columns[k][i]` is the mode-`k`
    /// vector of component `i`.
    pub fn from_components(columns: Vec<Vec<Vec<f64>>>, weights: Vec<f64>) -> Result<Self> {
        let rank = weights.len();
        if columns.is_empty() {
            return Err(Error::ShapeMismatch("decomposition needs at least one mode".into()));
        }
        let mut dims = Vec::with_capacity(columns.len());
        let mut factors = Vec::with_capacity(columns.len());
        for mode in &columns {
            if mode.len() != rank {
                return Err(Error::ShapeMismatch(format!(
                    "mode has {} columns for rank {}",
                    mode.len(),
                    rank
                )));
            }
            let d = mode.first().map_or(0, Vec::len);
            if d == 0 || mode.iter().any(|c| c.len() != d) {
                return Err(Error::ShapeMismatch("ragged factor columns".into()));
            }
            let mut f = vec![0.0; d * rank];
            for (c, col) in mode.iter().enumerate() {
                for (i, &v) in col.iter().enumerate() {
                    f[i * rank + c] = v;
                }
            }
            dims.push(d);
            factors.push(f);
        }
        let out = Self { rank, dims, factors, weights };
        out.check_nonnegative()?;
        Ok(out)
    }

    fn check_nonnegative(&self) -> Result<()> {
        for f in self.factors.iter().chain(std::iter::once(&self.weights)) {
            if let Some((index, &value)) = f.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(Error::NonNegativityViolation { index, value });
            }
        }
        Ok(())
    }

    fn zero(dims: &[usize], rank: usize) -> Self {
        Self {
            rank,
            dims: dims.to_vec(),
            factors: dims.iter().map(|&d| vec![0.0; d * rank]).collect(),
            weights: vec![0.0; rank],
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major `dims[k] × rank` factor matrix of mode `k`.
    pub fn factor(&self, k: usize) -> &[f64] {
        &self.factors[k]
    }

    /// Mode-`k` vector of component `i`.
    pub fn column(&self, k: usize, i: usize) -> Vec<f64> {
        (0..self.dims[k]).map(|row| self.factors[k][row * self.rank + i]).collect()
    }

    pub fn reconstruct(&self) -> DenseTensor {
        let mut out = vec![0.0; self.dims.iter().product()];
        let r = self.rank;
        let mut prod = vec![0.0; r];
        let mut flat = 0;
        for_each_index(&self.dims, |idx| {
            prod.copy_from_slice(&self.weights);
            for (k, &i) in idx.iter().enumerate() {
                let row = &self.factors[k][i * r..(i + 1) * r];
                for (p, v) in prod.iter_mut().zip(row) {
                    *p *= v;
                }
            }
            out[flat] = prod.iter().sum();
            flat += 1;
        });
        DenseTensor::new(self.dims.clone(), out).expect("dims are consistent")
    }

    /// Append a component with zero weight.
    fn padded(&self) -> Self {
        let r = self.rank;
        let factors = self
            .factors
            .iter()
            .zip(&self.dims)
            .map(|(f, &d)| {
                let mut g = Vec::with_capacity(d * (r + 1));
                for i in 0..d {
                    g.extend_from_slice(&f[i * r..(i + 1) * r]);
                    g.push(0.0);
                }
                g
            })
            .collect();
        let mut weights = self.weights.clone();
        weights.push(0.0);
        Self { rank: r + 1, dims: self.dims.clone(), factors, weights }
    }
}

/// Reconstruct `d` and check it against the expected shape.
pub fn reconstruct(d: &CpDecomposition, dims: &[usize]) -> Result<DenseTensor> {
    if d.dims != dims {
        return Err(Error::ShapeMismatch(format!(
            "decomposition dims {:?} vs requested {:?}",
            d.dims, dims
        )));
    }
    Ok(d.reconstruct())
}

/// Refine a decomposition of a non-negative tensor by `iters` EM steps for
/// the generalized KL divergence. For a probability table this is the EM
/// algorithm for the maximum-likelihood latent class model with `rank`
/// classes, started from `d`.
pub fn em_refine(t: &DenseTensor, d: &CpDecomposition, iters: usize) -> Result<CpDecomposition> {
    if t.dims() != d.dims() {
        return Err(Error::ShapeMismatch(format!(
            "tensor dims {:?} vs decomposition dims {:?}",
            t.dims(),
            d.dims()
        )));
    }
    let r = d.rank;
    let mut cur = d.clone();
    let mut resp = vec![0.0; r];
    for _ in 0..iters {
        let mut weights = vec![0.0; r];
        let mut factors: Vec<Vec<f64>> = cur.dims.iter().map(|&n| vec![0.0; n * r]).collect();
        let mut flat = 0;
        for_each_index(&cur.dims, |idx| {
            let x = t.values()[flat];
            flat += 1;
            if x == 0.0 {
                return;
            }
            resp.copy_from_slice(&cur.weights);
            for (k, &i) in idx.iter().enumerate() {
                for (p, v) in resp.iter_mut().zip(&cur.factors[k][i * r..(i + 1) * r]) {
                    *p *= v;
                }
            }
            let m: f64 = resp.iter().sum();
            if m <= 0.0 {
                return;
            }
            for c in 0..r {
                let g = x * resp[c] / m;
                weights[c] += g;
                for (k, &i) in idx.iter().enumerate() {
                    factors[k][i * r + c] += g;
                }
            }
        });
        for (k, f) in factors.iter_mut().enumerate() {
            for i in 0..cur.dims[k] {
                for c in 0..r {
                    f[i * r + c] = if weights[c] > 0.0 { f[i * r + c] / weights[c] } else { 0.0 };
                }
            }
        }
        cur.weights = weights;
        cur.factors = factors;
    }
    Ok(cur)
}

/// Result of [`nncp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpFit {
    pub decomposition: CpDecomposition,
    /// Frobenius norm of the residual.
    pub recon_error: f64,
    /// Index of the winning start (restarts first, then warm starts).
    pub start: usize,
    pub iterations: usize,
}

/// Best-of-restarts non-negative CP decomposition of `t` at rank `rank`.
pub fn nncp(t: &DenseTensor, rank: usize, cfg: &CpConfig) -> Result<CpFit> {
    nncp_warm(t, rank, cfg, None)
}

/// As [`nncp`], additionally seeding the candidate pool with a rank-`rank-1`
/// solution padded by an empty component. The returned error is then never
/// above the error of `warm`.
pub fn nncp_warm(
    t: &DenseTensor,
    rank: usize,
    cfg: &CpConfig,
    warm: Option<&CpDecomposition>,
) -> Result<CpFit> {
    if rank == 0 {
        return Err(Error::RankOutOfRange { rank, dims: t.dims().to_vec() });
    }
    if let Some((index, &value)) = t.values().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NonNegativityViolation { index, value });
    }
    if let Some(w) = warm {
        if w.rank + 1 != rank || w.dims != t.dims() {
            return Err(Error::ShapeMismatch(format!(
                "warm start of rank {} / dims {:?} for rank {} / dims {:?}",
                w.rank,
                w.dims,
                rank,
                t.dims()
            )));
        }
    }
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Ok(CpFit {
            decomposition: CpDecomposition::zero(t.dims(), rank),
            recon_error: 0.0,
            start: 0,
            iterations: 0,
        });
    }

    let solver = Hals::new(t, rank);
    let mut best: Option<CpFit> = None;
    let consider = |fit: CpFit, best: &mut Option<CpFit>| {
        // strict comparison keeps the earliest start on exact ties
        if best.as_ref().map_or(true, |b| fit.recon_error < b.recon_error) {
            *best = Some(fit);
        }
    };
    let reached = |best: &Option<CpFit>| match (cfg.target_error, best) {
        (Some(target), Some(b)) => b.recon_error <= target,
        _ => false,
    };

    for restart in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64));
        let mut factors: Vec<Vec<f64>> = t
            .dims()
            .iter()
            .map(|&d| (0..d * rank).map(|_| 1.0 - 0.99 * rng.gen::<f64>()).collect())
            .collect();
        solver.rescale_to(&mut factors, norm);
        let iterations = solver.run(&mut factors, cfg);
        consider(solver.finish(factors, restart, iterations), &mut best);
        if reached(&best) {
            return Ok(best.expect("at least one restart ran"));
        }
    }

    if let Some(w) = warm {
        let start = cfg.restarts.max(1);
        let padded = w.padded();
        let as_is = padded.reconstruct();
        let err = t.frobenius_distance(&as_is)?;
        consider(
            CpFit { decomposition: padded.clone(), recon_error: err, start, iterations: 0 },
            &mut best,
        );
        // refine with a small positive new component
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(start as u64));
        let mut factors = padded.factors.clone();
        let r = rank;
        for (k, f) in factors.iter_mut().enumerate() {
            let scale = if k == 0 { w.weights.iter().sum::<f64>().max(1e-12) } else { 1.0 };
            for i in 0..padded.dims[k] {
                if k == 0 {
                    for c in 0..r - 1 {
                        f[i * r + c] *= w.weights[c];
                    }
                }
                f[i * r + r - 1] = 1e-3 * scale * (1.0 - 0.99 * rng.gen::<f64>());
            }
        }
        let iterations = solver.run(&mut factors, cfg);
        consider(solver.finish(factors, start + 1, iterations), &mut best);
    }
    Ok(best.expect("at least one restart ran"))
}

/// Fits at ranks `1..=max_rank`, each warm-started from the previous one, so
/// the reconstruction error is non-increasing in the rank.
pub fn rank_profile(t: &DenseTensor, max_rank: usize, cfg: &CpConfig) -> Result<Vec<CpFit>> {
    let mut out: Vec<CpFit> = Vec::with_capacity(max_rank);
    for r in 1..=max_rank {
        let warm = out.last().map(|f| &f.decomposition);
        out.push(nncp_warm(t, r, cfg, warm)?);
    }
    Ok(out)
}

struct Hals<'a> {
    t: &'a DenseTensor,
    rank: usize,
    strides: Vec<usize>,
    norm_sq: f64,
}

impl<'a> Hals<'a> {
    fn new(t: &'a DenseTensor, rank: usize) -> Self {
        let norm = t.frobenius_norm();
        Self { t, rank, strides: strides(t.dims()), norm_sq: norm * norm }
    }

    fn dims(&self) -> &[usize] {
        self.t.dims()
    }

    fn gram(&self, k: usize, f: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let mut g = vec![0.0; r * r];
        for row in f.chunks_exact(r) {
            for a in 0..r {
                for b in a..r {
                    g[a * r + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..r {
            for b in 0..a {
                g[a * r + b] = g[b * r + a];
            }
        }
        debug_assert_eq!(f.len(), self.dims()[k] * r);
        g
    }

    /// Matricized-tensor times Khatri-Rao product for mode `k`.
    fn mttkrp(&self, factors: &[Vec<f64>], k: usize, out: &mut [f64]) {
        let r = self.rank;
        let dims = self.dims();
        let values = self.t.values();
        let others: Vec<usize> = (0..dims.len()).filter(|&l| l != k).collect();
        let other_dims: Vec<usize> = others.iter().map(|&l| dims[l]).collect();
        let stride_k = self.strides[k];
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut kr = vec![0.0; r];
        for_each_index(&other_dims, |idx| {
            kr.iter_mut().for_each(|v| *v = 1.0);
            let mut base = 0;
            for (j, &l) in others.iter().enumerate() {
                let row = &factors[l][idx[j] * r..(idx[j] + 1) * r];
                for (p, v) in kr.iter_mut().zip(row) {
                    *p *= v;
                }
                base += idx[j] * self.strides[l];
            }
            for i in 0..dims[k] {
                let v = values[base + i * stride_k];
                if v != 0.0 {
                    for (o, p) in out[i * r..(i + 1) * r].iter_mut().zip(&kr) {
                        *o += v * p;
                    }
                }
            }
        });
    }

    fn model_norm_sq(&self, grams: &[Vec<f64>]) -> f64 {
        let r = self.rank;
        let mut total = 0.0;
        for a in 0..r * r {
            total += grams.iter().map(|g| g[a]).product::<f64>();
        }
        total
    }

    fn rescale_to(&self, factors: &mut [Vec<f64>], norm: f64) {
        let grams: Vec<Vec<f64>> =
            factors.iter().enumerate().map(|(k, f)| self.gram(k, f)).collect();
        let model = self.model_norm_sq(&grams).sqrt();
        if model > 0.0 {
            let s = norm / model;
            factors[0].iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Spread each component's scale evenly across modes.
    fn rebalance(&self, factors: &mut [Vec<f64>]) {
        let r = self.rank;
        let n = factors.len() as f64;
        for c in 0..r {
            let norms: Vec<f64> = factors
                .iter()
                .map(|f| f.iter().skip(c).step_by(r).map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            if norms.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
                continue;
            }
            let geo = norms.iter().map(|x| x.ln()).sum::<f64>() / n;
            let geo = geo.exp();
            for (f, nk) in factors.iter_mut().zip(&norms) {
                let s = geo / nk;
                f.iter_mut().skip(c).step_by(r).for_each(|v| *v *= s);
            }
        }
    }

    fn explicit_error(&self, factors: &[Vec<f64>]) -> f64 {
        let d = CpDecomposition {
            rank: self.rank,
            dims: self.dims().to_vec(),
            factors: factors.to_vec(),
            weights: vec![1.0; self.rank],
        };
        self.t
            .frobenius_distance(&d.reconstruct())
            .expect("shapes agree")
    }

    /// Run HALS sweeps in place; returns the number of sweeps.
    ///
    /// After each sweep the iterate is extrapolated along the last step; the
    /// extrapolated point is kept only when it lowers the error, and the step
    /// factor grows after successes and shrinks after failures.
    fn run(&self, factors: &mut Vec<Vec<f64>>, cfg: &CpConfig) -> usize {
        let r = self.rank;
        let n = self.dims().len();
        let norm = self.norm_sq.sqrt();
        let mut grams: Vec<Vec<f64>> =
            factors.iter().enumerate().map(|(k, f)| self.gram(k, f)).collect();
        let mut m = Vec::new();
        let mut prev = f64::INFINITY;
        let mut last: Option<Vec<Vec<f64>>> = None;
        let (mut beta, mut beta_cap) = (0.5, 1.0);
        let mut iter = 0;
        while iter < cfg.max_iter {
            iter += 1;
            let mut inner = 0.0;
            for k in 0..n {
                let dk = self.dims()[k];
                m.resize(dk * r, 0.0);
                self.mttkrp(factors, k, &mut m);
                let mut g = vec![1.0; r * r];
                for (l, gl) in grams.iter().enumerate() {
                    if l != k {
                        g.iter_mut().zip(gl).for_each(|(a, b)| *a *= b);
                    }
                }
                let f = &mut factors[k];
                for c in 0..r {
                    let gcc = g[c * r + c];
                    if gcc <= 0.0 {
                        continue;
                    }
                    for i in 0..dk {
                        let row = &f[i * r..(i + 1) * r];
                        let s: f64 = row.iter().zip(0..r).map(|(a, cc)| a * g[cc * r + c]).sum();
                        let v = f[i * r + c] + (m[i * r + c] - s) / gcc;
                        f[i * r + c] = v.max(FACTOR_FLOOR);
                    }
                }
                grams[k] = self.gram(k, f);
                if k == n - 1 {
                    inner = m.iter().zip(f.iter()).map(|(a, b)| a * b).sum();
                }
            }
            let err_sq = self.norm_sq - 2.0 * inner + self.model_norm_sq(&grams);
            let mut err = err_sq.max(0.0).sqrt();
            if err < 1e-6 * norm {
                err = self.explicit_error(factors);
            }
            self.rebalance(factors);

            if let Some(old) = last.replace(factors.clone()) {
                let trial: Vec<Vec<f64>> = factors
                    .iter()
                    .zip(&old)
                    .map(|(f, o)| {
                        f.iter()
                            .zip(o)
                            .map(|(a, b)| (a + beta * (a - b)).max(FACTOR_FLOOR))
                            .collect()
                    })
                    .collect();
                let trial_err = self.explicit_error(&trial);
                if trial_err < err {
                    *factors = trial;
                    err = trial_err;
                    beta = (beta * 1.05).min(beta_cap);
                    beta_cap = (beta_cap * 1.01).min(1.0);
                } else {
                    beta_cap = beta;
                    beta /= 1.5;
                }
            }

            if err <= EXACT_FIT * norm {
                break;
            }
            let change = (prev - err).abs() / prev.max(f64::MIN_POSITIVE);
            if change < cfg.tol {
                break;
            }
            prev = err;
            grams = factors.iter().enumerate().map(|(k, f)| self.gram(k, f)).collect();
        }
        iter
    }

    fn finish(&self, mut factors: Vec<Vec<f64>>, start: usize, iterations: usize) -> CpFit {
        let r = self.rank;
        let mut weights = vec![1.0; r];
        for f in factors.iter_mut() {
            for c in 0..r {
                let s: f64 = f.iter().skip(c).step_by(r).sum();
                if s > 0.0 {
                    f.iter_mut().skip(c).step_by(r).for_each(|v| *v /= s);
                }
                weights[c] *= s;
            }
        }
        let decomposition = CpDecomposition {
            rank: r,
            dims: self.dims().to_vec(),
            factors,
            weights,
        };
        let recon_error = self
            .t
            .frobenius_distance(&decomposition.reconstruct())
            .expect("shapes agree");
        CpFit { decomposition, recon_error, start, iterations }
    }
}
