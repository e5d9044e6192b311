//! Hypothesis tests on the rank of contingency matrices and tensors.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::cpd::{em_refine, nncp, CpConfig};
use crate::error::{Error, Result};
use crate::tensor::ContingencyTensor;

/// Floor on expected cell probabilities in the goodness-of-fit statistic.
pub const EXPECTED_FLOOR: f64 = 1e-12;

/// Parameters of the null distribution a p-value was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullDistribution {
    /// Weighted sum of chi-square(1) variables matched by a scaled
    /// chi-square `scale · χ²(dof)` with the same first two moments.
    WeightedChiSquare { weight_sum: f64, weight_sq_sum: f64, scale: f64, dof: f64 },
    ChiSquare { dof: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub null: NullDistribution,
    pub hypothesized_rank: usize,
    pub alpha: f64,
    pub accept: bool,
}

impl RankTestResult {
    fn new(statistic: f64, p_value: f64, null: NullDistribution, r: usize, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            p_value,
            null,
            hypothesized_rank: r,
            alpha,
            accept: p_value >= alpha,
        }
    }
}

fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    dist.sf(x)
}

/// Eigenvectors of a symmetric matrix, ordered by decreasing eigenvalue.
fn sorted_eigenvectors(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    })
}

/// Characteristic-root test of `rank(m) = r` for a two-way table.
///
/// The statistic is `N` times the sum of the squared singular values beyond
/// the first `r`. Under the null it is asymptotically a weighted sum of
/// chi-square(1) variables whose weights are the eigenvalues of the
/// multinomial covariance projected onto the left and right null spaces of
/// the estimated matrix.
pub fn cr_matrix_rank_test(m: &ContingencyTensor, r: usize, alpha: f64) -> Result<RankTestResult> {
    if m.n_axes() != 2 {
        return Err(Error::InvalidAxes(format!("expected a two-way table, got {} axes", m.n_axes())));
    }
    if m.n_samples() == 0 {
        return Err(Error::ZeroSamples);
    }
    let (rows, cols) = (m.dims()[0], m.dims()[1]);
    if r < 1 || r >= rows.min(cols) {
        return Err(Error::RankOutOfRange { rank: r, dims: m.dims().to_vec() });
    }
    let p = DMatrix::from_row_slice(rows, cols, m.values());
    let u = sorted_eigenvectors(&p * p.transpose());
    let v = sorted_eigenvectors(p.transpose() * &p);
    let c = u.columns(r, rows - r).into_owned();
    let d = v.columns(r, cols - r).into_owned();

    let tail = c.transpose() * &p * &d;
    let n = m.n_samples() as f64;
    let statistic = n * tail.norm_squared();

    // covariance of vec(Cᵀ P̂ D) under multinomial sampling, scaled by N
    let (a_dim, b_dim) = (rows - r, cols - r);
    let k_dim = a_dim * b_dim;
    let mut k = DMatrix::<f64>::zeros(k_dim, k_dim);
    let mut f = vec![0.0; k_dim];
    for i in 0..rows {
        for j in 0..cols {
            let pij = p[(i, j)];
            if pij == 0.0 {
                continue;
            }
            for a in 0..a_dim {
                for b in 0..b_dim {
                    f[a * b_dim + b] = c[(i, a)] * d[(j, b)];
                }
            }
            for x in 0..k_dim {
                let fx = pij * f[x];
                for y in x..k_dim {
                    k[(x, y)] += fx * f[y];
                }
            }
        }
    }
    for x in 0..k_dim {
        let mx = tail[(x / b_dim, x % b_dim)];
        for y in x..k_dim {
            let my = tail[(y / b_dim, y % b_dim)];
            k[(x, y)] -= mx * my;
            k[(y, x)] = k[(x, y)];
        }
    }
    let weight_sum = k.trace();
    let weight_sq_sum = k.norm_squared();

    let (p_value, scale, dof) = if weight_sum <= 0.0 || weight_sq_sum <= 0.0 {
        (if statistic <= 0.0 { 1.0 } else { 0.0 }, 0.0, 0.0)
    } else {
        let scale = weight_sq_sum / weight_sum;
        let dof = weight_sum * weight_sum / weight_sq_sum;
        (chi2_sf(statistic / scale, dof), scale, dof)
    };
    Ok(RankTestResult::new(
        statistic,
        p_value,
        NullDistribution::WeightedChiSquare { weight_sum, weight_sq_sum, scale, dof },
        r,
        alpha,
    ))
}

/// Smallest rank whose CR test accepts, or `min(dims)` when every
/// hypothesis below full rank is rejected.
pub fn estimate_matrix_rank(m: &ContingencyTensor, alpha: f64) -> Result<usize> {
    if m.n_axes() != 2 {
        return Err(Error::InvalidAxes(format!("expected a two-way table, got {} axes", m.n_axes())));
    }
    let full = m.dims()[0].min(m.dims()[1]);
    for r in 1..full {
        if cr_matrix_rank_test(m, r, alpha)?.accept {
            return Ok(r);
        }
    }
    Ok(full)
}

/// `true` iff the CR test accepts rank one for the pair.
pub fn marginal_independence_test(t: &ContingencyTensor, alpha: f64) -> Result<bool> {
    Ok(cr_matrix_rank_test(t, 1, alpha)?.accept)
}

/// Degrees of freedom for the goodness-of-fit chi-square reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofRule {
    /// `∏ d_i − Σ_{i<j} d_i d_j`, clamped to at least one.
    Pairwise,
    /// Cells minus free parameters of an `r`-class latent class model:
    /// `∏ d_i − r(Σ (d_i − 1) + 1)`, clamped to at least one.
    #[default]
    LatentClass,
}

impl DofRule {
    pub fn dof(self, dims: &[usize], r: usize) -> usize {
        let cells: usize = dims.iter().product();
        let used = match self {
            DofRule::Pairwise => {
                let mut s = 0;
                for i in 0..dims.len() {
                    for j in i + 1..dims.len() {
                        s += dims[i] * dims[j];
                    }
                }
                s
            }
            DofRule::LatentClass => r * (dims.iter().map(|d| d - 1).sum::<usize>() + 1),
        };
        cells.saturating_sub(used).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GofOptions {
    pub dof: DofRule,
    /// Maximum-likelihood (EM) steps applied to the CP fit before the
    /// statistic is computed; zero keeps the least-squares fit.
    pub em_iters: usize,
}

impl Default for GofOptions {
    fn default() -> Self {
        Self { dof: DofRule::LatentClass, em_iters: 200 }
    }
}

/// Chi-square goodness-of-fit test of `rank(t) = r` for a tensor with at
/// least three axes, using the best non-negative CP fit of rank `r` as the
/// expected table.
pub fn tensor_rank_gof_test(
    t: &ContingencyTensor,
    r: usize,
    cp: &CpConfig,
    alpha: f64,
) -> Result<RankTestResult> {
    tensor_rank_gof_test_with(t, r, cp, alpha, &GofOptions::default())
}

pub fn tensor_rank_gof_test_with(
    t: &ContingencyTensor,
    r: usize,
    cp: &CpConfig,
    alpha: f64,
    opts: &GofOptions,
) -> Result<RankTestResult> {
    if t.n_axes() < 3 {
        return Err(Error::TooFewAxes(t.n_axes()));
    }
    if t.n_samples() == 0 {
        return Err(Error::ZeroSamples);
    }
    if r < 1 {
        return Err(Error::RankOutOfRange { rank: r, dims: t.dims().to_vec() });
    }
    let fit = nncp(t.dense(), r, cp)?;
    let expected = if opts.em_iters > 0 {
        em_refine(t.dense(), &fit.decomposition, opts.em_iters)?.reconstruct()
    } else {
        fit.decomposition.reconstruct()
    };
    let n = t.n_samples() as f64;
    let statistic = n * t
        .values()
        .iter()
        .zip(expected.values())
        .map(|(&o, &e)| (o - e) * (o - e) / e.max(EXPECTED_FLOOR))
        .sum::<f64>();
    let dof = opts.dof.dof(t.dims(), r) as f64;
    let p_value = chi2_sf(statistic, dof);
    Ok(RankTestResult::new(statistic, p_value, NullDistribution::ChiSquare { dof }, r, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;

    fn table(dims: Vec<usize>, values: Vec<f64>, n: usize) -> ContingencyTensor {
        let labels = (0..dims.len()).map(|i| format!("V{i}")).collect();
        ContingencyTensor::from_dense(DenseTensor::new(dims, values).unwrap(), n, labels).unwrap()
    }

    fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
    }

    #[test]
    fn exact_rank_one_accepts() {
        let m = table(vec![2, 2], outer(&[0.6, 0.4], &[0.3, 0.7]), 1_000_000);
        let res = cr_matrix_rank_test(&m, 1, 0.005).unwrap();
        assert!(res.statistic < 1e-9);
        assert!(res.accept);
        assert!(marginal_independence_test(&m, 0.005).unwrap());
    }

    #[test]
    fn identity_like_rejects_rank_one() {
        let m = table(vec![2, 2], vec![0.45, 0.05, 0.05, 0.45], 10_000);
        let res = cr_matrix_rank_test(&m, 1, 0.005).unwrap();
        assert!(!res.accept);
        assert!(res.p_value < 1e-6);
        assert_eq!(estimate_matrix_rank(&m, 0.005).unwrap(), 2);
    }

    #[test]
    fn rank_bounds() {
        let m = table(vec![2, 3], vec![1.0 / 6.0; 6], 100);
        assert!(matches!(cr_matrix_rank_test(&m, 0, 0.05), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(cr_matrix_rank_test(&m, 2, 0.05), Err(Error::RankOutOfRange { .. })));
        let z = table(vec![2, 3], vec![1.0 / 6.0; 6], 0);
        assert!(matches!(cr_matrix_rank_test(&z, 1, 0.05), Err(Error::ZeroSamples)));
    }

    #[test]
    fn gof_needs_three_axes() {
        let m = table(vec![2, 2], vec![0.25; 4], 100);
        assert!(matches!(
            tensor_rank_gof_test(&m, 1, &CpConfig::default(), 0.05),
            Err(Error::TooFewAxes(2))
        ));
    }

    #[test]
    fn gof_exact_rank_one() {
        let ab = outer(&[0.2, 0.3, 0.5], &[0.5, 0.5]);
        let abc = outer(&ab, &[0.1, 0.6, 0.3]);
        let t = table(vec![3, 2, 3], abc, 50_000);
        let res = tensor_rank_gof_test(&t, 1, &CpConfig::default(), 0.05).unwrap();
        assert!(res.statistic < 1e-6);
        assert!(res.accept);
    }

    #[test]
    fn dof_rules() {
        assert_eq!(DofRule::Pairwise.dof(&[3, 3], 2), 1);
        assert_eq!(DofRule::Pairwise.dof(&[4, 4, 4], 3), 16);
        assert_eq!(DofRule::LatentClass.dof(&[4, 4, 4], 3), 64 - 3 * 10);
        assert_eq!(DofRule::LatentClass.dof(&[2, 2, 2], 4), 1);
    }
}
