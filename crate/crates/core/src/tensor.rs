//! Dense multi-way probability tables.
//!
//! All tensors are stored row-major: the last axis varies fastest, so the flat
//! offset of multi-index `(c_0, .., c_{n-1})` is `Σ c_k · stride_k` with
//! `stride_k = Π_{l>k} dims_l`. Matricization and every grouping of axes
//! (e.g. vectorized conditioning sets) follow the same convention.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating that a table sums to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A dense n-way array of reals, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::ShapeMismatch("tensor needs at least one axis".into()));
        }
        let len: usize = dims.iter().product();
        if len != values.len() || dims.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!(
                "dims {:?} imply {} entries, got {}",
                dims,
                len,
                values.len()
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self { dims, values: vec![0.0; len] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn n_axes(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.dims)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(self.strides())
            .map(|(&i, s)| i * s)
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.offset(index)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &DenseTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Reshape into a matrix whose rows enumerate `row_axes` (in the given
    /// order, row-major) and whose columns enumerate the remaining axes in
    /// ascending order.
    pub fn matricize(&self, row_axes: &[usize]) -> Result<DenseTensor> {
        let n = self.n_axes();
        check_axes(row_axes, n)?;
        if row_axes.is_empty() || row_axes.len() >= n {
            return Err(Error::InvalidAxes(format!(
                "row axes {:?} must be a strict non-empty subset of {} axes",
                row_axes, n
            )));
        }
        let col_axes: Vec<usize> = (0..n).filter(|a| !row_axes.contains(a)).collect();
        let mut order = row_axes.to_vec();
        order.extend_from_slice(&col_axes);
        let permuted = self.permute(&order)?;
        let rows: usize = row_axes.iter().map(|&a| self.dims[a]).product();
        let cols: usize = col_axes.iter().map(|&a| self.dims[a]).product();
        DenseTensor::new(vec![rows, cols], permuted.values)
    }

    /// Reorder axes so that output axis `k` is input axis `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<DenseTensor> {
        let n = self.n_axes();
        check_axes(order, n)?;
        if order.len() != n {
            return Err(Error::InvalidAxes(format!(
                "permutation {:?} must list all {} axes",
                order, n
            )));
        }
        let new_dims: Vec<usize> = order.iter().map(|&a| self.dims[a]).collect();
        let old_strides = self.strides();
        let mapped: Vec<usize> = order.iter().map(|&a| old_strides[a]).collect();
        let mut out = Vec::with_capacity(self.len());
        for_each_index(&new_dims, |idx| {
            let off: usize = idx.iter().zip(&mapped).map(|(i, s)| i * s).sum();
            out.push(self.values[off]);
        });
        DenseTensor::new(new_dims, out)
    }

    /// Sum out every axis not in `keep`; output axes follow the order of `keep`.
    pub fn marginalize(&self, keep: &[usize]) -> Result<DenseTensor> {
        let n = self.n_axes();
        check_axes(keep, n)?;
        if keep.is_empty() {
            return Err(Error::InvalidAxes("keep set is empty".into()));
        }
        let new_dims: Vec<usize> = keep.iter().map(|&a| self.dims[a]).collect();
        let new_strides = strides(&new_dims);
        let mut out = vec![0.0; new_dims.iter().product()];
        let mut flat = 0usize;
        for_each_index(&self.dims, |idx| {
            let off: usize = keep.iter().zip(&new_strides).map(|(&a, s)| idx[a] * s).sum();
            out[off] += self.values[flat];
            flat += 1;
        });
        DenseTensor::new(new_dims, out)
    }
}

/// Row-major strides for `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Visit every multi-index of `dims` in row-major order.
pub fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.iter().any(|&d| d == 0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        let mut k = dims.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn check_axes(axes: &[usize], n: usize) -> Result<()> {
    for (i, &a) in axes.iter().enumerate() {
        if a >= n {
            return Err(Error::InvalidAxes(format!("axis {} out of range for {} axes", a, n)));
        }
        if axes[..i].contains(&a) {
            return Err(Error::InvalidAxes(format!("axis {} repeated", a)));
        }
    }
    Ok(())
}

/// Joint probability table over a set of categorical variables.
///
/// `n_samples` is the number of rows the table was estimated from, or 0 for
/// tables computed exactly from a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTensor {
    table: DenseTensor,
    n_samples: usize,
    axis_vars: Vec<String>,
}

impl ContingencyTensor {
    pub fn new(
        dims: Vec<usize>,
        values: Vec<f64>,
        n_samples: usize,
        axis_vars: Vec<String>,
    ) -> Result<Self> {
        Self::from_dense(DenseTensor::new(dims, values)?, n_samples, axis_vars)
    }

    pub fn from_dense(table: DenseTensor, n_samples: usize, axis_vars: Vec<String>) -> Result<Self> {
        if axis_vars.len() != table.n_axes() {
            return Err(Error::ShapeMismatch(format!(
                "{} axis labels for {} axes",
                axis_vars.len(),
                table.n_axes()
            )));
        }
        if let Some((index, &value)) = table
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0))
        {
            return Err(Error::NonNegativityViolation { index, value });
        }
        let total = table.sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::ShapeMismatch(format!(
                "probability table sums to {}",
                total
            )));
        }
        Ok(Self { table, n_samples, axis_vars })
    }

    pub fn dims(&self) -> &[usize] {
        self.table.dims()
    }

    pub fn values(&self) -> &[f64] {
        self.table.values()
    }

    pub fn dense(&self) -> &DenseTensor {
        &self.table
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_axes(&self) -> usize {
        self.table.n_axes()
    }

    pub fn axis_vars(&self) -> &[String] {
        &self.axis_vars
    }

    /// Same table with a different nominal sample count. Used to run
    /// statistical tests against exact tables.
    pub fn with_samples(mut self, n_samples: usize) -> Self {
        self.n_samples = n_samples;
        self
    }

    /// Two-way view: rows enumerate `row_axes`, columns the remaining axes.
    pub fn matricize(&self, row_axes: &[usize]) -> Result<ContingencyTensor> {
        let table = self.table.matricize(row_axes)?;
        let cols: Vec<&str> = (0..self.n_axes())
            .filter(|a| !row_axes.contains(a))
            .map(|a| self.axis_vars[a].as_str())
            .collect();
        let rows: Vec<&str> = row_axes.iter().map(|&a| self.axis_vars[a].as_str()).collect();
        Ok(Self {
            table,
            n_samples: self.n_samples,
            axis_vars: vec![rows.join("*"), cols.join("*")],
        })
    }

    pub fn marginalize(&self, keep: &[usize]) -> Result<ContingencyTensor> {
        let table = self.table.marginalize(keep)?;
        Ok(Self {
            table,
            n_samples: self.n_samples,
            axis_vars: keep.iter().map(|&a| self.axis_vars[a].clone()).collect(),
        })
    }
}

/// Categorical data: `n_rows` samples over `names.len()` variables, stored
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDataset {
    names: Vec<String>,
    cards: Vec<usize>,
    codes: Vec<u32>,
}

impl CategoricalDataset {
    pub fn new(names: Vec<String>, cards: Vec<usize>, rows: &[Vec<u32>]) -> Result<Self> {
        let width = names.len();
        let mut codes = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidDataset(format!(
                    "row {} has {} fields, expected {}",
                    i,
                    row.len(),
                    width
                )));
            }
            codes.extend_from_slice(row);
        }
        Self::from_flat(names, cards, codes)
    }

    /// Build from row-major codes.
    pub fn from_flat(names: Vec<String>, cards: Vec<usize>, codes: Vec<u32>) -> Result<Self> {
        let width = names.len();
        if width == 0 {
            return Err(Error::InvalidDataset("no variables".into()));
        }
        if cards.len() != width {
            return Err(Error::InvalidDataset(format!(
                "{} cardinalities for {} variables",
                cards.len(),
                width
            )));
        }
        if let Some(c) = cards.iter().find(|&&c| c < 2) {
            return Err(Error::InvalidDataset(format!("cardinality {} < 2", c)));
        }
        if codes.len() % width != 0 {
            return Err(Error::InvalidDataset("ragged code buffer".into()));
        }
        for (i, &code) in codes.iter().enumerate() {
            let var = i % width;
            if code as usize >= cards[var] {
                return Err(Error::InvalidDataset(format!(
                    "code {} in column {} exceeds cardinality {}",
                    code, names[var], cards[var]
                )));
            }
        }
        Ok(Self { names, cards, codes })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.codes.len() / self.names.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let w = self.n_vars();
        &self.codes[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.codes.chunks_exact(self.n_vars())
    }

    /// Empirical joint distribution of `vars` (axes in the given order).
    pub fn contingency(&self, vars: &[usize]) -> Result<ContingencyTensor> {
        estimate_contingency(self, vars)
    }

    /// Read a comma-separated file: a header of labels followed by rows of
    /// integer codes. Cardinalities default to `max code + 1` (at least 2).
    pub fn read_csv(path: impl AsRef<Path>, cards: Option<Vec<usize>>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let names: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let mut codes = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != names.len() {
                return Err(Error::InvalidDataset(format!(
                    "record has {} fields, expected {}",
                    record.len(),
                    names.len()
                )));
            }
            for field in record.iter() {
                let code: u32 = field
                    .parse()
                    .map_err(|_| Error::InvalidDataset(format!("bad code {:?}", field)))?;
                codes.push(code);
            }
        }
        let cards = match cards {
            Some(c) => c,
            None => {
                let mut c = vec![2usize; names.len()];
                for (i, &code) in codes.iter().enumerate() {
                    let v = i % names.len();
                    c[v] = c[v].max(code as usize + 1);
                }
                c
            }
        };
        Self::from_flat(names, cards, codes)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(&self.names)?;
        let mut buf = Vec::with_capacity(self.n_vars());
        for row in self.rows() {
            buf.clear();
            buf.extend(row.iter().map(|c| c.to_string()));
            writer.write_record(&buf)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Empirical joint of the selected columns: each cell is count / N.
pub fn estimate_contingency(data: &CategoricalDataset, vars: &[usize]) -> Result<ContingencyTensor> {
    if vars.is_empty() {
        return Err(Error::EmptySelection);
    }
    for &v in vars {
        if v >= data.n_vars() {
            return Err(Error::IndexOutOfRange { index: v, len: data.n_vars() });
        }
    }
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::ZeroSamples);
    }
    let dims: Vec<usize> = vars.iter().map(|&v| data.cards[v]).collect();
    let st = strides(&dims);
    let mut counts = vec![0u64; dims.iter().product()];
    for row in data.rows() {
        let off: usize = vars.iter().zip(&st).map(|(&v, s)| row[v] as usize * s).sum();
        counts[off] += 1;
    }
    let values = counts.into_iter().map(|c| c as f64 / n as f64).collect();
    let labels = vars.iter().map(|&v| data.names[v].clone()).collect();
    ContingencyTensor::new(dims, values, n, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("X{}", i + 1)).collect()
    }

    #[test]
    fn degenerate_counts() {
        let rows = vec![vec![0u32]; 100];
        let data = CategoricalDataset::new(labels(1), vec![2], &rows).unwrap();
        let t = data.contingency(&[0]).unwrap();
        assert_eq!(t.values(), &[1.0, 0.0]);
        assert_eq!(t.n_samples(), 100);
    }

    #[test]
    fn uniform_counts() {
        let mut rows = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for _ in 0..25 {
                    rows.push(vec![a, b]);
                }
            }
        }
        let data = CategoricalDataset::new(labels(2), vec![2, 2], &rows).unwrap();
        let t = data.contingency(&[0, 1]).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn selection_errors() {
        let data = CategoricalDataset::new(labels(2), vec![2, 2], &[vec![0, 1]]).unwrap();
        assert!(matches!(data.contingency(&[]), Err(Error::EmptySelection)));
        assert!(matches!(
            data.contingency(&[2]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn codes_must_fit_cards() {
        let err = CategoricalDataset::new(labels(1), vec![2], &[vec![2]]);
        assert!(err.is_err());
    }

    #[test]
    fn matricize_identity_and_uniform() {
        let t = ContingencyTensor::new(
            vec![2, 3],
            vec![0.1, 0.2, 0.1, 0.3, 0.2, 0.1],
            10,
            labels(2),
        )
        .unwrap();
        let m = t.matricize(&[0]).unwrap();
        assert_eq!(m.dims(), &[2, 3]);
        assert_eq!(m.values(), t.values());

        let u = ContingencyTensor::new(vec![2, 2, 2], vec![0.125; 8], 0, labels(3)).unwrap();
        let m = u.matricize(&[0, 1]).unwrap();
        assert_eq!(m.dims(), &[4, 2]);
        assert!(m.values().iter().all(|&v| v == 0.125));
    }

    #[test]
    fn matricize_rejects_bad_axes() {
        let u = ContingencyTensor::new(vec![2, 2, 2], vec![0.125; 8], 0, labels(3)).unwrap();
        assert!(u.matricize(&[]).is_err());
        assert!(u.matricize(&[0, 1, 2]).is_err());
        assert!(u.matricize(&[3]).is_err());
    }

    #[test]
    fn marginalize_rows() {
        let t = ContingencyTensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4], 0, labels(2)).unwrap();
        let m = t.marginalize(&[0]).unwrap();
        assert!((m.values()[0] - 0.3).abs() < 1e-15);
        assert!((m.values()[1] - 0.7).abs() < 1e-15);
        let same = t.marginalize(&[0, 1]).unwrap();
        assert_eq!(same.values(), t.values());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rows = vec![vec![0, 2], vec![1, 0], vec![1, 1]];
        let data = CategoricalDataset::new(labels(2), vec![2, 3], &rows).unwrap();
        data.write_csv(&path).unwrap();
        let back = CategoricalDataset::read_csv(&path, None).unwrap();
        assert_eq!(back, data);
    }
}
