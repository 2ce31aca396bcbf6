//! The incomplete data matrix, its presence mask, and missingness patterns.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::rng::RngStream;
use crate::Result;

/// Sentinel stored in missing cells. The presence mask, not the sentinel,
/// decides whether a cell is observed.
pub const MISSING: f64 = f64::NAN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// An n×p numeric table with a per-cell presence mask.
///
/// Values are stored column-major. Missing cells hold [`MISSING`] and are
/// never returned by [`DataMatrix::get`].
#[derive(Clone, Debug)]
pub struct DataMatrix {
    n_rows: usize,
    n_cols: usize,
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    values: Vec<f64>,
    present: Vec<bool>,
}

impl PartialEq for DataMatrix {
    /// Equal shape, names, kinds and mask, and bitwise-equal observed values.
    fn eq(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.names == other.names
            && self.kinds == other.kinds
            && self.present == other.present
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.present)
                .all(|((a, b), &p)| !p || a.to_bits() == b.to_bits())
    }
}

/// Kind inference rule: binary iff every present value is 0 or 1 (and at
/// least one value is present).
pub fn infer_kind<'a>(present_values: impl IntoIterator<Item = &'a f64>) -> ColumnKind {
    let mut any = false;
    for &v in present_values {
        any = true;
        if v != 0.0 && v != 1.0 {
            return ColumnKind::Continuous;
        }
    }
    if any {
        ColumnKind::Binary
    } else {
        ColumnKind::Continuous
    }
}

impl DataMatrix {
    /// Builds a matrix from column-major `values` and `present`. Missing cells
    /// are overwritten with the sentinel; kinds are inferred when `None`.
    pub fn new(
        names: Vec<String>,
        kinds: Option<Vec<ColumnKind>>,
        mut values: Vec<f64>,
        present: Vec<bool>,
    ) -> Result<Self> {
        let n_cols = names.len();
        if n_cols == 0 {
            return Err(invalid!("a data matrix needs at least one column"));
        }
        if values.len() != present.len() || values.len() % n_cols != 0 {
            return Err(invalid!(
                "values ({}) and mask ({}) must both hold n x {} cells",
                values.len(),
                present.len(),
                n_cols
            ));
        }
        let n_rows = values.len() / n_cols;
        for (v, &p) in values.iter_mut().zip(&present) {
            if !p {
                *v = MISSING;
            } else if !v.is_finite() {
                return Err(invalid!("observed cells must be finite"));
            }
        }
        let kinds = match kinds {
            Some(k) => {
                if k.len() != n_cols {
                    return Err(invalid!("{} column kinds given for {} columns", k.len(), n_cols));
                }
                k
            }
            None => (0..n_cols)
                .map(|j| {
                    let r = j * n_rows..(j + 1) * n_rows;
                    infer_kind(values[r.clone()].iter().zip(&present[r]).filter(|(_, &p)| p).map(|(v, _)| v))
                })
                .collect(),
        };
        let dm = DataMatrix {
            n_rows,
            n_cols,
            names,
            kinds,
            values,
            present,
        };
        dm.check_binary()?;
        Ok(dm)
    }

    /// Fully observed matrix from columns.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(invalid!("{} names for {} columns", names.len(), columns.len()));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(invalid!("columns have unequal lengths"));
        }
        let values: Vec<f64> = columns.into_iter().flatten().collect();
        let present = alloc::vec![true; values.len()];
        Self::new(names, None, values, present)
    }

    /// Matrix from rows of optional cells (`None` = missing).
    pub fn from_rows(names: Vec<String>, rows: &[Vec<Option<f64>>], kinds: Option<Vec<ColumnKind>>) -> Result<Self> {
        let p = names.len();
        let n = rows.len();
        let mut values = alloc::vec![MISSING; n * p];
        let mut present = alloc::vec![false; n * p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(invalid!("row {} has {} cells, expected {}", i, row.len(), p));
            }
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    values[j * n + i] = *v;
                    present[j * n + i] = true;
                }
            }
        }
        Self::new(names, kinds, values, present)
    }

    fn check_binary(&self) -> Result<()> {
        for j in 0..self.n_cols {
            if self.kinds[j] != ColumnKind::Binary {
                continue;
            }
            for i in 0..self.n_rows {
                if let Some(v) = self.get(i, j) {
                    if v != 0.0 && v != 1.0 {
                        return Err(invalid!(
                            "binary column `{}` holds {} at row {}",
                            self.names[j],
                            v,
                            i
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Same data under an explicit kind schema (overrides inference).
    pub fn with_kinds(mut self, kinds: Vec<ColumnKind>) -> Result<Self> {
        if kinds.len() != self.n_cols {
            return Err(invalid!("{} column kinds given for {} columns", kinds.len(), self.n_cols));
        }
        self.kinds = kinds;
        self.check_binary()?;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        j * self.n_rows + i
    }

    /// Observed value at (row, column); `None` when missing.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.idx(i, j);
        if self.present[k] {
            Some(self.values[k])
        } else {
            None
        }
    }

    #[inline]
    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.present[self.idx(i, j)]
    }

    /// Column-major presence mask.
    pub fn mask(&self) -> &[bool] {
        &self.present
    }

    /// Raw column including sentinels; only for completed matrices.
    #[inline]
    pub(crate) fn column_raw(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    /// Column values when the column is fully observed.
    pub fn complete_column(&self, j: usize) -> Option<&[f64]> {
        let r = j * self.n_rows..(j + 1) * self.n_rows;
        if self.present[r.clone()].iter().all(|&p| p) {
            Some(&self.values[r])
        } else {
            None
        }
    }

    /// Row-major copy of row `i` with `None` for missing cells.
    pub fn row(&self, i: usize) -> Vec<Option<f64>> {
        (0..self.n_cols).map(|j| self.get(i, j)).collect()
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.values[k] = v;
        self.present[k] = true;
    }

    pub(crate) fn set_missing(&mut self, i: usize, j: usize) {
        let k = self.idx(i, j);
        self.values[k] = MISSING;
        self.present[k] = false;
    }

    pub fn observed_rows(&self, j: usize) -> Vec<usize> {
        (0..self.n_rows).filter(|&i| self.is_present(i, j)).collect()
    }

    pub fn missing_rows(&self, j: usize) -> Vec<usize> {
        (0..self.n_rows).filter(|&i| !self.is_present(i, j)).collect()
    }

    pub fn missing_count(&self, j: usize) -> usize {
        self.present[j * self.n_rows..(j + 1) * self.n_rows]
            .iter()
            .filter(|&&p| !p)
            .count()
    }

    pub fn is_complete(&self) -> bool {
        self.present.iter().all(|&p| p)
    }

    /// Rows in which every variable is missing.
    pub fn fully_missing_rows(&self) -> Vec<usize> {
        (0..self.n_rows)
            .filter(|&i| (0..self.n_cols).all(|j| !self.is_present(i, j)))
            .collect()
    }

    /// Column-major copy of the values of a complete matrix.
    pub fn to_complete_columns(&self) -> Result<Vec<Vec<f64>>> {
        if !self.is_complete() {
            return Err(invalid!("matrix has missing cells"));
        }
        Ok((0..self.n_cols).map(|j| self.column_raw(j).to_vec()).collect())
    }
}

/// Row blocks of the two-variable pattern: `a` fully observed, `b` missing
/// the second variable, `c` missing the first. No row misses both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BivariatePattern {
    pub n_a: usize,
    pub n_b: usize,
    pub n_c: usize,
}

impl BivariatePattern {
    pub const fn new(n_a: usize, n_b: usize, n_c: usize) -> Self {
        BivariatePattern { n_a, n_b, n_c }
    }

    pub fn n_rows(&self) -> usize {
        self.n_a + self.n_b + self.n_c
    }

    pub fn block_a(&self) -> Range<usize> {
        0..self.n_a
    }

    pub fn block_b(&self) -> Range<usize> {
        self.n_a..self.n_a + self.n_b
    }

    pub fn block_c(&self) -> Range<usize> {
        self.n_a + self.n_b..self.n_rows()
    }

    /// Whether `dm`'s mask is exactly this pattern.
    pub fn matches(&self, mask_of: &DataMatrix) -> bool {
        if mask_of.n_cols() != 2 || mask_of.n_rows() != self.n_rows() {
            return false;
        }
        (0..self.n_rows()).all(|i| {
            let (px, py) = (mask_of.is_present(i, 0), mask_of.is_present(i, 1));
            if i < self.n_a {
                px && py
            } else if i < self.n_a + self.n_b {
                px && !py
            } else {
                !px && py
            }
        })
    }
}

/// Missing-completely-at-random mask: every cell independently becomes
/// missing with probability `rate` (one uniform per cell, column-major).
pub fn mcar_mask(dm: &DataMatrix, rate: f64, rng: &mut RngStream) -> Result<DataMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid!("MCAR rate must lie in [0, 1), got {rate}"));
    }
    if !dm.is_complete() {
        return Err(invalid!("MCAR masking expects a fully observed matrix"));
    }
    let mut out = dm.clone();
    for j in 0..dm.n_cols {
        for i in 0..dm.n_rows {
            if rng.uniform() < rate {
                out.set_missing(i, j);
            }
        }
    }
    Ok(out)
}

/// Applies the bivariate block pattern to a fully observed two-column matrix.
pub fn bivariate_pattern(pat: &BivariatePattern, dm: &DataMatrix) -> Result<DataMatrix> {
    if dm.n_cols() != 2 {
        return Err(invalid!("bivariate pattern needs 2 columns, got {}", dm.n_cols()));
    }
    if dm.n_rows() != pat.n_rows() {
        return Err(invalid!(
            "pattern covers {} rows but matrix has {}",
            pat.n_rows(),
            dm.n_rows()
        ));
    }
    if !dm.is_complete() {
        return Err(invalid!("bivariate pattern expects a fully observed matrix"));
    }
    let mut out = dm.clone();
    for i in pat.block_b() {
        out.set_missing(i, 1);
    }
    for i in pat.block_c() {
        out.set_missing(i, 0);
    }
    Ok(out)
}

/// Rows where column `j` is missing and every other column is observed.
pub fn iota_set(dm: &DataMatrix, j: usize) -> Vec<usize> {
    (0..dm.n_rows())
        .filter(|&i| !dm.is_present(i, j) && (0..dm.n_cols()).all(|k| k == j || dm.is_present(i, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| alloc::format!("v{j}")).collect()
    }

    fn complete(n: usize, p: usize) -> DataMatrix {
        let cols = (0..p).map(|j| (0..n).map(|i| (i * p + j) as f64 + 0.5).collect()).collect();
        DataMatrix::from_columns(names(p), cols).unwrap()
    }

    #[test]
    fn missing_cells_hold_sentinel_and_are_hidden() {
        let dm = DataMatrix::from_rows(names(2), &[vec![Some(1.0), None], vec![Some(2.0), Some(3.0)]], None).unwrap();
        assert_eq!(dm.get(0, 1), None);
        assert!(dm.column_raw(1)[0].is_nan());
        assert_eq!(dm.get(1, 1), Some(3.0));
    }

    #[test]
    fn binary_inference() {
        let dm = DataMatrix::from_columns(
            vec!["b".to_string(), "c".to_string()],
            vec![vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]],
        )
        .unwrap();
        assert_eq!(dm.kinds(), &[ColumnKind::Binary, ColumnKind::Continuous]);
        // The schema can override an all-0/1 continuous column.
        let dm = dm.with_kinds(vec![ColumnKind::Continuous; 2]).unwrap();
        assert_eq!(dm.kinds()[0], ColumnKind::Continuous);
    }

    #[test]
    fn binary_kind_rejects_other_values() {
        let dm = complete(3, 1);
        assert!(dm.with_kinds(vec![ColumnKind::Binary]).is_err());
    }

    #[test]
    fn mcar_zero_rate_is_identity() {
        let dm = complete(20, 3);
        let out = mcar_mask(&dm, 0.0, &mut RngStream::new(1)).unwrap();
        assert_eq!(out, dm);
    }

    #[test]
    fn mcar_rate_one_rejected() {
        let dm = complete(5, 2);
        assert!(mcar_mask(&dm, 1.0, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn mcar_is_deterministic_and_preserves_observed() {
        let dm = complete(50, 4);
        let a = mcar_mask(&dm, 0.3, &mut RngStream::new(5)).unwrap();
        let b = mcar_mask(&dm, 0.3, &mut RngStream::new(5)).unwrap();
        assert_eq!(a.mask(), b.mask());
        for j in 0..4 {
            for i in 0..50 {
                if let Some(v) = a.get(i, j) {
                    assert_eq!(v.to_bits(), dm.get(i, j).unwrap().to_bits());
                }
            }
        }
    }

    #[test]
    fn bivariate_pattern_blocks() {
        let pat = BivariatePattern::new(200, 80, 80);
        let out = bivariate_pattern(&pat, &complete(360, 2)).unwrap();
        assert_eq!((0..360).filter(|&i| out.is_present(i, 0) && out.is_present(i, 1)).count(), 200);
        assert_eq!(out.missing_count(1), 80);
        assert_eq!(out.missing_count(0), 80);
        assert!(pat.matches(&out));
        assert_eq!(iota_set(&out, 1), (200..280).collect::<Vec<_>>());
        assert_eq!(iota_set(&out, 0), (280..360).collect::<Vec<_>>());
    }

    #[test]
    fn bivariate_pattern_degenerate_and_minimal() {
        let full = complete(7, 2);
        assert!(bivariate_pattern(&BivariatePattern::new(7, 0, 0), &full).unwrap().is_complete());
        let out = bivariate_pattern(&BivariatePattern::new(0, 1, 1), &complete(2, 2)).unwrap();
        assert_eq!(
            [out.is_present(0, 0), out.is_present(0, 1), out.is_present(1, 0), out.is_present(1, 1)],
            [true, false, false, true]
        );
        assert!(bivariate_pattern(&BivariatePattern::new(1, 1, 1), &full).is_err());
        assert!(bivariate_pattern(&BivariatePattern::new(7, 0, 0), &complete(7, 3)).is_err());
    }

    #[test]
    fn iota_excludes_rows_missing_everything() {
        let dm = DataMatrix::from_rows(
            names(2),
            &[vec![None, None], vec![Some(1.0), None], vec![None, Some(2.0)], vec![Some(1.0), Some(1.0)]],
            None,
        )
        .unwrap();
        assert_eq!(iota_set(&dm, 0), vec![2]);
        assert_eq!(iota_set(&dm, 1), vec![1]);
        assert_eq!(dm.fully_missing_rows(), vec![0]);
        assert!(iota_set(&complete(4, 2), 0).is_empty());
    }
}
