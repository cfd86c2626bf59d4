//! In-memory dataset: locations, multivariate outcomes with missing entries,
//! and covariates shared by all outcomes.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mesh::find_duplicate;
use crate::outcomes::Family;

/// Locations closer than this are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `n × d` coordinates.
    pub coords: Matrix<f64>,
    /// `n × q` outcomes; `NaN` marks a missing entry.
    pub y: Matrix<f64>,
    /// `n × p` covariates, shared by every outcome.
    pub covariates: Matrix<f64>,
    pub coord_names: Vec<String>,
    pub outcome_names: Vec<String>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.coords.rows()
    }

    pub fn d(&self) -> usize {
        self.coords.cols()
    }

    pub fn q(&self) -> usize {
        self.y.cols()
    }

    pub fn p(&self) -> usize {
        self.covariates.cols()
    }

    #[inline]
    pub fn is_observed(&self, row: usize, j: usize) -> bool {
        !self.y[(row, j)].is_nan()
    }

    /// Rows with at least one observed outcome; these form the reference set.
    pub fn reference_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&r| (0..self.q()).any(|j| self.is_observed(r, j))).collect()
    }

    /// Rows whose outcomes are all missing.
    pub fn unobserved_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&r| (0..self.q()).all(|j| !self.is_observed(r, j))).collect()
    }

    /// Structural checks that do not depend on outcome families.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        if self.y.rows() != n || self.covariates.rows() != n {
            return Err(Error::Invalid("row counts of coordinates, outcomes and covariates differ".into()));
        }
        if !self.coords.is_finite() {
            return Err(Error::NonFinite("coordinates".into()));
        }
        if !self.covariates.is_finite() {
            return Err(Error::NonFinite("covariates".into()));
        }
        for j in 0..self.q() {
            if (0..n).all(|r| !self.is_observed(r, j)) {
                return Err(Error::Invalid(format!("outcome column {} has no observations", self.outcome_name(j))));
            }
        }
        if let Some((a, b)) = find_duplicate(&self.coords, DUPLICATE_TOL) {
            return Err(Error::DuplicateLocation { first: a, second: b });
        }
        Ok(())
    }

    /// Checks every observed entry against its outcome family.
    pub fn validate_families(&self, families: &[Family]) -> Result<()> {
        if families.len() != self.q() {
            return Err(Error::Config(format!("{} families given for {} outcomes", families.len(), self.q())));
        }
        for (j, &f) in families.iter().enumerate() {
            for r in 0..self.n() {
                if self.is_observed(r, j) {
                    f.check_support(self.y[(r, j)]).map_err(|e| Error::Invalid(format!(
                        "outcome {} at row {r}: {e}",
                        self.outcome_name(j)
                    )))?;
                }
            }
        }
        Ok(())
    }

    pub fn outcome_name(&self, j: usize) -> String {
        self.outcome_names.get(j).cloned().unwrap_or_else(|| format!("y{}", j + 1))
    }

    /// Copy with the listed `(row, outcome)` entries set missing.
    pub fn with_missing(&self, entries: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        for &(r, j) in entries {
            out.y[(r, j)] = f64::NAN;
        }
        out
    }
}
