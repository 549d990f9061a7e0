use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Feature matrix plus response, the unit every learner consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, feature_names: Vec<String>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(Error::InvalidData(format!("empty dataset ({n}x{p})")));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: feature_names.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in dataset".into()));
        }
        Ok(Self {
            x,
            y,
            feature_names,
        })
    }

    /// Features named `x1..xp`.
    pub fn with_default_names(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let names = default_feature_names(x.ncols());
        Self::new(x, y, names)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Keep only the given feature columns, in the given order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.p()) {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: bad,
            });
        }
        let x = self.x.select(Axis(1), columns);
        let names = columns
            .iter()
            .map(|&c| self.feature_names[c].clone())
            .collect();
        Self::new(x, self.y.clone(), names)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Append a column, e.g. an engineered interaction term.
    pub fn with_column(&self, name: &str, column: Array1<f64>) -> Result<Self> {
        if column.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: column.len(),
            });
        }
        let mut x = Array2::zeros((self.n(), self.p() + 1));
        x.slice_mut(ndarray::s![.., ..self.p()]).assign(&self.x);
        x.column_mut(self.p()).assign(&column);
        let mut names = self.feature_names.clone();
        names.push(name.to_string());
        Self::new(x, self.y.clone(), names)
    }
}

pub fn default_feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Dataset::with_default_names(array![[1.0], [2.0]], array![1.0]).is_err());
        assert!(Dataset::with_default_names(array![[f64::NAN]], array![1.0]).is_err());
        assert!(Dataset::with_default_names(Array2::zeros((0, 2)), array![]).is_err());
    }

    #[test]
    fn selects_columns_by_name_order() {
        let d = Dataset::with_default_names(array![[1.0, 2.0, 3.0]], array![0.0]).unwrap();
        let s = d.select_features(&[2, 0]).unwrap();
        assert_eq!(s.feature_names(), &["x3".to_string(), "x1".to_string()]);
        assert_eq!(s.x(), &array![[3.0, 1.0]]);
    }
}
