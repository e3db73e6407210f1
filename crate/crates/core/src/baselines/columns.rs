use super::Matrix;
use crate::{Error, Result};

/// Columns kept after dropping those that are exactly zero in every training row.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub n_input: usize,
    pub kept: Vec<usize>,
}

impl ColumnMap {
    pub fn fit(train: &Matrix) -> Result<Self> {
        let mut nonzero = vec![false; train.cols()];
        for r in 0..train.rows() {
            for (nz, &v) in nonzero.iter_mut().zip(train.row(r)) {
                *nz |= v != 0.0;
            }
        }
        let kept: Vec<usize> = (0..train.cols()).filter(|&c| nonzero[c]).collect();
        if kept.is_empty() {
            return Err(Error::Degenerate(format!(
                "all {} columns are zero in the training matrix",
                train.cols()
            )));
        }
        Ok(ColumnMap {
            n_input: train.cols(),
            kept,
        })
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.n_input {
            return Err(Error::Invalid(format!(
                "matrix has {} columns, column map expects {}",
                m.cols(),
                self.n_input
            )));
        }
        let mut out = Vec::with_capacity(m.rows() * self.kept.len());
        for r in 0..m.rows() {
            let row = m.row(r);
            out.extend(self.kept.iter().map(|&c| row[c]));
        }
        Matrix::from_vec(m.rows(), self.kept.len(), out)
    }

    /// Re-inserts the dropped columns as zeros.
    pub fn restore(&self, reduced: &Matrix) -> Result<Matrix> {
        if reduced.cols() != self.kept.len() {
            return Err(Error::Invalid(format!(
                "reduced matrix has {} columns, expected {}",
                reduced.cols(),
                self.kept.len()
            )));
        }
        let mut out = Matrix::zeros(reduced.rows(), self.n_input);
        for r in 0..reduced.rows() {
            let src = reduced.row(r).to_vec();
            let dst = out.row_mut(r);
            for (&c, v) in self.kept.iter().zip(src) {
                dst[c] = v;
            }
        }
        Ok(out)
    }
}

pub fn remove_zero_columns(train: &Matrix) -> Result<(Matrix, ColumnMap)> {
    let map = ColumnMap::fit(train)?;
    Ok((map.apply(train)?, map))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_train_zero_columns() {
        let train = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 0.0, 3.0]]).unwrap();
        let (reduced, map) = remove_zero_columns(&train).unwrap();
        assert_eq!(map.kept, vec![0, 2]);
        assert_eq!(reduced.data(), [1.0, 2.0, 0.0, 3.0]);
        assert_eq!(map.restore(&reduced).unwrap(), train);
        let test = Matrix::from_rows(&[vec![1.0, 9.0, 1.0]]).unwrap();
        assert_eq!(map.apply(&test).unwrap().data(), [1.0, 1.0]);
    }

    #[test]
    fn identity_and_errors() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(remove_zero_columns(&m).unwrap().1.kept, vec![0, 1]);
        assert!(remove_zero_columns(&Matrix::zeros(2, 3)).is_err());
    }
}
