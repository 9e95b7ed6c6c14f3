//! Row-major JSON encoding for nalgebra matrices and vectors, so artifacts
//! read naturally (`[[a, b], [c, d]]` rather than a flat column-major buffer).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>], ncols_if_empty: usize) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    let c = rows.first().map_or(ncols_if_empty, |r| r.len());
    if rows.iter().any(|r| r.len() != c) {
        return Err("ragged matrix rows".into());
    }
    Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
}

pub mod matrix {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<Vec<f64>>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Repr { rows: m.nrows(), cols: m.ncols(), data: to_rows(m) }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows {
            return Err(serde::de::Error::custom("row count mismatch"));
        }
        from_rows(&r.data, r.cols).map_err(serde::de::Error::custom)
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(v))
    }
}
