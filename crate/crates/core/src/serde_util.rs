//! Serde adapters: matrices as row-major arrays-of-arrays, vectors as flat
//! arrays.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let data: Vec<f64> = Vec::deserialize(d)?;
        Ok(DVector::from_vec(data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Holder {
        #[serde(with = "matrix")]
        m: DMatrix<f64>,
        #[serde(with = "vector")]
        v: DVector<f64>,
    }

    #[test]
    fn matrix_round_trips_row_major() {
        let h = Holder {
            m: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            v: DVector::from_row_slice(&[7.0, 8.0]),
        };
        let json = serde_json::to_string(&h).unwrap();
        assert!(json.contains("[[1.0,2.0,3.0],[4.0,5.0,6.0]]"));
        let back: Holder = serde_json::from_str(&json).unwrap();
        assert_eq!(back.m, h.m);
        assert_eq!(back.v, h.v);
    }
}
