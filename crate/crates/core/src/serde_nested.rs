//! Serde adapters that write matrices as nested JSON arrays (one array per row).

use ndarray::Array2;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn rows_of<T: Clone>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows<T: Clone, E: serde::de::Error>(rows: Vec<Vec<T>>, cols_hint: usize) -> Result<Array2<T>, E> {
    let n = rows.len();
    let cols = rows.first().map_or(cols_hint, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(E::custom("ragged nested array"));
    }
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(E::custom)
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        rows_of(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(rows, 0)
    }
}

pub mod bool_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Array2<bool>, s: S) -> Result<S::Ok, S::Error> {
        rows_of(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<bool>, D::Error> {
        let rows = Vec::<Vec<bool>>::deserialize(d)?;
        let m: Array2<bool> = from_rows(rows, 0)?;
        if m.nrows() != m.ncols() {
            return Err(D::Error::custom("adjacency must be square"));
        }
        Ok(m)
    }
}
