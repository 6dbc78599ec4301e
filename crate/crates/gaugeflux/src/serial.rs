//! JSON encodings of matrices.
//!
//! A matrix is either a nested array of numbers (real entries), a nested array
//! whose entries are `[re, im]` pairs, or an object `{"re": [[..]], "im": [[..]]}`.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::matcore::{CMatrix, C64};

fn bad(msg: &str) -> Error {
    Error::Validation(format!("matrix json: {msg}"))
}

fn entry(v: &Value) -> Result<C64> {
    match v {
        Value::Number(n) => Ok(C64::new(n.as_f64().ok_or_else(|| bad("number"))?, 0.0)),
        Value::Array(p) if p.len() == 2 => {
            let re = p[0].as_f64().ok_or_else(|| bad("re part"))?;
            let im = p[1].as_f64().ok_or_else(|| bad("im part"))?;
            Ok(C64::new(re, im))
        }
        _ => Err(bad("entry must be a number or [re, im]")),
    }
}

fn real_grid(v: &Value) -> Result<Vec<Vec<f64>>> {
    let rows = v.as_array().ok_or_else(|| bad("expected rows"))?;
    rows.iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| bad("expected a row"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| bad("expected a number")))
                .collect()
        })
        .collect()
}

pub fn matrix_from_json(v: &Value) -> Result<CMatrix> {
    if let Some(obj) = v.as_object() {
        let re = real_grid(obj.get("re").ok_or_else(|| bad("missing re"))?)?;
        let im = match obj.get("im") {
            Some(im) => real_grid(im)?,
            None => re.iter().map(|r| vec![0.0; r.len()]).collect(),
        };
        if re.len() != im.len() || re.iter().zip(&im).any(|(a, b)| a.len() != b.len()) {
            return Err(bad("re and im shapes differ"));
        }
        let rows: Vec<Vec<C64>> = re
            .iter()
            .zip(&im)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| C64::new(x, y)).collect())
            .collect();
        return CMatrix::from_rows(&rows).map_err(|e| bad(&e.to_string()));
    }
    let rows = v.as_array().ok_or_else(|| bad("expected an array of rows"))?;
    let rows: Vec<Vec<C64>> = rows
        .iter()
        .map(|r| r.as_array().ok_or_else(|| bad("expected a row"))?.iter().map(entry).collect())
        .collect::<Result<_>>()?;
    CMatrix::from_rows(&rows).map_err(|e| bad(&e.to_string()))
}

pub fn matrix_to_json(m: &CMatrix) -> Value {
    let part = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
        (0..m.rows()).map(|i| (0..m.cols()).map(|j| f(&m[(i, j)])).collect()).collect()
    };
    json!({ "re": part(|z| z.re), "im": part(|z| z.im) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_three_forms() {
        let a = matrix_from_json(&json!([[1, 0], [0, -1]])).unwrap();
        assert_eq!(a, CMatrix::diag_real(&[1.0, -1.0]));
        let b = matrix_from_json(&json!([[[0, 1]]])).unwrap();
        assert_eq!(b.as_scalar(), C64::new(0.0, 1.0));
        let c = matrix_from_json(&matrix_to_json(&b)).unwrap();
        assert_eq!(b, c);
        assert!(matrix_from_json(&json!([[1, 2], [3]])).is_err());
    }
}
