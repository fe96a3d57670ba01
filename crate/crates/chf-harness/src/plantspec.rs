//! Plants from JSON descriptions.
//!
//! A plant description is an object with a `family` tag and the fields of
//! that family; every family takes an optional `half_width` (default 5.0)
//! for the centred axis-aligned operating box.
//!
//! * `{"family": "unit", "dim": 2}`: `x' = u`.
//! * `{"family": "linear", "b": [[...], ...], "offset": [...]}`: constant
//!   inverse dynamics `u = B x' + b`; `b` square, `offset` matching.
//! * `{"family": "polynomial", "b": [[...], ...], "coeffs": [[...], ...]}`:
//!   a constant `B` with a per-axis polynomial offset; `coeffs[i][k]`
//!   multiplies `x_i^k`.
//! * `{"family": "harmonic", "omega": 1.0}`: the oscillator
//!   `q'' = -omega^2 q + u`, order-reduced to the 2-d plant on `(q, q')`.
//! * `{"family": "arm", "base": 2.0, "variation": 0.4, "coupling": 0.3,
//!   "gravity": 0.5}`: the two-joint arm analogue with
//!   configuration-dependent inertia.

use chf_core::domain::AxisBox;
use chf_core::plant::{families, Plant};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use crate::error::{HarnessError, HarnessResult};

fn f64_field(obj: &Value, name: &str, default: Option<f64>) -> HarnessResult<f64> {
    match obj.get(name) {
        None => default.ok_or_else(|| HarnessError::param(name, "missing plant field")),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| HarnessError::param(name, format!("expected a finite number, got {v}"))),
    }
}

fn matrix_field(obj: &Value, name: &str) -> HarnessResult<DMatrix<f64>> {
    let rows = obj
        .get(name)
        .and_then(Value::as_array)
        .ok_or_else(|| HarnessError::param(name, "expected an array of rows"))?;
    let nrows = rows.len();
    if nrows == 0 {
        return Err(HarnessError::param(name, "matrix cannot be empty"));
    }
    let mut data = Vec::new();
    let mut ncols = None;
    for row in rows {
        let cells = row
            .as_array()
            .ok_or_else(|| HarnessError::param(name, "each row must be an array"))?;
        match ncols {
            None => ncols = Some(cells.len()),
            Some(n) if n != cells.len() => {
                return Err(HarnessError::param(name, "ragged rows"));
            }
            _ => {}
        }
        for cell in cells {
            data.push(cell.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                HarnessError::param(name, format!("expected a finite number, got {cell}"))
            })?);
        }
    }
    Ok(DMatrix::from_row_slice(nrows, ncols.unwrap_or(0), &data))
}

fn vector_field(obj: &Value, name: &str) -> HarnessResult<DVector<f64>> {
    let cells = obj
        .get(name)
        .and_then(Value::as_array)
        .ok_or_else(|| HarnessError::param(name, "expected an array"))?;
    let mut data = Vec::with_capacity(cells.len());
    for cell in cells {
        data.push(cell.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
            HarnessError::param(name, format!("expected a finite number, got {cell}"))
        })?);
    }
    Ok(DVector::from_vec(data))
}

/// Build a plant from its JSON description.
pub fn plant_from_json(desc: &Value) -> HarnessResult<Plant> {
    let family = desc
        .get("family")
        .and_then(Value::as_str)
        .ok_or_else(|| HarnessError::param("family", "plant description needs a family tag"))?;
    let half = f64_field(desc, "half_width", Some(5.0))?;
    let plant = match family {
        "unit" => {
            let dim = f64_field(desc, "dim", Some(2.0))? as usize;
            families::unit(dim, AxisBox::centred(dim, half))?
        }
        "linear" => {
            let b = matrix_field(desc, "b")?;
            let offset = vector_field(desc, "offset")?;
            let dim = b.nrows();
            families::linear(b, offset, AxisBox::centred(dim, half))?
        }
        "polynomial" => {
            let b = matrix_field(desc, "b")?;
            let coeff_rows = desc
                .get("coeffs")
                .and_then(Value::as_array)
                .ok_or_else(|| HarnessError::param("coeffs", "expected an array of arrays"))?;
            let mut coeffs = Vec::with_capacity(coeff_rows.len());
            for row in coeff_rows {
                let cells = row
                    .as_array()
                    .ok_or_else(|| HarnessError::param("coeffs", "each row must be an array"))?;
                let mut parsed = Vec::with_capacity(cells.len());
                for cell in cells {
                    parsed.push(cell.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                        HarnessError::param("coeffs", format!("expected a finite number, got {cell}"))
                    })?);
                }
                coeffs.push(parsed);
            }
            let dim = b.nrows();
            families::polynomial_offset(b, coeffs, AxisBox::centred(dim, half))?
        }
        "harmonic" => {
            let omega = f64_field(desc, "omega", Some(1.0))?;
            families::harmonic_oscillator(omega, AxisBox::centred(2, half))?
        }
        "arm" => {
            let base = f64_field(desc, "base", Some(2.0))?;
            let variation = f64_field(desc, "variation", Some(0.4))?;
            let coupling = f64_field(desc, "coupling", Some(0.3))?;
            let gravity = f64_field(desc, "gravity", Some(0.5))?;
            families::mass_varying_arm(base, variation, coupling, gravity, AxisBox::centred(2, half))?
        }
        other => {
            return Err(HarnessError::param(
                "family",
                format!("unknown plant family '{other}'"),
            ));
        }
    };
    Ok(plant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn builds_every_family() {
        let descs = [
            json!({"family": "unit", "dim": 3}),
            json!({"family": "linear", "b": [[2.0, 0.0], [0.0, 1.0]], "offset": [0.1, -0.2]}),
            json!({"family": "polynomial", "b": [[1.0]], "coeffs": [[0.0, 0.5, 0.1]]}),
            json!({"family": "harmonic", "omega": 2.0, "half_width": 3.0}),
            json!({"family": "arm"}),
        ];
        let dims = [3, 2, 1, 2, 2];
        for (desc, dim) in descs.iter().zip(dims) {
            let plant = plant_from_json(desc).unwrap();
            assert_eq!(plant.state_dim(), dim, "{desc}");
        }
    }

    #[test]
    fn rejects_unknown_family_and_bad_fields() {
        assert!(plant_from_json(&json!({"family": "rocket"})).is_err());
        assert!(plant_from_json(&json!({"family": "linear", "b": [[1.0, 0.0]], "offset": [0.0]})).is_err());
        assert!(plant_from_json(&json!({"dim": 2})).is_err());
    }
}
