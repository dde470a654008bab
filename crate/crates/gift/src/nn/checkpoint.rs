//! Parameter map serialization: name -> shape + row-major values.
//!
//! JSON with shortest-round-trip float printing, so reloads are bit-exact
//! for every finite value.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{NnError, Tensor};
use super::Parameter;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn params_to_map(params: &[&Parameter]) -> BTreeMap<String, ParamRecord> {
    params
        .iter()
        .map(|p| {
            (
                p.name.clone(),
                ParamRecord {
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                },
            )
        })
        .collect()
}

/// Restore parameter values by name. Every parameter must be present with a
/// matching shape; unknown names in the map are rejected.
pub fn load_params(
    map: &BTreeMap<String, ParamRecord>,
    params: &mut [&mut Parameter],
) -> Result<(), NnError> {
    if map.len() != params.len() {
        return Err(NnError::Invalid(format!(
            "checkpoint has {} parameters, model expects {}",
            map.len(),
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let rec = map
            .get(&p.name)
            .ok_or_else(|| NnError::Invalid(format!("checkpoint missing parameter {}", p.name)))?;
        if rec.shape != p.value.shape() {
            return Err(NnError::Invalid(format!(
                "parameter {} shape {:?} does not match checkpoint {:?}",
                p.name,
                p.value.shape(),
                rec.shape
            )));
        }
        p.value = Tensor::from_vec(&rec.shape, rec.data.clone())
            .map_err(|e| NnError::Invalid(format!("parameter {}: {e}", p.name)))?;
        p.grad = Tensor::zeros(&rec.shape);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let values = vec![0.1, -0.2, 1.0 / 3.0, 1e-300, -0.0, 4.0f64.sqrt() * 0.7];
        let p = Parameter::new("w", Tensor::from_vec(&[2, 3], values.clone()).unwrap());
        let map = params_to_map(&[&p]);
        let json = serde_json::to_string(&map).unwrap();
        let back: BTreeMap<String, ParamRecord> = serde_json::from_str(&json).unwrap();
        let mut q = Parameter::new("w", Tensor::zeros(&[2, 3]));
        load_params(&back, &mut [&mut q]).unwrap();
        for (a, b) in q.value.data().iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Parameter::new("w", Tensor::zeros(&[2, 2]));
        let map = params_to_map(&[&p]);
        let mut q = Parameter::new("w", Tensor::zeros(&[4]));
        assert!(load_params(&map, &mut [&mut q]).is_err());
    }

    #[test]
    fn missing_parameter_rejected() {
        let p = Parameter::new("w", Tensor::zeros(&[1]));
        let map = params_to_map(&[&p]);
        let mut q = Parameter::new("other", Tensor::zeros(&[1]));
        assert!(load_params(&map, &mut [&mut q]).is_err());
    }
}
