//! Teacher feature extraction into a [`FeatureCache`].

use crate::data::{Dataset, FeatureCache, FeatureGroup};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::nn::{model_fingerprint, Model};

const CHUNK_ROWS: usize = 4096;

/// Post-activation outputs of each requested layer for every example, in
/// dataset order. Group ids are the layer indices.
pub fn extract_features(model: &Model, dataset: &Dataset, layer_ids: &[usize]) -> Result<FeatureCache> {
    for &l in layer_ids {
        model.spec().check_layer(l)?;
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); layer_ids.len()];
    let n = dataset.len();
    let mut start = 0;
    while start < n {
        let rows: Vec<usize> = (start..(start + CHUNK_ROWS).min(n)).collect();
        let rec = model.forward(&dataset.inputs().select_rows(&rows), None)?;
        for (slot, &l) in layer_ids.iter().enumerate() {
            values[slot].extend_from_slice(rec.activations[l].as_slice());
        }
        start += CHUNK_ROWS;
    }
    let groups = layer_ids
        .iter()
        .zip(values)
        .map(|(&l, v)| {
            let width = model.spec().layers()[l].output;
            Ok(FeatureGroup {
                id: l as u32,
                values: Matrix::new(n, width, v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureCache::new(groups, dataset.fingerprint(), model_fingerprint(model))
}
