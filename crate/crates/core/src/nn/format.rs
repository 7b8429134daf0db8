//! `FPNN` model files.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic      b"FPNN"
//! version    u32 (= 1)
//! layers     u32
//! per layer  input u32, output u32, activation u8 (0 identity, 1 relu, 2 tanh),
//!            weights f32 × input·output (row-major, input × output),
//!            bias f32 × output
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{Activation, Layer, LayerSpec, Model, NetworkSpec};
use crate::error::{Error, Result};
use crate::io::{write_atomic, Reader};
use crate::linalg::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"FPNN";
pub const MODEL_VERSION: u32 = 1;

pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.spec().depth() as u32).to_le_bytes());
    for (layer, spec) in model.layers().iter().zip(model.spec().layers()) {
        out.extend_from_slice(&(spec.input as u32).to_le_bytes());
        out.extend_from_slice(&(spec.output as u32).to_le_bytes());
        out.push(spec.activation.tag());
        for v in layer.weights.as_slice().iter().chain(layer.bias.as_slice()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes, "model file");
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::CorruptFile("model file does not start with FPNN".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::CorruptFile(format!("unsupported model version {version}")));
    }
    let depth = r.u32()? as usize;
    let mut specs = Vec::with_capacity(depth.min(1024));
    let mut layers = Vec::with_capacity(depth.min(1024));
    for i in 0..depth {
        let input = r.u32()? as usize;
        let output = r.u32()? as usize;
        let tag = r.u8()?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::CorruptFile(format!("layer {i}: unknown activation tag {tag}")))?;
        let weights = r.f32s(input * output)?;
        let bias = r.f32s(output)?;
        specs.push(LayerSpec {
            input,
            output,
            activation,
        });
        layers.push(Layer {
            weights: Matrix::new(input, output, weights)?,
            bias: Matrix::new(1, output, bias)?,
        });
    }
    if !r.is_empty() {
        return Err(Error::CorruptFile("trailing bytes after last layer".into()));
    }
    let spec = NetworkSpec::new(specs).map_err(|e| Error::CorruptFile(e.to_string()))?;
    Model::from_layers(spec, layers)
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    write_atomic(path, &model_to_bytes(model))
}

pub fn read_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

/// SHA-256 of the serialized model.
pub fn model_fingerprint(model: &Model) -> [u8; 32] {
    Sha256::digest(model_to_bytes(model)).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::init_params;

    #[test]
    fn round_trip_is_exact() {
        let spec = NetworkSpec::mlp(3, &[(5, Activation::Relu), (4, Activation::Tanh)], 2).unwrap();
        let model = init_params(&spec, 21);
        let bytes = model_to_bytes(&model);
        assert_eq!(&bytes[..4], b"FPNN");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(model_from_bytes(&bytes).unwrap(), model);
    }

    #[test]
    fn layout_of_a_single_layer() {
        let spec = NetworkSpec::new(vec![LayerSpec {
            input: 1,
            output: 2,
            activation: Activation::Tanh,
        }])
        .unwrap();
        let model = Model::from_layers(
            spec,
            vec![Layer {
                weights: Matrix::from_rows(&[vec![1.0, -2.0]]),
                bias: Matrix::from_rows(&[vec![0.5, 0.0]]),
            }],
        )
        .unwrap();
        let bytes = model_to_bytes(&model);
        let mut expected = b"FPNN".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.push(2);
        for v in [1.0f32, -2.0, 0.5, 0.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let spec = NetworkSpec::mlp(2, &[(3, Activation::Relu)], 2).unwrap();
        let bytes = model_to_bytes(&init_params(&spec, 0));
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(model_from_bytes(&bad), Err(Error::CorruptFile(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(model_from_bytes(&extra), Err(Error::CorruptFile(_))));
    }
}
