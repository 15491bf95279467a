//! Byte layouts for everything that crosses a simulated link.
//!
//! Model blob (little-endian throughout):
//!
//! ```text
//! "FLRM" | version u16 | quantized u8 | layer count u16
//! per layer: rows u32 | cols u32 | activation u8 | payload
//!   float payload:     rows*cols f32 weights (row-major), rows f32 biases
//!   quantized payload: rows*cols + rows u8 codes, f32 scale, f32 zero point
//! ```
//!
//! Quantization is affine per layer over weights and biases together:
//! `value = zero_point + code * scale`, with `zero_point = min` and
//! `scale = (max - min) / 255`.
//!
//! Deployment payload: model blob, then the reference confidences as a u32
//! count followed by f32 values. Upload payload: u32 row count, f32 row-major
//! features, one u8 label per row; the receiver knows the feature dimension.

use ndarray::{Array1, Array2};

use crate::dataset::{LabeledDataset, Provenance};
use crate::error::{FlareError, Result};
use crate::model::{Activation, Layer, ModelParams};
use crate::stats::ConfidenceSample;

pub const MAGIC: &[u8; 4] = b"FLRM";
pub const VERSION: u16 = 1;
/// Magic, version, quantized flag, layer count.
pub const HEADER_LEN: usize = 4 + 2 + 1 + 2;
/// Rows, cols, activation tag.
pub const LAYER_HEADER_LEN: usize = 4 + 4 + 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedModel {
    bytes: Vec<u8>,
    quantized: bool,
}

impl SerializedModel {
    /// Wraps raw bytes without validation (e.g. bytes received over a link).
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let quantized = bytes.get(6).copied() == Some(1);
        Self { bytes, quantized }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn byte_count(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn decode(&self) -> Result<ModelParams> {
        decode_model(&self.bytes)
    }
}

/// Serialized size of a float model with the given layer sizes.
pub fn float_model_size(sizes: &[usize]) -> usize {
    HEADER_LEN
        + sizes
            .windows(2)
            .map(|p| LAYER_HEADER_LEN + 4 * (p[0] * p[1] + p[1]))
            .sum::<usize>()
}

/// Serializes a model into the embedded blob format, optionally 8-bit quantized.
pub fn convert_model(model: &ModelParams, quantize: bool) -> SerializedModel {
    let mut out = Vec::with_capacity(float_model_size(&model.sizes()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(u8::from(quantize));
    out.extend_from_slice(&(model.layers().len() as u16).to_le_bytes());
    for layer in model.layers() {
        out.extend_from_slice(&(layer.output_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.input_dim() as u32).to_le_bytes());
        out.push(layer.activation.tag());
        if quantize {
            write_quantized(&mut out, layer);
        } else {
            for &v in layer.weights.iter().chain(layer.bias.iter()) {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    SerializedModel {
        bytes: out,
        quantized: quantize,
    }
}

fn write_quantized(out: &mut Vec<u8>, layer: &Layer) {
    let values = || layer.weights.iter().chain(layer.bias.iter()).copied();
    let min = values().fold(f64::INFINITY, f64::min) as f32;
    let max = values().fold(f64::NEG_INFINITY, f64::max) as f32;
    let scale = (max - min) / 255.0;
    for v in values() {
        let code = if scale > 0.0 {
            ((v as f32 - min) / scale).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        out.push(code);
    }
    out.extend_from_slice(&scale.to_le_bytes());
    out.extend_from_slice(&min.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(FlareError::Parse {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn error(&self, message: impl Into<String>) -> FlareError {
        FlareError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn read_model(r: &mut Reader<'_>) -> Result<ModelParams> {
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(FlareError::Parse {
            offset: 0,
            message: format!("bad magic {magic:?}"),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let quantized = match r.u8("quantized flag")? {
        0 => false,
        1 => true,
        other => return Err(r.error(format!("invalid quantized flag {other}"))),
    };
    let count = r.u16("layer count")? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let tag = r.u8("activation")?;
        let activation =
            Activation::from_tag(tag).ok_or_else(|| r.error(format!("unknown activation tag {tag}")))?;
        let n = rows
            .checked_mul(cols)
            .and_then(|w| w.checked_add(rows))
            .ok_or_else(|| r.error("layer size overflows"))?;
        let values: Vec<f64> = if quantized {
            let codes = r.take(n, "quantized payload")?;
            let scale = r.f32("scale")?;
            let zero = r.f32("zero point")?;
            codes.iter().map(|&c| (zero + c as f32 * scale) as f64).collect()
        } else {
            let raw = r.take(n.saturating_mul(4), "float payload")?;
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect()
        };
        let weights = Array2::from_shape_vec((rows, cols), values[..rows * cols].to_vec())
            .map_err(|e| r.error(e.to_string()))?;
        let bias = Array1::from(values[rows * cols..].to_vec());
        layers.push(Layer::new(weights, bias, activation));
    }
    ModelParams::new(layers).map_err(|e| r.error(format!("invalid model: {e}")))
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(bytes);
    let model = read_model(&mut r)?;
    r.finish()?;
    Ok(model)
}

/// Model blob plus reference confidences, as shipped client → sensor.
pub fn encode_deployment(model: &SerializedModel, reference: &ConfidenceSample) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.byte_count() + 4 + 4 * reference.len());
    out.extend_from_slice(model.bytes());
    out.extend_from_slice(&(reference.len() as u32).to_le_bytes());
    for &v in reference.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_deployment(bytes: &[u8]) -> Result<(SerializedModel, ConfidenceSample)> {
    let mut r = Reader::new(bytes);
    read_model(&mut r)?;
    let model_len = r.pos;
    let n = r.u32("reference length")? as usize;
    let raw = r.take(n.saturating_mul(4), "reference confidences")?;
    r.finish()?;
    let values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    let reference = ConfidenceSample::confidences(values).map_err(|e| FlareError::Parse {
        offset: model_len,
        message: e.to_string(),
    })?;
    Ok((SerializedModel::from_bytes(bytes[..model_len].to_vec()), reference))
}

pub fn deployment_size(model: &SerializedModel, reference_len: usize) -> usize {
    model.byte_count() + 4 + 4 * reference_len
}

/// Raw sensor data, as uploaded sensor → client.
pub fn encode_upload(data: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(upload_size(data.len(), data.dim()));
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    for &v in data.features().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend(data.labels().iter().map(|&l| l as u8));
    out
}

pub fn decode_upload(
    bytes: &[u8],
    dim: usize,
    classes: usize,
    provenance: Provenance,
) -> Result<LabeledDataset> {
    let mut r = Reader::new(bytes);
    let rows = r.u32("row count")? as usize;
    let raw = r.take(rows.saturating_mul(dim).saturating_mul(4), "features")?;
    let labels_at = r.pos;
    let labels: Vec<usize> = r.take(rows, "labels")?.iter().map(|&l| l as usize).collect();
    r.finish()?;
    let features = Array2::from_shape_vec(
        (rows, dim),
        raw.chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect(),
    )
    .map_err(|e| FlareError::Parse {
        offset: 4,
        message: e.to_string(),
    })?;
    LabeledDataset::new(features, labels, classes, provenance).map_err(|e| FlareError::Parse {
        offset: labels_at,
        message: e.to_string(),
    })
}

pub fn upload_size(rows: usize, dim: usize) -> usize {
    4 + rows * (4 * dim + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(sizes: &[usize], seed: u64) -> ModelParams {
        ModelParams::init_mlp(sizes, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn f32_rounded(m: &ModelParams) -> ModelParams {
        let flat: Vec<f64> = m.to_flat().iter().map(|&v| v as f32 as f64).collect();
        m.with_flat(&flat).unwrap()
    }

    #[test]
    fn float_round_trip_is_exact_on_f32_values() {
        let m = f32_rounded(&model(&[8, 5, 3], 1));
        let blob = convert_model(&m, false);
        assert!(!blob.is_quantized());
        assert_eq!(blob.decode().unwrap(), m);
    }

    #[test]
    fn byte_count_matches_layout_arithmetic() {
        let m = model(&[64, 16, 10], 2);
        let blob = convert_model(&m, false);
        let header = HEADER_LEN + 2 * LAYER_HEADER_LEN;
        assert_eq!(blob.byte_count(), 4 * (64 * 16 + 16 + 16 * 10 + 10) + header);
        assert_eq!(blob.byte_count(), float_model_size(&[64, 16, 10]));
        assert_eq!(&blob.bytes()[..4], b"FLRM");
    }

    #[test]
    fn quantized_error_within_layer_step() {
        let m = model(&[16, 12, 4], 3);
        let blob = convert_model(&m, true);
        assert!(blob.is_quantized());
        let back = blob.decode().unwrap();
        for (orig, q) in m.layers().iter().zip(back.layers()) {
            let vals: Vec<f64> = orig.weights.iter().chain(orig.bias.iter()).copied().collect();
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let bound = (max - min) / 255.0;
            for (a, b) in vals.iter().zip(q.weights.iter().chain(q.bias.iter())) {
                assert!((a - b).abs() <= bound, "{a} vs {b}, bound {bound}");
            }
        }
        let expected = HEADER_LEN + 2 * LAYER_HEADER_LEN + (16 * 12 + 12 + 8) + (12 * 4 + 4 + 8);
        assert_eq!(blob.byte_count(), expected);
    }

    #[test]
    fn bad_magic_and_truncation_are_parse_errors() {
        let m = model(&[4, 3], 4);
        let mut bytes = convert_model(&m, false).bytes().to_vec();
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_model(truncated), Err(FlareError::Parse { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(FlareError::Parse { offset: 0, .. })));
    }

    #[test]
    fn deployment_and_upload_payloads_round_trip() {
        let m = model(&[4, 3], 5);
        let blob = convert_model(&m, false);
        let reference = ConfidenceSample::confidences(vec![0.5, 0.75, 1.0]).unwrap();
        let payload = encode_deployment(&blob, &reference);
        assert_eq!(payload.len(), deployment_size(&blob, 3));
        let (blob2, ref2) = decode_deployment(&payload).unwrap();
        assert_eq!(blob2, blob);
        assert_eq!(ref2, reference);

        let data = LabeledDataset::new(
            Array2::from_shape_vec((2, 3), vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.125]).unwrap(),
            vec![2, 0],
            3,
            Provenance::Clean,
        )
        .unwrap();
        let bytes = encode_upload(&data);
        assert_eq!(bytes.len(), upload_size(2, 3));
        assert_eq!(decode_upload(&bytes, 3, 3, Provenance::Clean).unwrap(), data);
    }
}
