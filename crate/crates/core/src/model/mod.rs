//! Two-hidden-layer perceptron mapping features to the four concentrations.
//!
//! Inputs are z-scored with statistics frozen from the training rows; NA
//! inputs take the training mean (a normalized value of 0). Hidden layers use
//! ReLU and the output layer is linear; predictions clamp at 0.
//!
//! Parameters live in one flat vector ordered `W1, b1, W2, b2, W3, b3`
//! (row-major, one row per output unit), so the output layer is its tail.

mod train;

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

pub use train::{
    adam_step, gradient, msle_loss, train, transfer_fit, AdamState, Gradient, TrainConfig,
    TrainOutcome, TrainingBatch,
};

use crate::{Error, Execution, Result};

pub const N_OUTPUTS: usize = 4;
const MAGIC: &[u8; 8] = b"AQMLP\0\0\0";
pub const FORMAT_VERSION: u32 = 1;

/// Layer sizes and parameter offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub inputs: usize,
    pub n1: usize,
    pub n2: usize,
}

impl Shape {
    pub fn param_count(&self) -> usize {
        self.output_offset() + N_OUTPUTS * self.n2 + N_OUTPUTS
    }

    fn b1(&self) -> usize {
        self.n1 * self.inputs
    }

    fn w2(&self) -> usize {
        self.b1() + self.n1
    }

    fn b2(&self) -> usize {
        self.w2() + self.n2 * self.n1
    }

    /// Offset of `W3`; everything before it belongs to the hidden layers.
    pub fn output_offset(&self) -> usize {
        self.b2() + self.n2
    }

    fn b3(&self) -> usize {
        self.output_offset() + N_OUTPUTS * self.n2
    }
}

/// Per-row activations kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    pub z1: Vec<f64>,
    pub h1: Vec<f64>,
    pub z2: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: [f64; N_OUTPUTS],
}

impl Activations {
    pub(crate) fn new(shape: &Shape) -> Self {
        Activations {
            z1: vec![0.0; shape.n1],
            h1: vec![0.0; shape.n1],
            z2: vec![0.0; shape.n2],
            h2: vec![0.0; shape.n2],
            out: [0.0; N_OUTPUTS],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    preset: String,
    feature_names: Vec<String>,
    shape: Shape,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
    params: Vec<f64>,
}

fn dense(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * n_in..(j + 1) * n_in];
        let mut s = b[j];
        for (wi, xi) in row.iter().zip(x) {
            s += wi * xi;
        }
        *o = s;
    }
}

fn relu(z: &[f64], h: &mut [f64]) {
    for (o, v) in h.iter_mut().zip(z) {
        *o = if *v > 0.0 { *v } else { 0.0 };
    }
}

impl MlpModel {
    /// Model with all-zero parameters and identity normalization.
    pub fn zeros(
        preset: impl Into<String>,
        feature_names: Vec<String>,
        n1: usize,
        n2: usize,
    ) -> Result<Self> {
        let inputs = feature_names.len();
        Self::from_parts(
            preset.into(),
            feature_names,
            Shape { inputs, n1, n2 },
            vec![0.0; inputs],
            vec![1.0; inputs],
            None,
        )
    }

    /// Assembles a model, validating shapes and normalization.
    pub fn from_parts(
        preset: String,
        feature_names: Vec<String>,
        shape: Shape,
        norm_mean: Vec<f64>,
        norm_std: Vec<f64>,
        params: Option<Vec<f64>>,
    ) -> Result<Self> {
        if shape.inputs == 0 || shape.n1 == 0 || shape.n2 == 0 {
            return Err(Error::InvalidParameter(
                "layer sizes must be positive".into(),
            ));
        }
        for len in [feature_names.len(), norm_mean.len(), norm_std.len()] {
            if len != shape.inputs {
                return Err(Error::DimensionMismatch {
                    expected: shape.inputs,
                    actual: len,
                });
            }
        }
        if norm_std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || norm_mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::InvalidParameter(
                "normalization stds must be positive and means finite".into(),
            ));
        }
        let params = params.unwrap_or_else(|| vec![0.0; shape.param_count()]);
        if params.len() != shape.param_count() {
            return Err(Error::DimensionMismatch {
                expected: shape.param_count(),
                actual: params.len(),
            });
        }
        Ok(MlpModel {
            preset,
            feature_names,
            shape,
            norm_mean,
            norm_std,
            params,
        })
    }

    pub fn preset(&self) -> &str {
        &self.preset
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn input_dim(&self) -> usize {
        self.shape.inputs
    }

    pub fn norm_mean(&self) -> &[f64] {
        &self.norm_mean
    }

    pub fn norm_std(&self) -> &[f64] {
        &self.norm_std
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.shape.b1()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.params[self.shape.b1()..self.shape.w2()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.params[self.shape.w2()..self.shape.b2()]
    }

    pub fn b2(&self) -> &[f64] {
        &self.params[self.shape.b2()..self.shape.output_offset()]
    }

    pub fn w3(&self) -> &[f64] {
        &self.params[self.shape.output_offset()..self.shape.b3()]
    }

    pub fn b3(&self) -> &[f64] {
        &self.params[self.shape.b3()..]
    }

    /// Hidden-layer parameters (`W1, b1, W2, b2`).
    pub fn hidden_params(&self) -> &[f64] {
        &self.params[..self.shape.output_offset()]
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.shape.inputs {
            return Err(Error::DimensionMismatch {
                expected: self.shape.inputs,
                actual: len,
            });
        }
        Ok(())
    }

    /// Normalizes raw features into `out`; NaN and infinite inputs map to 0.
    pub fn normalize_into(&self, raw: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(raw.len())?;
        for (((o, x), m), s) in out
            .iter_mut()
            .zip(raw)
            .zip(&self.norm_mean)
            .zip(&self.norm_std)
        {
            *o = if x.is_finite() { (x - m) / s } else { 0.0 };
        }
        Ok(())
    }

    /// Forward pass on a normalized input, keeping pre-activations.
    pub(crate) fn forward_normalized(&self, x: &[f64], act: &mut Activations) {
        let s = &self.shape;
        let p = &self.params;
        dense(&p[..s.b1()], &p[s.b1()..s.w2()], x, &mut act.z1);
        relu(&act.z1, &mut act.h1);
        dense(
            &p[s.w2()..s.b2()],
            &p[s.b2()..s.output_offset()],
            &act.h1,
            &mut act.z2,
        );
        relu(&act.z2, &mut act.h2);
        dense(
            &p[s.output_offset()..s.b3()],
            &p[s.b3()..],
            &act.h2,
            &mut act.out,
        );
    }

    /// Raw (unclamped) outputs for one row of raw features.
    pub fn forward(&self, features: &[f64]) -> Result<[f64; N_OUTPUTS]> {
        let mut x = vec![0.0; self.shape.inputs];
        self.normalize_into(features, &mut x)?;
        let mut act = Activations::new(&self.shape);
        self.forward_normalized(&x, &mut act);
        Ok(act.out)
    }

    /// Concentrations for one row: forward pass clamped at 0.
    pub fn predict(&self, features: &[f64]) -> Result<[f64; N_OUTPUTS]> {
        Ok(self
            .forward(features)?
            .map(|v| if v > 0.0 { v } else { 0.0 }))
    }

    pub fn predict_batch(
        &self,
        rows: &[Vec<f64>],
        exec: Execution,
    ) -> Result<Vec<[f64; N_OUTPUTS]>> {
        exec.map(rows, |r| self.predict(r)).into_iter().collect()
    }

    /// Hex SHA-256 of all parameters and normalization statistics.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in self
            .norm_mean
            .iter()
            .chain(&self.norm_std)
            .chain(&self.params)
        {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// Hex SHA-256 of the hidden-layer parameters only.
    pub fn hidden_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in self.hidden_params() {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// Binary container: magic, version, preset, feature names, layer sizes,
    /// normalization and parameters; integers `u32` and reals `f64`, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let put_str = |b: &mut Vec<u8>, s: &str| {
            b.extend_from_slice(&(s.len() as u32).to_le_bytes());
            b.extend_from_slice(s.as_bytes());
        };
        put_str(&mut b, &self.preset);
        b.extend_from_slice(&(self.feature_names.len() as u32).to_le_bytes());
        for n in &self.feature_names {
            put_str(&mut b, n);
        }
        for v in [self.shape.n1, self.shape.n2, N_OUTPUTS] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self
            .norm_mean
            .iter()
            .chain(&self.norm_std)
            .chain(&self.params)
        {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::ModelFormat("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let preset = r.string()?;
        let n_features = r.u32()? as usize;
        let feature_names = (0..n_features)
            .map(|_| r.string())
            .collect::<Result<Vec<_>>>()?;
        let (n1, n2, n_out) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        if n_out != N_OUTPUTS {
            return Err(Error::ModelFormat(format!(
                "expected {N_OUTPUTS} outputs, found {n_out}"
            )));
        }
        let shape = Shape {
            inputs: n_features,
            n1,
            n2,
        };
        let norm_mean = r.reals(n_features)?;
        let norm_std = r.reals(n_features)?;
        let params = r.reals(shape.param_count())?;
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat("trailing bytes after parameters".into()));
        }
        Self::from_parts(
            preset,
            feature_names,
            shape,
            norm_mean,
            norm_std,
            Some(params),
        )
        .map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::ModelFormat("truncated model file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::ModelFormat("invalid UTF-8 string".into()))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::ModelFormat("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests;
