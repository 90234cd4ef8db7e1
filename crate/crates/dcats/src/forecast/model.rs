//! Model definitions: parameter layout, seeded init, forward pass, manual
//! backpropagation, and the byte-stable checkpoint format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Mlp,
    SparseTsf,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
            ModelKind::SparseTsf => "sparsetsf",
        }
    }

    pub const ALL: [ModelKind; 3] = [ModelKind::Linear, ModelKind::Mlp, ModelKind::SparseTsf];
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ModelKind::Linear),
            "mlp" => Ok(ModelKind::Mlp),
            "sparsetsf" => Ok(ModelKind::SparseTsf),
            other => Err(Error::config(format!(
                "unknown model kind `{other}` (expected linear|mlp|sparsetsf)"
            ))),
        }
    }
}

/// Architecture parameters. `hidden` is used by the MLP only; `period` is
/// the SparseTSF strand period and must divide both `input_len` and
/// `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_len: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub period: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.horizon == 0 {
            return Err(Error::config("input_len and horizon must be positive"));
        }
        match self.kind {
            ModelKind::Mlp if self.hidden == 0 => {
                Err(Error::config("mlp hidden width must be positive"))
            }
            ModelKind::SparseTsf => {
                if self.period == 0
                    || self.input_len % self.period != 0
                    || self.horizon % self.period != 0
                {
                    Err(Error::config(format!(
                        "sparsetsf period {} must divide input_len {} and horizon {}",
                        self.period, self.input_len, self.horizon
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn param_count(&self) -> usize {
        let (l, h) = (self.input_len, self.horizon);
        match self.kind {
            ModelKind::Linear => (l + 1) * h,
            ModelKind::Mlp => (l + 1) * self.hidden + (self.hidden + 1) * h,
            ModelKind::SparseTsf => {
                let in_per = l / self.period;
                let out_per = h / self.period;
                (in_per + 1) * out_per
            }
        }
    }
}

/// A model: its config plus a flat parameter vector.
///
/// Layouts (row-major):
/// - linear: `W[horizon][input_len]`, then `b[horizon]`
/// - mlp: `W1[hidden][input_len]`, `b1[hidden]`, `W2[horizon][hidden]`,
///   `b2[horizon]`, rectifier between the two affine maps
/// - sparsetsf: shared strand map `W[out_per][in_per]`, then `b[out_per]`,
///   applied per phase strand (elements congruent mod `period`)
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

/// Seeded uniform(-s, s) init with s = 1/sqrt(fan_in) per layer.
pub fn init_model(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Vec::with_capacity(config.param_count());
    let fill = |count: usize, fan_in: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>| {
        let s = 1.0 / (fan_in as f64).sqrt();
        out.extend((0..count).map(|_| rng.gen_range(-s..s)));
    };
    let (l, h) = (config.input_len, config.horizon);
    match config.kind {
        ModelKind::Linear => fill((l + 1) * h, l, &mut rng, &mut params),
        ModelKind::Mlp => {
            fill((l + 1) * config.hidden, l, &mut rng, &mut params);
            fill((config.hidden + 1) * h, config.hidden, &mut rng, &mut params);
        }
        ModelKind::SparseTsf => {
            let in_per = l / config.period;
            let out_per = h / config.period;
            fill((in_per + 1) * out_per, in_per, &mut rng, &mut params);
        }
    }
    Ok(Model {
        config: *config,
        params,
    })
}

impl Model {
    /// Forward pass for one input window of `input_len` normalized values.
    pub fn forward(&self, input: &[f64], output: &mut [f64]) {
        debug_assert_eq!(input.len(), self.config.input_len);
        debug_assert_eq!(output.len(), self.config.horizon);
        match self.config.kind {
            ModelKind::Linear => self.forward_linear(input, output),
            ModelKind::Mlp => {
                let mut hidden = vec![0.0; self.config.hidden];
                self.forward_mlp(input, &mut hidden, output);
            }
            ModelKind::SparseTsf => self.forward_sparse(input, output),
        }
    }

    fn forward_linear(&self, input: &[f64], output: &mut [f64]) {
        let l = self.config.input_len;
        let h = self.config.horizon;
        let bias = &self.params[h * l..];
        for j in 0..h {
            let row = &self.params[j * l..(j + 1) * l];
            output[j] = bias[j] + dot(row, input);
        }
    }

    /// MLP forward that also exposes the pre-rectifier hidden activations
    /// (stored rectified in `hidden`) for backprop.
    fn forward_mlp(&self, input: &[f64], hidden: &mut [f64], output: &mut [f64]) {
        let l = self.config.input_len;
        let h = self.config.horizon;
        let nh = self.config.hidden;
        let (w1, rest) = self.params.split_at(nh * l);
        let (b1, rest) = rest.split_at(nh);
        let (w2, b2) = rest.split_at(h * nh);
        for k in 0..nh {
            let z = b1[k] + dot(&w1[k * l..(k + 1) * l], input);
            hidden[k] = if z > 0.0 { z } else { 0.0 };
        }
        for j in 0..h {
            output[j] = b2[j] + dot(&w2[j * nh..(j + 1) * nh], hidden);
        }
    }

    fn forward_sparse(&self, input: &[f64], output: &mut [f64]) {
        let w = self.config.period;
        let in_per = self.config.input_len / w;
        let out_per = self.config.horizon / w;
        let (weights, bias) = self.params.split_at(in_per * out_per);
        for s in 0..w {
            for j in 0..out_per {
                let row = &weights[j * in_per..(j + 1) * in_per];
                let mut acc = bias[j];
                for (t, &wt) in row.iter().enumerate() {
                    acc += wt * input[s + t * w];
                }
                output[s + j * w] = acc;
            }
        }
    }

    /// Forward pass that also exposes the rectified hidden activations for
    /// the MLP; `hidden` is ignored by the other kinds. Use this before
    /// [`Model::accumulate_grad`] so the backward pass can reuse them.
    pub fn forward_training(&self, input: &[f64], hidden: &mut [f64], output: &mut [f64]) {
        match self.config.kind {
            ModelKind::Linear => self.forward_linear(input, output),
            ModelKind::Mlp => self.forward_mlp(input, hidden, output),
            ModelKind::SparseTsf => self.forward_sparse(input, output),
        }
    }

    /// Accumulate parameter gradients for one sample given `dL/dy`.
    /// `hidden` must hold the activations from [`Model::forward_training`]
    /// on the same input (MLP only).
    pub fn accumulate_grad(&self, input: &[f64], grad_out: &[f64], hidden: &[f64], grad: &mut [f64]) {
        let l = self.config.input_len;
        let h = self.config.horizon;
        match self.config.kind {
            ModelKind::Linear => {
                let (gw, gb) = grad.split_at_mut(h * l);
                for j in 0..h {
                    let g = grad_out[j];
                    if g != 0.0 {
                        axpy(g, input, &mut gw[j * l..(j + 1) * l]);
                        gb[j] += g;
                    }
                }
            }
            ModelKind::Mlp => {
                let nh = self.config.hidden;
                let (w1_len, b1_len, w2_len) = (nh * l, nh, h * nh);
                let w2 = &self.params[w1_len + b1_len..w1_len + b1_len + w2_len];
                let mut ghidden = vec![0.0; nh];
                let (gw1, rest) = grad.split_at_mut(w1_len);
                let (gb1, rest) = rest.split_at_mut(b1_len);
                let (gw2, gb2) = rest.split_at_mut(w2_len);
                for j in 0..h {
                    let g = grad_out[j];
                    if g != 0.0 {
                        axpy(g, hidden, &mut gw2[j * nh..(j + 1) * nh]);
                        gb2[j] += g;
                        axpy(g, &w2[j * nh..(j + 1) * nh], &mut ghidden);
                    }
                }
                for k in 0..nh {
                    // rectifier gate: hidden holds max(z, 0)
                    if hidden[k] > 0.0 && ghidden[k] != 0.0 {
                        axpy(ghidden[k], input, &mut gw1[k * l..(k + 1) * l]);
                        gb1[k] += ghidden[k];
                    }
                }
            }
            ModelKind::SparseTsf => {
                let w = self.config.period;
                let in_per = l / w;
                let out_per = h / w;
                let (gw, gb) = grad.split_at_mut(in_per * out_per);
                for s in 0..w {
                    for j in 0..out_per {
                        let g = grad_out[s + j * w];
                        if g != 0.0 {
                            let row = &mut gw[j * in_per..(j + 1) * in_per];
                            for (t, slot) in row.iter_mut().enumerate() {
                                *slot += g * input[s + t * w];
                            }
                            gb[j] += g;
                        }
                    }
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        let kind: u8 = match self.config.kind {
            ModelKind::Linear => 0,
            ModelKind::Mlp => 1,
            ModelKind::SparseTsf => 2,
        };
        w.write_all(&[kind])?;
        for v in [
            self.config.input_len as u64,
            self.config.horizon as u64,
            self.config.hidden as u64,
            self.config.period as u64,
            self.config.seed,
            self.params.len() as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(Error::data(format!("{}: not a model checkpoint", path.display())));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != CKPT_VERSION {
            return Err(Error::data("unsupported checkpoint version"));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let kind = match kind[0] {
            0 => ModelKind::Linear,
            1 => ModelKind::Mlp,
            2 => ModelKind::SparseTsf,
            k => return Err(Error::data(format!("unknown model kind tag {k}"))),
        };
        let mut next = || -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let config = ModelConfig {
            kind,
            input_len: next()? as usize,
            horizon: next()? as usize,
            hidden: next()? as usize,
            period: next()? as usize,
            seed: next()?,
        };
        let n_params = next()? as usize;
        if n_params != config.param_count() {
            return Err(Error::data("checkpoint parameter count mismatch"));
        }
        let mut params = Vec::with_capacity(n_params);
        let mut b8 = [0u8; 8];
        for _ in 0..n_params {
            r.read_exact(&mut b8)?;
            params.push(f64::from_le_bytes(b8));
        }
        Ok(Model { config, params })
    }
}

const CKPT_MAGIC: &[u8; 8] = b"DCATSMD\0";
const CKPT_VERSION: u32 = 1;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ModelKind) -> ModelConfig {
        ModelConfig {
            kind,
            input_len: 96,
            horizon: 12,
            hidden: 32,
            period: 12,
            seed: 7,
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(cfg(ModelKind::Linear).param_count(), (96 + 1) * 12);
        assert_eq!(cfg(ModelKind::Linear).param_count(), 1164);
        assert_eq!(cfg(ModelKind::Mlp).param_count(), 97 * 32 + 33 * 12);
        // (96/12 + 1) * (12/12) = 9
        assert_eq!(cfg(ModelKind::SparseTsf).param_count(), 9);
        for kind in ModelKind::ALL {
            assert_eq!(init_model(&cfg(kind)).unwrap().params.len(), cfg(kind).param_count());
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        for kind in ModelKind::ALL {
            let a = init_model(&cfg(kind)).unwrap();
            let b = init_model(&cfg(kind)).unwrap();
            assert_eq!(a.params, b.params);
            let mut other = cfg(kind);
            other.seed = 8;
            assert_ne!(init_model(&other).unwrap().params, a.params);
        }
    }

    #[test]
    fn sparsetsf_divisibility_enforced() {
        let mut c = cfg(ModelKind::SparseTsf);
        c.period = 7;
        assert!(init_model(&c).is_err());
    }

    #[test]
    fn zero_params_give_zero_forecast() {
        for kind in ModelKind::ALL {
            let mut m = init_model(&cfg(kind)).unwrap();
            m.params.iter_mut().for_each(|p| *p = 0.0);
            let input: Vec<f64> = (0..96).map(|t| t as f64).collect();
            let mut out = vec![1.0; 12];
            m.forward(&input, &mut out);
            assert!(out.iter().all(|&v| v == 0.0), "{kind}");
        }
    }

    #[test]
    fn linear_hand_case() {
        let config = ModelConfig {
            kind: ModelKind::Linear,
            input_len: 2,
            horizon: 1,
            hidden: 0,
            period: 1,
            seed: 0,
        };
        let m = Model {
            config,
            params: vec![0.5, 0.5, 0.0],
        };
        let mut out = [0.0];
        m.forward(&[2.0, 4.0], &mut out);
        assert_eq!(out[0], 3.0);
    }

    #[test]
    fn sparsetsf_last_period_copy() {
        // strand weights that select the final element of each strand
        let config = ModelConfig {
            kind: ModelKind::SparseTsf,
            input_len: 24,
            horizon: 12,
            hidden: 0,
            period: 12,
            seed: 0,
        };
        let in_per = 2;
        let out_per = 1;
        let mut params = vec![0.0; (in_per + 1) * out_per];
        params[in_per - 1] = 1.0; // W[0][last] = 1
        let m = Model { config, params };
        let input: Vec<f64> = (0..24).map(|t| (t * t) as f64).collect();
        let mut out = vec![0.0; 12];
        m.forward(&input, &mut out);
        assert_eq!(&out[..], &input[12..24]);
    }

    #[test]
    fn checkpoint_round_trip_byte_stable() {
        let dir = std::env::temp_dir().join("dcats-model-tests");
        std::fs::create_dir_all(&dir).unwrap();
        for kind in ModelKind::ALL {
            let m = init_model(&cfg(kind)).unwrap();
            let path = dir.join(format!("{kind}.ckpt"));
            m.save(&path).unwrap();
            let bytes1 = std::fs::read(&path).unwrap();
            let back = Model::load(&path).unwrap();
            assert_eq!(back, m);
            back.save(&path).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), bytes1);
        }
    }
}
