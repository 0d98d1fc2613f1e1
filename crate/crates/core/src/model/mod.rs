//! Encoder, decoder and fusion networks, and the latent bookkeeping that
//! splits a fused group code into genotype, environment and plant parts.

mod checkpoint;
mod forward;
mod params;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{
    cae_forward, compose_latent, decoder_forward, encoder_forward, fusion_forward, vanilla_forward, BoundParams,
    CaeForward, CaeTrace, ComposedLatent, FusedLatent,
};
pub use params::{init_params, Linear, ModelParams};

use crate::error::{Error, Result};

/// Latent partition sizes plus the experimental design they refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentLayout {
    pub zg: usize,
    pub ze: usize,
    pub zp: usize,
    pub envs: usize,
    pub reps: usize,
}

impl LatentLayout {
    pub fn new(zg: usize, ze: usize, zp: usize, envs: usize, reps: usize) -> Result<Self> {
        let layout = LatentLayout { zg, ze, zp, envs, reps };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.zg == 0 || self.ze == 0 || self.zp == 0 {
            return Err(Error::invalid(format!("latent partitions must be non-empty: {self}")));
        }
        if self.envs == 0 || self.reps == 0 {
            return Err(Error::invalid("layout needs at least one environment and one replicate"));
        }
        Ok(())
    }

    /// Plants per genotype group.
    pub fn plants(&self) -> usize {
        self.envs * self.reps
    }

    /// Width of one plant's encoding and of one composed latent.
    pub fn per_plant(&self) -> usize {
        self.zg + self.ze + self.zp
    }

    pub fn fusion_input(&self) -> usize {
        self.plants() * self.per_plant()
    }

    pub fn fused_width(&self) -> usize {
        self.zg + self.envs * self.ze + self.plants() * self.zp
    }

    pub fn env_of(&self, plant: usize) -> usize {
        plant / self.reps
    }

    pub fn genotype_range(&self) -> Range<usize> {
        0..self.zg
    }

    pub fn env_range(&self, env: usize) -> Range<usize> {
        let start = self.zg + env * self.ze;
        start..start + self.ze
    }

    pub fn plant_range(&self, plant: usize) -> Range<usize> {
        let start = self.zg + self.envs * self.ze + plant * self.zp;
        start..start + self.zp
    }

    /// Partition label of every fused dimension: 0 for genotype, 1+j for
    /// environment j, 1+E+i for plant i.
    pub fn partition_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.zg];
        for j in 0..self.envs {
            labels.extend(std::iter::repeat_n(1 + j, self.ze));
        }
        for i in 0..self.plants() {
            labels.extend(std::iter::repeat_n(1 + self.envs + i, self.zp));
        }
        labels
    }

    /// `"zg-ze-zp"`, the form used on the command line.
    pub fn dims_label(&self) -> String {
        format!("{}-{}-{}", self.zg, self.ze, self.zp)
    }
}

impl fmt::Display for LatentLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{} (E={}, N={})", self.zg, self.ze, self.zp, self.envs, self.reps)
    }
}

/// Partition sizes parsed from `zg-ze-zp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatentDims(pub usize, pub usize, pub usize);

impl LatentDims {
    pub fn total(&self) -> usize {
        self.0 + self.1 + self.2
    }

    pub fn with_design(self, envs: usize, reps: usize) -> Result<LatentLayout> {
        LatentLayout::new(self.0, self.1, self.2, envs, reps)
    }
}

impl FromStr for LatentDims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').collect();
        let bad = || Error::invalid(format!("latent layout `{s}` is not of the form zg-ze-zp"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut v = [0usize; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.trim().parse().map_err(|_| bad())?;
            if *slot == 0 {
                return Err(bad());
            }
        }
        Ok(LatentDims(v[0], v[1], v[2]))
    }
}

impl fmt::Display for LatentDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.0, self.1, self.2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
    Sigmoid,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

/// Spectrum width and the hidden widths between spectrum and latent. The
/// decoder mirrors the encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl NetConfig {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let cfg = NetConfig { input_dim, hidden };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The field-scale stacks by layer count: 4 is the full
    /// 2150-1024-512 stack, 3 drops the first hidden layer, 2 keeps only the
    /// 512 layer, and 1 is a single narrow 90-wide hidden layer.
    pub fn with_depth(input_dim: usize, depth: usize) -> Result<Self> {
        let hidden = match depth {
            4 => vec![2150, 1024, 512],
            3 => vec![1024, 512],
            2 => vec![512],
            1 => vec![90],
            _ => return Err(Error::invalid(format!("depth must be 1..=4, got {depth}"))),
        };
        NetConfig::new(input_dim, hidden)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }

    /// Linear layers per side.
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn encoder_specs(&self, latent: usize) -> Vec<LayerSpec> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(latent);
        chain(&widths, Activation::None)
    }

    pub fn decoder_specs(&self, latent: usize) -> Vec<LayerSpec> {
        let mut widths = vec![latent];
        widths.extend(self.hidden.iter().rev());
        widths.push(self.input_dim);
        chain(&widths, Activation::Sigmoid)
    }
}

fn chain(widths: &[usize], last: Activation) -> Vec<LayerSpec> {
    let n = widths.len() - 1;
    (0..n)
        .map(|i| LayerSpec {
            input: widths[i],
            output: widths[i + 1],
            activation: if i + 1 == n { last } else { Activation::Selu },
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vanilla,
    Cae,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(ModelKind::Vanilla),
            "cae" => Ok(ModelKind::Cae),
            other => Err(Error::invalid(format!("unknown model kind `{other}` (expected vanilla or cae)"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Vanilla => "vanilla",
            ModelKind::Cae => "cae",
        })
    }
}
