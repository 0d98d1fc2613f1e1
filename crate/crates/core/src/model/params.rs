use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LatentLayout, LayerSpec, ModelKind, NetConfig};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Affine layer: `y = x·W + b` with `W` stored in×out.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }

    fn uniform(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let data = (0..input * output).map(|_| rng.random_range(-bound..bound)).collect();
        Linear {
            weight: Matrix::from_vec(input, output, data).expect("sized above"),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Every trainable tensor of one autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub config: NetConfig,
    pub layout: LatentLayout,
    pub seed: u64,
    pub encoder: Vec<Linear>,
    pub decoder: Vec<Linear>,
    /// Present for the compositional model only.
    pub fusion: Option<Linear>,
}

/// Seeded U(−1/√fan_in, 1/√fan_in) weights and zero biases.
pub fn init_params(kind: ModelKind, config: &NetConfig, layout: &LatentLayout, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = layout.per_plant();
    let build = |specs: Vec<LayerSpec>, rng: &mut ChaCha8Rng| -> Vec<Linear> {
        specs.iter().map(|s| Linear::uniform(s.input, s.output, rng)).collect()
    };
    let encoder = build(config.encoder_specs(latent), &mut rng);
    let decoder = build(config.decoder_specs(latent), &mut rng);
    let fusion = match kind {
        ModelKind::Cae => Some(Linear::uniform(layout.fusion_input(), layout.fused_width(), &mut rng)),
        ModelKind::Vanilla => None,
    };
    Ok(ModelParams {
        kind,
        config: config.clone(),
        layout: *layout,
        seed,
        encoder,
        decoder,
        fusion,
    })
}

impl ModelParams {
    /// Layers in checkpoint / flat-vector order: encoder, decoder, fusion.
    pub fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.encoder.iter().chain(&self.decoder).chain(self.fusion.as_ref())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(self.fusion.as_mut())
    }

    /// Tensor names and shapes in flat order.
    pub fn tensor_layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let mut push = |prefix: &str, layers: &[Linear]| {
            for (i, l) in layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), l.weight.rows(), l.weight.cols()));
                out.push((format!("{prefix}.{i}.bias"), l.bias.rows(), l.bias.cols()));
            }
        };
        push("encoder", &self.encoder);
        push("decoder", &self.decoder);
        if let Some(f) = &self.fusion {
            push("fusion", std::slice::from_ref(f));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Linear::param_count).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape {
                op: "set_flat",
                left: (self.param_count(), 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        for l in self.layers_mut() {
            for m in [&mut l.weight, &mut l.bias] {
                let n = m.len();
                m.data_mut().copy_from_slice(&flat[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<ModelParams> {
        let mut out = self.clone();
        out.set_flat(flat)?;
        Ok(out)
    }

    /// Checks every tensor against the config and layout.
    pub fn validate(&self) -> Result<()> {
        let latent = self.layout.per_plant();
        let check = |layers: &[Linear], specs: Vec<LayerSpec>| -> Result<()> {
            if layers.len() != specs.len() {
                return Err(Error::invalid(format!(
                    "expected {} layers, found {}",
                    specs.len(),
                    layers.len()
                )));
            }
            for (l, s) in layers.iter().zip(specs) {
                if l.weight.shape() != (s.input, s.output) || l.bias.shape() != (1, s.output) {
                    return Err(Error::Shape {
                        op: "layer",
                        left: l.weight.shape(),
                        right: (s.input, s.output),
                    });
                }
            }
            Ok(())
        };
        check(&self.encoder, self.config.encoder_specs(latent))?;
        check(&self.decoder, self.config.decoder_specs(latent))?;
        match (self.kind, &self.fusion) {
            (ModelKind::Vanilla, None) => Ok(()),
            (ModelKind::Cae, Some(f)) => {
                let want = (self.layout.fusion_input(), self.layout.fused_width());
                if f.weight.shape() != want || f.bias.shape() != (1, want.1) {
                    return Err(Error::Shape {
                        op: "fusion",
                        left: f.weight.shape(),
                        right: want,
                    });
                }
                Ok(())
            }
            (kind, _) => Err(Error::invalid(format!("fusion layer presence does not match {kind} model"))),
        }
    }
}
