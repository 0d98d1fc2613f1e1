use super::{Activation, LatentLayout, ModelKind, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::{concat_cols, Gradients, Matrix, Tape, Value};

struct BoundLinear {
    weight: Value,
    bias: Value,
    activation: Activation,
}

impl BoundLinear {
    fn forward(&self, x: &Value) -> Result<Value> {
        let y = x.matmul(&self.weight)?.add_row(&self.bias)?;
        Ok(match self.activation {
            Activation::Selu => y.selu(),
            Activation::Sigmoid => y.sigmoid(),
            Activation::None => y,
        })
    }
}

/// A [`ModelParams`] recorded as leaves on one tape.
pub struct BoundParams {
    encoder: Vec<BoundLinear>,
    decoder: Vec<BoundLinear>,
    fusion: Option<BoundLinear>,
    layout: LatentLayout,
    input_dim: usize,
    kind: ModelKind,
}

/// Tape values of one compositional forward pass over G stacked groups.
pub struct CaeTrace {
    /// G·P × (zg+ze+zp)
    pub encoded: Value,
    /// G × fused width
    pub fused: Value,
    /// G·P × (zg+ze+zp)
    pub composed: Value,
    /// G·P × D
    pub recon: Value,
}

impl BoundParams {
    pub fn bind(params: &ModelParams, tape: &Tape) -> Self {
        let latent = params.layout.per_plant();
        let bind_all = |layers: &[super::Linear], specs: Vec<super::LayerSpec>| {
            layers
                .iter()
                .zip(specs)
                .map(|(l, s)| BoundLinear {
                    weight: tape.var(l.weight.clone()),
                    bias: tape.var(l.bias.clone()),
                    activation: s.activation,
                })
                .collect()
        };
        BoundParams {
            encoder: bind_all(&params.encoder, params.config.encoder_specs(latent)),
            decoder: bind_all(&params.decoder, params.config.decoder_specs(latent)),
            fusion: params.fusion.as_ref().map(|f| BoundLinear {
                weight: tape.var(f.weight.clone()),
                bias: tape.var(f.bias.clone()),
                activation: Activation::None,
            }),
            layout: params.layout,
            input_dim: params.config.input_dim,
            kind: params.kind,
        }
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn encode(&self, x: &Value) -> Result<Value> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape {
                op: "encoder",
                left: x.shape(),
                right: (x.rows(), self.input_dim),
            });
        }
        self.encoder.iter().try_fold(x.clone(), |h, l| l.forward(&h))
    }

    pub fn decode(&self, z: &Value) -> Result<Value> {
        if z.cols() != self.layout.per_plant() {
            return Err(Error::Shape {
                op: "decoder",
                left: z.shape(),
                right: (z.rows(), self.layout.per_plant()),
            });
        }
        self.decoder.iter().try_fold(z.clone(), |h, l| l.forward(&h))
    }

    /// Fuses G·P stacked plant encodings into G fused vectors.
    pub fn fuse(&self, encoded: &Value) -> Result<Value> {
        let fusion = self
            .fusion
            .as_ref()
            .ok_or_else(|| Error::invalid("vanilla model has no fusion layer"))?;
        let p = self.layout.plants();
        if encoded.cols() != self.layout.per_plant() || !encoded.rows().is_multiple_of(p) {
            return Err(Error::Shape {
                op: "fusion",
                left: encoded.shape(),
                right: (p, self.layout.per_plant()),
            });
        }
        // row-major data of [G·P × L] is already [G × P·L]
        let groups = encoded.rows() / p;
        let stacked = encoded.reshape(groups, self.layout.fusion_input())?;
        fusion.forward(&stacked)
    }

    pub fn compose(&self, fused: &Value) -> Result<Value> {
        compose_value(&self.layout, fused)
    }

    /// Encode, fuse, compose and decode G stacked groups (G·P rows).
    pub fn cae(&self, x: &Value) -> Result<CaeTrace> {
        let encoded = self.encode(x)?;
        let fused = self.fuse(&encoded)?;
        let composed = self.compose(&fused)?;
        let recon = self.decode(&composed)?;
        Ok(CaeTrace {
            encoded,
            fused,
            composed,
            recon,
        })
    }

    /// Returns (reconstruction, latent).
    pub fn vanilla(&self, x: &Value) -> Result<(Value, Value)> {
        let latent = self.encode(x)?;
        let recon = self.decode(&latent)?;
        Ok((recon, latent))
    }

    /// Gradient of every bound tensor, flattened in [`ModelParams::flatten`] order.
    pub fn flat_gradient(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for l in self.encoder.iter().chain(&self.decoder).chain(self.fusion.as_ref()) {
            out.extend_from_slice(grads.get(&l.weight).data());
            out.extend_from_slice(grads.get(&l.bias).data());
        }
        out
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }
}

/// `[genotype | env_{e(i)} | plant_i]` for every plant, stacked group-major.
fn compose_value(layout: &LatentLayout, fused: &Value) -> Result<Value> {
    if fused.cols() != layout.fused_width() {
        return Err(Error::Shape {
            op: "compose",
            left: fused.shape(),
            right: (fused.rows(), layout.fused_width()),
        });
    }
    let genotype = fused.slice_cols(0, layout.zg)?;
    let mut parts = Vec::with_capacity(layout.plants() * 3);
    for i in 0..layout.plants() {
        let env = layout.env_range(layout.env_of(i));
        let plant = layout.plant_range(i);
        parts.push(genotype.clone());
        parts.push(fused.slice_cols(env.start, env.len())?);
        parts.push(fused.slice_cols(plant.start, plant.len())?);
    }
    let wide = concat_cols(&parts)?;
    wide.reshape(fused.rows() * layout.plants(), layout.per_plant())
}

/// One group's fused code with named partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedLatent {
    pub layout: LatentLayout,
    pub values: Vec<f64>,
}

impl FusedLatent {
    pub fn new(layout: LatentLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.fused_width() {
            return Err(Error::Shape {
                op: "fused latent",
                left: (1, values.len()),
                right: (1, layout.fused_width()),
            });
        }
        Ok(FusedLatent { layout, values })
    }

    pub fn genotype(&self) -> &[f64] {
        &self.values[self.layout.genotype_range()]
    }

    pub fn env(&self, j: usize) -> &[f64] {
        &self.values[self.layout.env_range(j)]
    }

    pub fn plant(&self, i: usize) -> &[f64] {
        &self.values[self.layout.plant_range(i)]
    }
}

/// A plant's decoder input: genotype, its environment, its own slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ComposedLatent {
    pub values: Vec<f64>,
    pub zg: usize,
    pub ze: usize,
}

impl ComposedLatent {
    pub fn genotype(&self) -> &[f64] {
        &self.values[..self.zg]
    }

    pub fn env(&self) -> &[f64] {
        &self.values[self.zg..self.zg + self.ze]
    }

    pub fn plant(&self) -> &[f64] {
        &self.values[self.zg + self.ze..]
    }
}

pub fn compose_latent(fused: &FusedLatent, plant: usize) -> Result<ComposedLatent> {
    let layout = &fused.layout;
    if plant >= layout.plants() {
        return Err(Error::Index {
            op: "compose_latent",
            index: plant,
            limit: layout.plants(),
        });
    }
    let mut values = Vec::with_capacity(layout.per_plant());
    values.extend_from_slice(fused.genotype());
    values.extend_from_slice(fused.env(layout.env_of(plant)));
    values.extend_from_slice(fused.plant(plant));
    Ok(ComposedLatent {
        values,
        zg: layout.zg,
        ze: layout.ze,
    })
}

pub fn encoder_forward(params: &ModelParams, batch: &Matrix) -> Result<Matrix> {
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape);
    Ok(bound.encode(&tape.constant(batch.clone()))?.value())
}

pub fn decoder_forward(params: &ModelParams, composed: &Matrix) -> Result<Matrix> {
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape);
    Ok(bound.decode(&tape.constant(composed.clone()))?.value())
}

/// Applies the fusion layer to rows of concatenated plant encodings
/// (width P·(zg+ze+zp)).
pub fn fusion_forward(params: &ModelParams, plant_latents: &Matrix) -> Result<Matrix> {
    let width = params.layout.fusion_input();
    if plant_latents.cols() != width {
        return Err(Error::Shape {
            op: "fusion",
            left: plant_latents.shape(),
            right: (plant_latents.rows(), width),
        });
    }
    let stacked = plant_latents.reshape(plant_latents.rows() * params.layout.plants(), params.layout.per_plant())?;
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape);
    Ok(bound.fuse(&tape.constant(stacked))?.value())
}

/// Everything one compositional pass over a single group produces.
#[derive(Clone, Debug)]
pub struct CaeForward {
    /// P×D, in plant order.
    pub reconstructions: Matrix,
    pub fused: FusedLatent,
    pub composed: Vec<ComposedLatent>,
}

/// Runs one complete, (env, rep)-ordered group (P×D spectra).
pub fn cae_forward(params: &ModelParams, group: &Matrix) -> Result<CaeForward> {
    let p = params.layout.plants();
    if group.rows() != p {
        return Err(Error::invalid(format!(
            "group has {} plants, the layout needs exactly {p}",
            group.rows()
        )));
    }
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape);
    let trace = bound.cae(&tape.constant(group.clone()))?;
    let fused = FusedLatent::new(params.layout, trace.fused.value().into_data())?;
    let composed = (0..p)
        .map(|i| compose_latent(&fused, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(CaeForward {
        reconstructions: trace.recon.value(),
        fused,
        composed,
    })
}

/// Returns (reconstruction, latent) for independent samples.
pub fn vanilla_forward(params: &ModelParams, batch: &Matrix) -> Result<(Matrix, Matrix)> {
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape);
    let (recon, latent) = bound.vanilla(&tape.constant(batch.clone()))?;
    Ok((recon.value(), latent.value()))
}
