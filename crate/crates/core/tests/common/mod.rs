#![allow(dead_code)]

use gxe_cae::dataio::{generate_synthetic, group_by_genotype, minmax_normalize, train_val_split, Dataset, GenotypeGroup, SyntheticConfig, GENOTYPE_TRAIT};
use gxe_cae::downstream::{extract_features, kfold_cv, FeatureSource, FoldReport, Regressor, DEFAULT_PCA_COMPONENTS};
use gxe_cae::model::{init_params, LatentLayout, ModelKind, ModelParams, NetConfig};
use gxe_cae::optim::{stack_groups, train, TrainConfig, TrainOutcome};

pub struct Prepared {
    pub data: Dataset,
    pub groups: Vec<GenotypeGroup>,
}

pub fn prepare(cfg: &SyntheticConfig) -> Prepared {
    let (raw, _) = generate_synthetic(cfg).unwrap();
    let (data, _) = minmax_normalize(&raw).unwrap();
    let groups = group_by_genotype(&data.records, cfg.envs, cfg.reps).groups;
    Prepared { data, groups }
}

pub struct Run {
    pub layout: LatentLayout,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Run {
    pub fn new(zg: usize, ze: usize, zp: usize, hidden: Vec<usize>, train: TrainConfig) -> Self {
        Run {
            layout: LatentLayout::new(zg, ze, zp, 2, 2).unwrap(),
            hidden,
            train,
        }
    }

    /// Trains one model on an 85/15 genotype split drawn with the run seed.
    pub fn fit(&self, kind: ModelKind, prepared: &Prepared) -> TrainOutcome {
        let seed = self.train.seed;
        let (tr, va) = train_val_split(&prepared.groups, 0.15, seed).unwrap();
        let net = NetConfig::new(prepared.data.wavelengths, self.hidden.clone()).unwrap();
        let init = init_params(kind, &net, &self.layout, seed).unwrap();
        train(&init, &stack_groups(&tr), &stack_groups(&va), &self.train).unwrap()
    }
}

pub fn cv(prepared: &Prepared, source: FeatureSource, params: Option<&ModelParams>, model: &Regressor, seed: u64) -> FoldReport {
    let table = extract_features(source, params, &prepared.data, DEFAULT_PCA_COMPONENTS).unwrap();
    let y = table.trait_values(&prepared.data, GENOTYPE_TRAIT).unwrap();
    kfold_cv(&table, &y, GENOTYPE_TRAIT, model, 5, seed).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
