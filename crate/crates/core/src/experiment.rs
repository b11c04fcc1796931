//! Desk-scale train/evaluate protocol on synthetic phantoms.
//!
//! Training uses a few axial slices from each case of one phantom cohort;
//! evaluation predicts whole volumes of a second, independently seeded
//! cohort.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::inference::{
    best_threshold, normalize_contrasts, predict_membership, sweep_threshold_cohort, threshold_membership,
    InferenceConfig, IntensityNormalization, SweepRow,
};
use crate::metrics::{dice, median};
use crate::network::{Network, NetworkConfig};
use crate::phantom::{generate_cohort, PhantomCase, PhantomSpec};
use crate::targets::{extract_patches, make_membership_target, PatchSet, DEFAULT_SIGMA};
use crate::training::{train_with_progress, EpochRecord, TrainingConfig, TrainingLog};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomExperiment {
    pub phantom: PhantomSpec,
    pub train_cases: usize,
    /// Lesion-bearing axial slices taken from each training case.
    pub slices_per_case: usize,
    pub train_seed: u64,
    pub test_cases: usize,
    pub test_seed: u64,
    pub depth: usize,
    pub last_filters: usize,
    pub training: TrainingConfig,
    pub sigma: f64,
    pub normalization: IntensityNormalization,
    pub threshold: f64,
}

impl Default for PhantomExperiment {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::default(),
            train_cases: 5,
            slices_per_case: 4,
            train_seed: 100,
            test_cases: 5,
            test_seed: 200,
            depth: 2,
            last_filters: 8,
            training: TrainingConfig::default(),
            sigma: DEFAULT_SIGMA,
            normalization: IntensityNormalization::default(),
            threshold: 0.30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub network: Network<f32>,
    pub log: TrainingLog,
    pub train_slices: usize,
    pub train_patches: usize,
    pub train_seconds: f64,
    /// Dice of each test case at the configured threshold.
    pub test_dice: Vec<f64>,
    pub median_dice: f64,
    /// Median Dice across test cases at every sweep threshold.
    pub sweep: Vec<SweepRow>,
    pub best: SweepRow,
}

/// `count` indices spread evenly over the lesion-bearing slices of `mask`.
pub fn lesion_slices(mask: &Volume, count: usize) -> Vec<usize> {
    let bearing: Vec<usize> = (0..mask.num_slices())
        .filter(|&z| mask.slice_data(z).iter().any(|&v| v != 0.0))
        .collect();
    if bearing.len() <= count {
        return bearing;
    }
    (0..count)
        .map(|i| bearing[(2 * i + 1) * bearing.len() / (2 * count)])
        .collect()
}

fn normalized(case: &PhantomCase, norm: &IntensityNormalization) -> Result<Vec<Volume>> {
    normalize_contrasts(&[&case.mprage, &case.flair], norm)
}

impl PhantomExperiment {
    /// Patches from the selected slices of every training case.
    pub fn training_patches(&self) -> Result<(PatchSet, usize)> {
        let cohort = generate_cohort(self.train_cases, &self.phantom, self.train_seed)?;
        let mut sets = Vec::new();
        let mut slices = 0;
        for case in &cohort {
            let z = lesion_slices(&case.mask, self.slices_per_case);
            if z.is_empty() {
                continue;
            }
            slices += z.len();
            let contrasts = normalized(case, &self.normalization)?
                .iter()
                .map(|v| v.select_slices(&z))
                .collect::<Result<Vec<_>>>()?;
            let mask = case.mask.select_slices(&z)?;
            let target = make_membership_target(&mask, self.sigma)?;
            let refs: Vec<&Volume> = contrasts.iter().collect();
            sets.push(extract_patches(
                &refs,
                &mask,
                (self.training.patch, self.training.patch),
                &target,
            )?);
        }
        if sets.is_empty() {
            return Err(Error::NoLesionVoxels);
        }
        Ok((PatchSet::concat(&sets)?, slices))
    }

    pub fn run(&self, on_epoch: impl FnMut(&EpochRecord)) -> Result<ExperimentOutcome> {
        let (patches, train_slices) = self.training_patches()?;
        let config = NetworkConfig::with_depth(2, self.depth, self.last_filters)?;
        let net = Network::build(config, self.training.seed)?;
        let start = Instant::now();
        let (network, log) = train_with_progress(net, &patches, &self.training, on_epoch)?;
        let train_seconds = start.elapsed().as_secs_f64();

        let test = generate_cohort(self.test_cases, &self.phantom, self.test_seed)?;
        let mut memberships = Vec::with_capacity(test.len());
        for case in &test {
            let inputs = normalized(case, &self.normalization)?;
            let refs: Vec<&Volume> = inputs.iter().collect();
            memberships.push(predict_membership(&network, &refs)?);
        }
        let inference = InferenceConfig {
            threshold: self.threshold,
            wm_mask: None,
        };
        let test_dice = memberships
            .iter()
            .zip(&test)
            .map(|(m, case)| dice(&threshold_membership(m, &inference)?, &case.mask))
            .collect::<Result<Vec<_>>>()?;
        let truths: Vec<Volume> = test.into_iter().map(|c| c.mask).collect();
        let sweep = sweep_threshold_cohort(&memberships, &truths)?;
        let best = best_threshold(&sweep).expect("sweep has rows");
        Ok(ExperimentOutcome {
            network,
            log,
            train_slices,
            train_patches: patches.len(),
            train_seconds,
            median_dice: median(&test_dice),
            test_dice,
            sweep,
            best,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_choice_is_spread() {
        let mut m = Volume::zeros([2, 2, 10], [1.0; 3]).unwrap();
        for z in 2..10 {
            m.set(0, 0, z, 1.0);
        }
        assert_eq!(lesion_slices(&m, 4), vec![3, 5, 7, 9]);
        assert_eq!(lesion_slices(&m, 20).len(), 8);
    }

    #[test]
    fn tiny_run() {
        let exp = PhantomExperiment {
            phantom: PhantomSpec {
                dims: [32, 32, 12],
                n_lesions: 3,
                lesion_radius: (1.5, 2.0),
                ..PhantomSpec::default()
            },
            train_cases: 2,
            slices_per_case: 2,
            test_cases: 2,
            last_filters: 2,
            training: TrainingConfig {
                epochs: 1,
                batch_size: 16,
                patch: 9,
                ..TrainingConfig::default()
            },
            ..PhantomExperiment::default()
        };
        let out = exp.run(|_| {}).unwrap();
        assert_eq!(out.test_dice.len(), 2);
        assert_eq!(out.sweep.len(), 17);
        assert_eq!(out.log.len(), 1);
        assert!(out.train_slices <= 4 && out.train_patches > 0);
    }
}
