//! Whole-volume membership prediction, rater averaging, thresholding and the
//! threshold sweep.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{dice, median};
use crate::network::Network;
use crate::volume::Volume;

pub const DEFAULT_THRESHOLD: f64 = 0.30;
pub const DEFAULT_PERCENTILE: f64 = 99.0;
pub const DEFAULT_INTENSITY_CLAMP: f64 = 1.5;

/// Thresholds `0.05, 0.10, ..., 0.85`.
pub fn sweep_thresholds() -> Vec<f64> {
    (1..=17).map(|i| i as f64 / 20.0).collect()
}

/// Per-volume intensity scaling applied identically at train and test time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityNormalization {
    /// Percentile (0–100) of the nonzero intensities mapped to 1.
    pub percentile: f64,
    /// Upper clamp after scaling; the lower clamp is 0.
    pub clamp_max: f64,
}

impl Default for IntensityNormalization {
    fn default() -> Self {
        Self {
            percentile: DEFAULT_PERCENTILE,
            clamp_max: DEFAULT_INTENSITY_CLAMP,
        }
    }
}

impl IntensityNormalization {
    /// Divides by the configured percentile of nonzero voxels and clamps to
    /// `[0, clamp_max]`. An all-zero volume is returned unchanged.
    pub fn apply(&self, volume: &Volume) -> Result<Volume> {
        if !(0.0..=100.0).contains(&self.percentile) || !(self.clamp_max > 0.0) {
            return Err(Error::invalid(format!("bad normalization settings {self:?}")));
        }
        let mut nonzero: Vec<f32> = volume.data().iter().copied().filter(|&v| v != 0.0).collect();
        if let Some(i) = nonzero.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input intensity at nonzero voxel #{i}")));
        }
        if nonzero.is_empty() {
            return Ok(volume.clone());
        }
        nonzero.sort_by(f32::total_cmp);
        // nearest-rank percentile
        let rank = ((self.percentile / 100.0) * nonzero.len() as f64).ceil() as usize;
        let scale = nonzero[rank.clamp(1, nonzero.len()) - 1] as f64;
        if !(scale > 0.0) {
            return Err(Error::invalid(format!(
                "percentile {} of nonzero intensities is {scale}, cannot normalize",
                self.percentile
            )));
        }
        let hi = self.clamp_max;
        volume.with_data(
            volume
                .data()
                .iter()
                .map(|&v| (v as f64 / scale).clamp(0.0, hi) as f32)
                .collect(),
        )
    }
}

/// Applies `norm` to every contrast after checking they share one grid.
pub fn normalize_contrasts(contrasts: &[&Volume], norm: &IntensityNormalization) -> Result<Vec<Volume>> {
    check_contrasts(contrasts)?;
    contrasts.iter().map(|v| norm.apply(v)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub threshold: f64,
    /// Optional binary white-matter mask; segmentation is restricted to it.
    pub wm_mask: Option<Volume>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            wm_mask: None,
        }
    }
}

fn check_contrasts(contrasts: &[&Volume]) -> Result<()> {
    let first = contrasts
        .first()
        .ok_or_else(|| Error::shape("no contrast volumes supplied"))?;
    for c in contrasts {
        c.require_same_shape(first, "contrast volumes")?;
    }
    Ok(())
}

/// Predicts each axial slice independently with the whole-slice forward
/// pass. Output values lie in `[0, 1]`.
pub fn predict_membership(net: &Network<f32>, contrasts: &[&Volume]) -> Result<Volume> {
    check_contrasts(contrasts)?;
    if contrasts.len() != net.config().num_contrasts {
        return Err(Error::shape(format!(
            "network expects {} contrasts, got {}",
            net.config().num_contrasts,
            contrasts.len()
        )));
    }
    let first = contrasts[0];
    let slices = (0..first.num_slices())
        .into_par_iter()
        .map(|z| {
            let planes: Vec<_> = contrasts.iter().map(|c| c.slice(z)).collect();
            net.forward_slice(&planes)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(first.len());
    for s in slices {
        data.extend(s.data.into_iter().map(|v| v.max(0.0)));
    }
    first.with_data(data)
}

/// Voxelwise mean of two memberships.
pub fn average_memberships(m1: &Volume, m2: &Volume) -> Result<Volume> {
    m1.require_same_shape(m2, "membership averaging")?;
    m1.with_data(
        m1.data()
            .iter()
            .zip(m2.data())
            .map(|(&a, &b)| ((a as f64 + b as f64) / 2.0) as f32)
            .collect(),
    )
}

/// 1 where `m ≥ τ` (and the white-matter mask, if any, is set), else 0.
pub fn threshold_membership(m: &Volume, config: &InferenceConfig) -> Result<Volume> {
    let tau = config.threshold;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("threshold {tau} not in (0, 1]")));
    }
    if let Some(wm) = &config.wm_mask {
        m.require_same_shape(wm, "white-matter mask")?;
    }
    let data = m
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let allowed = config.wm_mask.as_ref().is_none_or(|wm| wm.data()[i] != 0.0);
            if allowed && v as f64 >= tau {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    m.with_data(data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub dice: f64,
}

/// Dice of the thresholded membership against `truth` at every sweep
/// threshold.
pub fn sweep_threshold(m: &Volume, truth: &Volume) -> Result<Vec<SweepRow>> {
    m.require_same_shape(truth, "membership vs truth")?;
    sweep_thresholds()
        .into_iter()
        .map(|threshold| {
            let seg = threshold_membership(m, &InferenceConfig { threshold, wm_mask: None })?;
            Ok(SweepRow {
                threshold,
                dice: dice(&seg, truth)?,
            })
        })
        .collect()
}

/// Median Dice across cases at every sweep threshold.
pub fn sweep_threshold_cohort(memberships: &[Volume], truths: &[Volume]) -> Result<Vec<SweepRow>> {
    if memberships.len() != truths.len() || memberships.is_empty() {
        return Err(Error::shape(format!(
            "{} memberships vs {} truths",
            memberships.len(),
            truths.len()
        )));
    }
    let per_case = memberships
        .par_iter()
        .zip(truths)
        .map(|(m, t)| sweep_threshold(m, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(sweep_thresholds()
        .into_iter()
        .enumerate()
        .map(|(i, threshold)| {
            let dices: Vec<f64> = per_case.iter().map(|rows| rows[i].dice).collect();
            SweepRow {
                threshold,
                dice: median(&dices),
            }
        })
        .collect())
}

/// Row with the highest Dice; ties resolve to the lowest threshold.
pub fn best_threshold(rows: &[SweepRow]) -> Option<SweepRow> {
    rows.iter().copied().fold(None, |best, r| match best {
        Some(b) if b.dice >= r.dice => Some(b),
        _ => Some(r),
    })
}
