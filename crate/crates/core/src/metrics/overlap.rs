use crate::error::{Error, Result};
use crate::volume::Volume;

use super::labeling::{connected_components_18, ComponentLabeling};
use super::score::{challenge_score, ScoreWeights};

fn counts(auto: &Volume, manual: &Volume) -> Result<(usize, usize, usize)> {
    auto.require_same_shape(manual, "automated vs manual segmentation")?;
    let (mut a, mut m, mut both) = (0, 0, 0);
    for (&x, &y) in auto.data().iter().zip(manual.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        a += x as usize;
        m += y as usize;
        both += (x && y) as usize;
    }
    Ok((a, m, both))
}

/// `2|A∩M| / (|A|+|M|)`; 1 when both are empty.
pub fn dice(auto: &Volume, manual: &Volume) -> Result<f64> {
    let (a, m, both) = counts(auto, manual)?;
    Ok(dice_from_counts(a, m, both))
}

fn dice_from_counts(a: usize, m: usize, both: usize) -> f64 {
    if a + m == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + m) as f64
    }
}

/// `|A∩M| / |A|`; for empty `A`, 1 if `M` is also empty, else 0.
pub fn ppv(auto: &Volume, manual: &Volume) -> Result<f64> {
    let (a, m, both) = counts(auto, manual)?;
    Ok(ppv_from_counts(a, m, both))
}

fn ppv_from_counts(a: usize, m: usize, both: usize) -> f64 {
    match (a, m) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => both as f64 / a as f64,
    }
}

/// `abs(|A| − |M|) / |M|`.
pub fn volume_difference(auto: &Volume, manual: &Volume) -> Result<f64> {
    let (a, m, _) = counts(auto, manual)?;
    vd_from_counts(a, m)
}

fn vd_from_counts(a: usize, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(a.abs_diff(m) as f64 / m as f64)
}

/// `(touched, total)`: components of `labels` sharing at least one voxel
/// with `other`, and all components.
fn touched_components(labels: &ComponentLabeling, other: &Volume) -> (usize, usize) {
    let mut hit = vec![false; labels.count()];
    for (&l, &o) in labels.labels.iter().zip(other.data()) {
        if l != 0 && o != 0.0 {
            hit[l as usize - 1] = true;
        }
    }
    (hit.iter().filter(|&&h| h).count(), labels.count())
}

fn lfpr_from(auto_labels: &ComponentLabeling, manual: &Volume) -> f64 {
    match touched_components(auto_labels, manual) {
        (_, 0) => 0.0,
        (hit, total) => (total - hit) as f64 / total as f64,
    }
}

fn ltpr_from(manual_labels: &ComponentLabeling, auto: &Volume) -> f64 {
    match touched_components(manual_labels, auto) {
        (_, 0) => 1.0,
        (hit, total) => hit as f64 / total as f64,
    }
}

/// Lesion false positive rate: automated 18-connected lesions that share no
/// voxel with the manual segmentation, over all automated lesions. 0 when
/// the automated segmentation is empty.
pub fn lfpr(auto: &Volume, manual: &Volume) -> Result<f64> {
    auto.require_same_shape(manual, "automated vs manual segmentation")?;
    Ok(lfpr_from(&connected_components_18(auto), manual))
}

/// Lesion true positive rate: manual lesions touched by the automated
/// segmentation, over all manual lesions. 1 when the manual segmentation
/// is empty.
pub fn ltpr(auto: &Volume, manual: &Volume) -> Result<f64> {
    auto.require_same_shape(manual, "automated vs manual segmentation")?;
    Ok(ltpr_from(&connected_components_18(manual), auto))
}

/// All metrics for one (automated, manual) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub dice: f64,
    pub lfpr: f64,
    pub ltpr: f64,
    pub ppv: f64,
    pub vd: f64,
    /// Challenge score without the cohort-level volume correlation term.
    pub score: f64,
    pub auto_lesions: usize,
    pub manual_lesions: usize,
    pub auto_voxels: usize,
    pub manual_voxels: usize,
}

impl MetricsReport {
    pub fn compute(auto: &Volume, manual: &Volume, weights: &ScoreWeights) -> Result<Self> {
        let (a, m, both) = counts(auto, manual)?;
        let auto_labels = connected_components_18(auto);
        let manual_labels = connected_components_18(manual);
        let mut report = Self {
            dice: dice_from_counts(a, m, both),
            lfpr: lfpr_from(&auto_labels, manual),
            ltpr: ltpr_from(&manual_labels, auto),
            ppv: ppv_from_counts(a, m, both),
            vd: vd_from_counts(a, m)?,
            score: 0.0,
            auto_lesions: auto_labels.count(),
            manual_lesions: manual_labels.count(),
            auto_voxels: a,
            manual_voxels: m,
        };
        report.score = challenge_score(&report, weights, None)?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(dims: [usize; 3], on: &[[usize; 3]]) -> Volume {
        let mut v = Volume::zeros(dims, [1.0; 3]).unwrap();
        for p in on {
            v.set(p[0], p[1], p[2], 1.0);
        }
        v
    }

    #[test]
    fn dice_cases() {
        let a = seg([4, 4, 1], &[[0, 0, 0], [1, 0, 0]]);
        let m = seg([4, 4, 1], &[[1, 0, 0], [3, 3, 0]]);
        let d = seg([4, 4, 1], &[[2, 2, 0]]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &d).unwrap(), 0.0);
        assert_eq!(dice(&a, &m).unwrap(), 0.5);
        assert_eq!(dice(&a, &m).unwrap(), dice(&m, &a).unwrap());
        let e = seg([4, 4, 1], &[]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert!(dice(&a, &seg([4, 4, 2], &[])).is_err());
    }

    #[test]
    fn lesion_rates() {
        // three separated auto lesions, one touching the manual lesion
        let a = seg([9, 3, 1], &[[0, 0, 0], [4, 0, 0], [8, 0, 0]]);
        let m = seg([9, 3, 1], &[[8, 0, 0], [8, 1, 0], [2, 2, 0]]);
        assert!((lfpr(&a, &m).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((ltpr(&a, &m).unwrap() - 0.5).abs() < 1e-15);
        let sub = seg([9, 3, 1], &[[8, 1, 0]]);
        assert_eq!(lfpr(&sub, &m).unwrap(), 0.0);
        let empty = seg([9, 3, 1], &[]);
        assert_eq!(lfpr(&empty, &m).unwrap(), 0.0);
        assert_eq!(ltpr(&a, &empty).unwrap(), 1.0);
    }

    #[test]
    fn single_shared_voxel_counts_as_overlap() {
        let a = seg([6, 1, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        let m = seg([6, 1, 1], &[[2, 0, 0], [3, 0, 0], [4, 0, 0]]);
        assert_eq!(lfpr(&a, &m).unwrap(), 0.0);
        assert_eq!(ltpr(&a, &m).unwrap(), 1.0);
    }

    #[test]
    fn ppv_and_vd() {
        let m = seg([4, 4, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
        let a = seg([4, 4, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 3, 0]]);
        assert_eq!(ppv(&a, &m).unwrap(), 0.75);
        let sub = seg([4, 4, 1], &[[0, 0, 0]]);
        assert_eq!(ppv(&sub, &m).unwrap(), 1.0);
        let off = seg([4, 4, 1], &[[3, 3, 0]]);
        assert_eq!(ppv(&off, &m).unwrap(), 0.0);
        let empty = seg([4, 4, 1], &[]);
        assert_eq!(ppv(&empty, &m).unwrap(), 0.0);
        assert_eq!(ppv(&empty, &empty).unwrap(), 1.0);

        assert_eq!(volume_difference(&a, &m).unwrap(), 0.0);
        let double = seg([4, 4, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [0, 1, 0], [1, 1, 0], [2, 1, 0], [3, 1, 0]]);
        assert_eq!(volume_difference(&double, &m).unwrap(), 1.0);
        assert_eq!(volume_difference(&empty, &m).unwrap(), 1.0);
        assert!(matches!(volume_difference(&m, &empty), Err(Error::EmptyReference)));
    }

    #[test]
    fn report_for_perfect_match() {
        let m = seg([5, 5, 2], &[[1, 1, 0], [1, 2, 0], [4, 4, 1]]);
        let r = MetricsReport::compute(&m, &m, &ScoreWeights::default()).unwrap();
        assert_eq!((r.dice, r.lfpr, r.ltpr, r.ppv, r.vd), (1.0, 0.0, 1.0, 1.0, 0.0));
        assert_eq!((r.auto_lesions, r.manual_lesions), (2, 2));
        assert!((r.score - 100.0).abs() < 1e-9);
    }
}
