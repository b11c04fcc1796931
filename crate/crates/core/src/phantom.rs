//! Deterministic synthetic two-contrast brain volumes with known lesions.
//!
//! The brain is an ellipsoid of uniform tissue on a dark background. Lesions
//! are randomly oriented ellipsoids, hyperintense on FLAIR and hypointense
//! on MPRAGE, whose intensity ramps linearly to the surrounding tissue over
//! one voxel outside the lesion surface. The mask is exactly the union of
//! the lesion ellipsoids.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::volume::Volume;

const PLACEMENT_ATTEMPTS: usize = 1000;
/// Lesion voxels must lie within this fraction of the brain radius.
const BRAIN_MARGIN: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueIntensities {
    pub background: f32,
    pub brain: f32,
    pub lesion: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub n_lesions: usize,
    /// Semi-axis range in voxels.
    pub lesion_radius: (f64, f64),
    pub mprage: TissueIntensities,
    pub flair: TissueIntensities,
    pub noise_sigma: f64,
    /// Brain semi-axes as a fraction of each half extent.
    pub brain_extent: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [64, 64, 32],
            spacing: [1.0, 1.0, 1.0],
            n_lesions: 10,
            lesion_radius: (1.5, 4.0),
            mprage: TissueIntensities {
                background: 0.0,
                brain: 0.75,
                lesion: 0.35,
            },
            flair: TissueIntensities {
                background: 0.0,
                brain: 0.45,
                lesion: 0.95,
            },
            noise_sigma: 0.03,
            brain_extent: 0.85,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 3) {
            return Err(Error::invalid(format!("phantom dims {:?} too small", self.dims)));
        }
        let (lo, hi) = self.lesion_radius;
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::invalid(format!("lesion radius range ({lo}, {hi}) invalid")));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid(format!("noise sigma {} invalid", self.noise_sigma)));
        }
        if !(self.brain_extent > 0.0 && self.brain_extent <= 1.0) {
            return Err(Error::invalid(format!("brain extent {} not in (0, 1]", self.brain_extent)));
        }
        if self.flair.lesion <= self.flair.brain {
            return Err(Error::invalid("FLAIR lesions must be brighter than brain tissue"));
        }
        if self.mprage.lesion >= self.mprage.brain {
            return Err(Error::invalid("MPRAGE lesions must be darker than brain tissue"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub mprage: Volume,
    pub flair: Volume,
    pub mask: Volume,
    pub seed: u64,
}

struct Lesion {
    center: [f64; 3],
    radii: [f64; 3],
    /// Rows are the ellipsoid axes in voxel coordinates.
    axes: [[f64; 3]; 3],
}

impl Lesion {
    /// Normalized ellipsoid radius of point `p` (1 on the surface).
    fn norm_radius(&self, p: [f64; 3]) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let mut s = 0.0;
        for (axis, r) in self.axes.iter().zip(self.radii) {
            let u = axis[0] * d[0] + axis[1] * d[1] + axis[2] * d[2];
            s += (u / r) * (u / r);
        }
        s.sqrt()
    }

    /// Approximate distance outside the surface, in voxels.
    fn outside_distance(&self, p: [f64; 3]) -> f64 {
        let min_r = self.radii.iter().copied().fold(f64::INFINITY, f64::min);
        (self.norm_radius(p) - 1.0) * min_r
    }

    fn reach(&self) -> isize {
        self.radii.iter().copied().fold(0.0, f64::max).ceil() as isize + 1
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    // uniform unit quaternion
    let mut q: [f64; 4] = [0.0; 4];
    loop {
        for v in &mut q {
            *v = StandardNormal.sample(rng);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

struct Brain {
    center: [f64; 3],
    semi: [f64; 3],
}

impl Brain {
    fn new(spec: &PhantomSpec) -> Self {
        let center = spec.dims.map(|d| (d as f64 - 1.0) / 2.0);
        let semi = spec.dims.map(|d| spec.brain_extent * d as f64 / 2.0);
        Self { center, semi }
    }

    fn norm_radius(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|i| ((p[i] - self.center[i]) / self.semi[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        self.norm_radius(p) <= 1.0
    }
}

fn lesion_voxels(lesion: &Lesion, dims: [usize; 3]) -> Vec<[usize; 3]> {
    let reach = lesion.reach();
    let c = lesion.center.map(|v| v.round() as isize);
    let mut out = Vec::new();
    for z in c[2] - reach..=c[2] + reach {
        for y in c[1] - reach..=c[1] + reach {
            for x in c[0] - reach..=c[0] + reach {
                if x < 0 || y < 0 || z < 0 || x >= dims[0] as isize || y >= dims[1] as isize || z >= dims[2] as isize {
                    continue;
                }
                let p = [x as f64, y as f64, z as f64];
                if lesion.norm_radius(p) <= 1.0 {
                    out.push([x as usize, y as usize, z as usize]);
                }
            }
        }
    }
    out
}

fn place_lesion(spec: &PhantomSpec, brain: &Brain, rng: &mut ChaCha8Rng, index: usize) -> Result<Lesion> {
    let (lo, hi) = spec.lesion_radius;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let center = [0, 1, 2].map(|i| {
            let lo_c = (brain.center[i] - brain.semi[i]).max(0.0).ceil() as i64;
            let hi_c = (brain.center[i] + brain.semi[i]).min(spec.dims[i] as f64 - 1.0).floor() as i64;
            rng.random_range(lo_c..=hi_c.max(lo_c)) as f64
        });
        let radii = [0, 1, 2].map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo });
        let axes = random_rotation(rng);
        let lesion = Lesion { center, radii, axes };
        let voxels = lesion_voxels(&lesion, spec.dims);
        let inside = voxels.iter().all(|v| {
            let p = v.map(|c| c as f64);
            brain.norm_radius(p) <= BRAIN_MARGIN
        });
        let touches_edge = {
            let r = lesion.reach();
            (0..3).any(|i| center[i] - (r as f64) < 0.0 || center[i] + (r as f64) > spec.dims[i] as f64 - 1.0)
        };
        if inside && !voxels.is_empty() && !touches_edge {
            return Ok(lesion);
        }
    }
    Err(Error::Placement(format!(
        "lesion {index} with radii in {lo}..{hi} does not fit inside {:.0}% of the brain ellipsoid after {PLACEMENT_ATTEMPTS} attempts",
        BRAIN_MARGIN * 100.0
    )))
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<PhantomCase> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let brain = Brain::new(spec);
    let lesions = (0..spec.n_lesions)
        .map(|i| place_lesion(spec, &brain, &mut rng, i))
        .collect::<Result<Vec<_>>>()?;

    let template = Volume::zeros(spec.dims, spec.spacing)?;
    let n = template.len();
    let mut mask = vec![0.0f32; n];
    // lesion weight: 1 inside, linear ramp over one voxel outside, else 0
    let mut weight = vec![0.0f64; n];
    for lesion in &lesions {
        let reach = lesion.reach() + 1;
        let c = lesion.center.map(|v| v.round() as isize);
        for z in (c[2] - reach).max(0)..=(c[2] + reach).min(spec.dims[2] as isize - 1) {
            for y in (c[1] - reach).max(0)..=(c[1] + reach).min(spec.dims[1] as isize - 1) {
                for x in (c[0] - reach).max(0)..=(c[0] + reach).min(spec.dims[0] as isize - 1) {
                    let p = [x as f64, y as f64, z as f64];
                    let i = template.index(x as usize, y as usize, z as usize);
                    let d = lesion.outside_distance(p);
                    let w = if lesion.norm_radius(p) <= 1.0 {
                        mask[i] = 1.0;
                        1.0
                    } else {
                        (1.0 - d).clamp(0.0, 1.0)
                    };
                    weight[i] = weight[i].max(w);
                }
            }
        }
    }

    let render = |t: &TissueIntensities, rng: &mut ChaCha8Rng| -> Result<Volume> {
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let (x, y, z) = template.coords(i);
            let base = if !brain.contains([x as f64, y as f64, z as f64]) {
                t.background
            } else if mask[i] == 1.0 {
                t.lesion
            } else {
                let w = weight[i] as f32;
                t.brain + w * (t.lesion - t.brain)
            };
            let e = if spec.noise_sigma > 0.0 { noise.sample(rng) as f32 } else { 0.0 };
            data.push(base + e);
        }
        template.with_data(data)
    };
    let mprage = render(&spec.mprage, &mut rng)?;
    let flair = render(&spec.flair, &mut rng)?;
    Ok(PhantomCase {
        mprage,
        flair,
        mask: template.with_data(mask)?,
        seed: spec.seed,
    })
}

/// Lesion-load multiplier for case `i` of `n`: lesion count scales from
/// 0.25× to 1.75× of the base and radii from 0.6× to 1.4×.
fn load_scale(i: usize, n: usize) -> (f64, f64) {
    let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    (0.25 + 1.5 * t, 0.6 + 0.8 * t)
}

/// `n_cases` phantoms with per-case seeds drawn from `seed` and lesion loads
/// ranging from low to high across the cohort.
pub fn generate_cohort(n_cases: usize, base: &PhantomSpec, seed: u64) -> Result<Vec<PhantomCase>> {
    if n_cases == 0 {
        return Err(Error::invalid("cohort needs at least one case"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<PhantomSpec> = (0..n_cases)
        .map(|i| {
            let (count_scale, radius_scale) = load_scale(i, n_cases);
            let (lo, hi) = base.lesion_radius;
            PhantomSpec {
                n_lesions: ((base.n_lesions as f64 * count_scale).round() as usize).max(1),
                lesion_radius: (lo * radius_scale, hi * radius_scale),
                seed: rng.next_u64(),
                ..base.clone()
            }
        })
        .collect();
    use rayon::prelude::*;
    specs.par_iter().map(generate_phantom).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> PhantomSpec {
        PhantomSpec {
            dims: [40, 40, 16],
            n_lesions: 5,
            seed: 3,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn no_lesions() {
        let spec = PhantomSpec {
            n_lesions: 0,
            noise_sigma: 0.0,
            ..small_spec()
        };
        let case = generate_phantom(&spec).unwrap();
        assert_eq!(case.mask.count_nonzero(), 0);
        for v in case.flair.data() {
            assert!(*v == 0.0 || *v == 0.45);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_phantom(&small_spec()).unwrap();
        let b = generate_phantom(&small_spec()).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(&PhantomSpec { seed: 4, ..small_spec() }).unwrap();
        assert_ne!(a.mask, c.mask);
    }

    #[test]
    fn noiseless_lesion_mean_is_exact() {
        let spec = PhantomSpec {
            noise_sigma: 0.0,
            ..small_spec()
        };
        let case = generate_phantom(&spec).unwrap();
        assert!(case.mask.count_nonzero() > 0);
        let vals: Vec<f32> = case
            .flair
            .data()
            .iter()
            .zip(case.mask.data())
            .filter(|(_, &m)| m == 1.0)
            .map(|(&v, _)| v)
            .collect();
        assert!(vals.iter().all(|&v| v == spec.flair.lesion));
        let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / vals.len() as f64;
        assert_eq!(mean as f32, spec.flair.lesion);
    }

    #[test]
    fn lesions_inside_brain_and_ramp_outside_mask() {
        let spec = PhantomSpec {
            noise_sigma: 0.0,
            ..small_spec()
        };
        let case = generate_phantom(&spec).unwrap();
        let brain = Brain::new(&spec);
        let mut ramp_voxels = 0;
        for i in 0..case.mask.len() {
            let (x, y, z) = case.mask.coords(i);
            if case.mask.data()[i] == 1.0 {
                assert!(brain.contains([x as f64, y as f64, z as f64]));
            } else {
                let f = case.flair.data()[i];
                if f > spec.flair.brain && f < spec.flair.lesion {
                    ramp_voxels += 1;
                }
            }
        }
        assert!(ramp_voxels > 0);
    }

    #[test]
    fn background_noise_level() {
        let spec = PhantomSpec {
            dims: [64, 64, 64],
            n_lesions: 3,
            noise_sigma: 0.05,
            seed: 11,
            ..PhantomSpec::default()
        };
        let case = generate_phantom(&spec).unwrap();
        let brain = Brain::new(&spec);
        let bg: Vec<f64> = (0..case.flair.len())
            .filter(|&i| {
                let (x, y, z) = case.flair.coords(i);
                !brain.contains([x as f64, y as f64, z as f64])
            })
            .map(|i| case.flair.data()[i] as f64)
            .collect();
        let mean = bg.iter().sum::<f64>() / bg.len() as f64;
        let sd = (bg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (bg.len() - 1) as f64).sqrt();
        assert!((sd - 0.05).abs() <= 0.05 * 0.05, "sd {sd}");
    }

    #[test]
    fn infeasible_placement() {
        let spec = PhantomSpec {
            lesion_radius: (30.0, 40.0),
            ..small_spec()
        };
        let err = generate_phantom(&spec).unwrap_err();
        assert!(matches!(err, Error::Placement(_)));
    }

    #[test]
    fn invalid_contrast_ordering_rejected() {
        let mut spec = small_spec();
        spec.flair.lesion = 0.2;
        assert!(generate_phantom(&spec).is_err());
    }

    #[test]
    fn cohort_loads_vary() {
        let cohort = generate_cohort(10, &PhantomSpec::default(), 5).unwrap();
        assert_eq!(cohort.len(), 10);
        let loads: Vec<usize> = cohort.iter().map(|c| c.mask.count_nonzero()).collect();
        let lo = *loads.iter().min().unwrap() as f64;
        let hi = *loads.iter().max().unwrap() as f64;
        assert!(lo > 0.0 && hi / lo >= 10.0, "{loads:?}");
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(cohort[i].mask, cohort[j].mask);
            }
        }
        assert_eq!(cohort, generate_cohort(10, &PhantomSpec::default(), 5).unwrap());
        assert!(generate_cohort(0, &PhantomSpec::default(), 5).is_err());
    }
}
