use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use flexconn::gradcheck::network_gradcheck;
use flexconn::inference::{
    average_memberships, best_threshold, normalize_contrasts, predict_membership, sweep_threshold_cohort,
    threshold_membership, InferenceConfig, IntensityNormalization,
};
use flexconn::metrics::{median, pearson, theil_sen, wilcoxon_signed_rank, MetricsReport, ScoreWeights};
use flexconn::network::{Network, NetworkConfig};
use flexconn::phantom::{generate_cohort, PhantomSpec};
use flexconn::targets::PatchSet;
use flexconn::training::{prepare_case, train_with_progress};
use flexconn::volio::{load_model, read_volume, save_model, write_volume, Datatype};
use flexconn::volume::{inverse_order, slicing_order};
use flexconn::Volume;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pgm;

const CONTRASTS: usize = 2;
const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn require_list<'a>(values: &'a [PathBuf], flag: &str) -> CliResult<&'a [PathBuf]> {
    if values.is_empty() {
        return Err(CliError::Usage(format!("missing required flag --{flag}")));
    }
    Ok(values)
}

fn require_single<'a>(values: &'a [PathBuf], flag: &str) -> CliResult<&'a Path> {
    match require_list(values, flag)? {
        [one] => Ok(one),
        many => Err(CliError::Usage(format!("--{flag} takes one path here, got {}", many.len()))),
    }
}

fn paired(a: &[PathBuf], a_flag: &str, b: &[PathBuf], b_flag: &str) -> CliResult {
    if a.len() != b.len() {
        return Err(CliError::Usage(format!(
            "--{a_flag} lists {} paths but --{b_flag} lists {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn read_binary(path: &Path) -> CliResult<Volume> {
    let v = read_volume(path)?;
    if !v.is_binary() {
        return Err(CliError::Data(format!("{} is not a binary mask", path.display())));
    }
    Ok(v)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| flexconn::Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Core(flexconn::Error::io(path, e)))
}

fn normalization(cfg: &RunConfig) -> IntensityNormalization {
    IntensityNormalization {
        percentile: cfg.percentile,
        clamp_max: cfg.intensity_clamp,
    }
}

/// Volumes reordered so the requested slicing axis is the third one.
struct Reorder {
    order: [usize; 3],
}

impl Reorder {
    fn new(axis: usize) -> CliResult<Self> {
        Ok(Self {
            order: slicing_order(axis)?,
        })
    }

    fn forward(&self, v: &Volume) -> CliResult<Volume> {
        Ok(v.permute_axes(self.order)?)
    }

    fn back(&self, v: &Volume) -> CliResult<Volume> {
        Ok(v.permute_axes(inverse_order(self.order))?)
    }
}

pub fn train(cfg: &RunConfig) -> CliResult {
    let t1 = require_list(&cfg.t1, "t1")?;
    let flair = require_list(&cfg.flair, "flair")?;
    let mask = require_list(&cfg.mask, "mask")?;
    paired(t1, "t1", flair, "flair")?;
    paired(t1, "t1", mask, "mask")?;
    let out_model = require(&cfg.out_model, "out-model")?;
    let training = cfg.training();
    training.validate()?;
    let net_config = NetworkConfig::with_depth(CONTRASTS, cfg.depth, cfg.last_filters)?;
    let reorder = Reorder::new(cfg.slice_axis)?;
    let norm = normalization(cfg);

    let cases = (0..t1.len())
        .map(|i| -> CliResult<PatchSet> {
            let a = reorder.forward(&read_volume(&t1[i])?)?;
            let b = reorder.forward(&read_volume(&flair[i])?)?;
            let m = reorder.forward(&read_binary(&mask[i])?)?;
            prepare_case(&[&a, &b], &m, cfg.patch, cfg.sigma, &norm).map_err(|e| match e {
                flexconn::Error::NoLesionVoxels => {
                    CliError::Data(format!("{} contains no lesion voxels", mask[i].display()))
                }
                other => other.into(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let patches = PatchSet::concat(&cases)?;
    eprintln!("{} training patches from {} case(s)", patches.len(), cases.len());

    let net = Network::build(net_config, cfg.seed)?;
    let (net, log) = train_with_progress(net, &patches, &training, |r| {
        eprintln!(
            "epoch {:>3}  train {:.6}  val {:.6}  ({:.1}s)",
            r.epoch, r.train_loss, r.val_loss, r.seconds
        );
    })?;
    save_model(&net, out_model)?;
    let log_path = cfg.out_log.clone().unwrap_or_else(|| {
        let mut p = out_model.clone().into_os_string();
        p.push(".csv");
        PathBuf::from(p)
    });
    log.write_csv(&log_path)?;
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> CliResult {
    let model = load_model(require(&cfg.model, "model")?)?;
    let model2 = cfg.model2.as_deref().map(load_model).transpose()?;
    for m in std::iter::once(&model).chain(&model2) {
        if m.config().num_contrasts != CONTRASTS {
            return Err(CliError::Core(flexconn::Error::shape(format!(
                "model expects {} contrasts but T1 and FLAIR ({CONTRASTS}) were supplied",
                m.config().num_contrasts
            ))));
        }
    }
    let t1 = read_volume(require_single(&cfg.t1, "t1")?)?;
    let flair = read_volume(require_single(&cfg.flair, "flair")?)?;
    t1.require_same_shape(&flair, "T1 vs FLAIR")?;
    let out_membership = require(&cfg.out_membership, "out-membership")?;
    let out_seg = require(&cfg.out_seg, "out-seg")?;
    let wm_mask = cfg.wm_mask.as_deref().map(read_binary).transpose()?;
    let inference = InferenceConfig {
        threshold: cfg.threshold,
        wm_mask,
    };

    let reorder = Reorder::new(cfg.slice_axis)?;
    let inputs = normalize_contrasts(&[&reorder.forward(&t1)?, &reorder.forward(&flair)?], &normalization(cfg))?;
    let refs: Vec<&Volume> = inputs.iter().collect();
    let mut membership = predict_membership(&model, &refs)?;
    if let Some(m2) = &model2 {
        membership = average_memberships(&membership, &predict_membership(m2, &refs)?)?;
    }
    if let Some(dir) = &cfg.overlay_dir {
        pgm::write_slices(&membership, dir)?;
    }
    let membership = t1.with_data(reorder.back(&membership)?.into_data())?;
    let seg = threshold_membership(&membership, &inference)?;
    write_volume(&membership, Datatype::Float32, out_membership)?;
    write_volume(&seg, Datatype::Uint8, out_seg)?;
    eprintln!(
        "{} lesion voxels at threshold {}",
        seg.count_nonzero(),
        inference.threshold
    );
    Ok(())
}

const METRICS: [&str; 6] = ["dice", "lfpr", "ltpr", "ppv", "vd", "score"];

fn metric_values(reports: &[MetricsReport]) -> [Vec<f64>; 6] {
    let col = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).collect();
    [
        col(|r| r.dice),
        col(|r| r.lfpr),
        col(|r| r.ltpr),
        col(|r| r.ppv),
        col(|r| r.vd),
        col(|r| r.score),
    ]
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

struct MethodResults {
    name: &'static str,
    paths: Vec<PathBuf>,
    reports: Vec<MetricsReport>,
    volumes: Vec<f64>,
}

fn voxel_volume(v: &Volume) -> f64 {
    v.spacing().iter().product()
}

fn score_method(
    name: &'static str,
    paths: &[PathBuf],
    manual: &[Volume],
    weights: &ScoreWeights,
) -> CliResult<MethodResults> {
    let reports = paths
        .par_iter()
        .zip(manual)
        .map(|(p, m)| -> CliResult<(MetricsReport, f64)> {
            let a = read_binary(p)?;
            let r = MetricsReport::compute(&a, m, weights).map_err(|e| match e {
                flexconn::Error::EmptyReference => {
                    CliError::Data(format!("manual segmentation paired with {} is empty", p.display()))
                }
                other => other.into(),
            })?;
            Ok((r, r.auto_voxels as f64 * voxel_volume(&a)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manual_volumes: Vec<f64> = manual
        .iter()
        .map(|m| m.count_nonzero() as f64 * voxel_volume(m))
        .collect();
    let volumes: Vec<f64> = reports.iter().map(|(_, v)| *v).collect();
    let correlation = pearson(&volumes, &manual_volumes);
    let mut reports: Vec<MetricsReport> = reports.into_iter().map(|(r, _)| r).collect();
    for r in &mut reports {
        r.score = flexconn::metrics::challenge_score(r, weights, correlation)?;
    }
    Ok(MethodResults {
        name,
        paths: paths.to_vec(),
        reports,
        volumes,
    })
}

pub fn evaluate(cfg: &RunConfig) -> CliResult {
    let auto = require_list(&cfg.auto, "auto")?;
    let manual_paths = require_list(&cfg.manual, "manual")?;
    paired(auto, "auto", manual_paths, "manual")?;
    if !cfg.compare.is_empty() {
        paired(&cfg.compare, "compare", manual_paths, "manual")?;
    }
    let out_csv = require(&cfg.out_csv, "out-csv")?;
    let out_summary = cfg.out_summary.clone().unwrap_or_else(|| {
        let stem = out_csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out_csv.with_file_name(format!("{stem}_summary.csv"))
    });
    let weights = ScoreWeights::default();
    let manual = manual_paths
        .par_iter()
        .map(|p| read_binary(p))
        .collect::<CliResult<Vec<_>>>()?;
    let manual_volumes: Vec<f64> = manual
        .iter()
        .map(|m| m.count_nonzero() as f64 * voxel_volume(m))
        .collect();

    let mut methods = vec![score_method("auto", auto, &manual, &weights)?];
    if !cfg.compare.is_empty() {
        methods.push(score_method("compare", &cfg.compare, &manual, &weights)?);
    }

    let mut csv = String::from(
        "case,method,segmentation,manual,dice,lfpr,ltpr,ppv,vd,score,auto_lesions,manual_lesions,auto_volume_mm3,manual_volume_mm3\n",
    );
    for m in &methods {
        for (i, r) in m.reports.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{i},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                m.name,
                csv_field(&m.paths[i].display().to_string()),
                csv_field(&manual_paths[i].display().to_string()),
                r.dice,
                r.lfpr,
                r.ltpr,
                r.ppv,
                r.vd,
                r.score,
                r.auto_lesions,
                r.manual_lesions,
                m.volumes[i],
                manual_volumes[i],
            );
        }
    }
    write_text(out_csv, &csv)?;

    let mut summary = String::from("kind,method,name,value,p_value,detail\n");
    for m in &methods {
        for (name, values) in METRICS.iter().zip(metric_values(&m.reports)) {
            let _ = writeln!(summary, "median,{},{name},{},,", m.name, fmt_f(median(&values)));
        }
        let fit = theil_sen(&manual_volumes, &m.volumes);
        let (slope, intercept) = fit.unwrap_or((f64::NAN, f64::NAN));
        let detail = if fit.is_some() { "theil-sen" } else { "undefined: manual volumes all equal" };
        let _ = writeln!(summary, "volume_fit,{},slope,{},,{detail}", m.name, fmt_f(slope));
        let _ = writeln!(summary, "volume_fit,{},intercept,{},,{detail}", m.name, fmt_f(intercept));
        let r = pearson(&manual_volumes, &m.volumes);
        let detail = if r.is_some() { "pearson" } else { "undefined: constant volumes" };
        let _ = writeln!(
            summary,
            "volume_fit,{},correlation,{},,{detail}",
            m.name,
            fmt_f(r.unwrap_or(f64::NAN))
        );
    }
    if let [a, b] = methods.as_slice() {
        for (name, (x, y)) in METRICS
            .iter()
            .zip(metric_values(&a.reports).into_iter().zip(metric_values(&b.reports)))
        {
            match wilcoxon_signed_rank(&x, &y) {
                Ok(w) => {
                    let _ = writeln!(
                        summary,
                        "wilcoxon,auto-compare,{name},{},{},{} n={}",
                        w.statistic,
                        w.p_value,
                        if w.exact { "exact" } else { "normal approximation" },
                        w.n_effective
                    );
                }
                Err(e) => {
                    eprintln!("warning: wilcoxon on {name}: {e}");
                    let _ = writeln!(summary, "warning,auto-compare,{name},,,{}", csv_field(&e.to_string()));
                }
            }
        }
    }
    write_text(&out_summary, &summary)?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> CliResult {
    let memberships = require_list(&cfg.membership, "membership")?;
    let truths = require_list(&cfg.truth, "truth")?;
    paired(memberships, "membership", truths, "truth")?;
    let out_csv = require(&cfg.out_csv, "out-csv")?;
    let m = memberships
        .par_iter()
        .map(|p| read_volume(p).map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    let t = truths.par_iter().map(|p| read_binary(p)).collect::<CliResult<Vec<_>>>()?;
    let rows = sweep_threshold_cohort(&m, &t)?;
    let mut csv = String::from("threshold,dice\n");
    for r in &rows {
        let _ = writeln!(csv, "{:.2},{}", r.threshold, r.dice);
    }
    write_text(out_csv, &csv)?;
    if let Some(best) = best_threshold(&rows) {
        eprintln!("best threshold {:.2} (dice {:.4})", best.threshold, best.dice);
    }
    Ok(())
}

pub struct PhantomOptions {
    pub out_dir: PathBuf,
    pub cases: usize,
    pub dims: [usize; 3],
    pub lesions: usize,
    pub radius: (f64, f64),
    pub noise: f64,
    pub seed: u64,
}

pub fn phantom(opts: &PhantomOptions) -> CliResult {
    let spec = PhantomSpec {
        dims: opts.dims,
        n_lesions: opts.lesions,
        lesion_radius: opts.radius,
        noise_sigma: opts.noise,
        ..PhantomSpec::default()
    };
    let cohort = generate_cohort(opts.cases, &spec, opts.seed)?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| flexconn::Error::io(&opts.out_dir, e))?;
    for (i, case) in cohort.iter().enumerate() {
        let base = opts.out_dir.join(format!("case_{i:03}"));
        let path = |suffix: &str| PathBuf::from(format!("{}_{suffix}.nii", base.display()));
        write_volume(&case.mprage, Datatype::Float32, &path("t1"))?;
        write_volume(&case.flair, Datatype::Float32, &path("flair"))?;
        write_volume(&case.mask, Datatype::Uint8, &path("mask"))?;
        eprintln!("case {i}: seed {}, {} lesion voxels", case.seed, case.mask.count_nonzero());
    }
    Ok(())
}

pub fn gradcheck(seed: u64, coordinates: usize) -> CliResult {
    if coordinates == 0 {
        return Err(CliError::Usage("--coordinates must be positive".into()));
    }
    let report = network_gradcheck(seed, coordinates)?;
    println!(
        "max relative error {:.3e} over {} coordinates (tolerance {GRADCHECK_TOLERANCE:e})",
        report.max_relative_error, report.coordinates
    );
    if !(report.max_relative_error <= GRADCHECK_TOLERANCE) {
        return Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_relative_error
        )));
    }
    Ok(())
}
