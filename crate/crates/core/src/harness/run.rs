//! Deterministic experiment execution and artifact publication.
//!
//! Stream slots under `StreamKey::new(seed)`: 0 draws the panel (or the
//! Breiman sample), 1 feeds Monte Carlo tail constants, 2 feeds bootstrap
//! resamples, 3 feeds the coefficient model checks.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{CoefficientConfig, ExperimentConfig, Mode};
use crate::cadlag::CadlagPath;
use crate::coefficients::{self, MomentCheckSpec};
use crate::error::Error;
use crate::innovations::{InnovationSpec, StreamKey};
use crate::series::{draw_panel, DrawStatus, Panel};
use crate::tails::{
    self, Band, BreimanReport, MarginalPoint, ModulusDiagnostic, ModulusThresholds, RegVarEstimate, ScalingCheck,
    SliceRow, TailConstant, TailPoint,
};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "RVSERIES_OUT_DIR";

const PANEL_SLOT: u64 = 0;
const CONSTANT_SLOT: u64 = 1;
const BOOTSTRAP_SLOT: u64 = 2;
const CHECK_SLOT: u64 = 3;

/// Coefficient head length, replicates and term count of the model checks.
const CHECK_HEAD: usize = 10;
const CHECK_SAMPLES: usize = 200;
const CHECK_TERMS: usize = 40;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn stage(stage: &'static str) -> impl FnOnce(Error) -> RunError {
    move |source| RunError::Stage { stage, source }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub replicates: usize,
    pub truncation_failures: usize,
    pub mean_terms: f64,
    pub max_terms: usize,
    /// Largest residual bound over successful draws.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalBlock {
    pub t: f64,
    pub points: Vec<MarginalPoint>,
    pub mean_ratio: f64,
    pub predicted: TailConstant,
    /// `mean_ratio / predicted - 1`.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBands {
    pub positive_fraction: Band,
    pub mean_argmax: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBlock {
    pub k: usize,
    pub threshold: f64,
    pub positive_fraction: f64,
    pub angle_marginals: Vec<tails::AngleMarginal>,
    /// KS distance of argmax locations to the uniform law on `t_1..t_m`.
    pub argmax_ks_uniform: f64,
    /// Argmax counts in `angle_bins` equal bins of (0, 1].
    pub argmax_histogram: Vec<usize>,
    pub bands: Option<SpectralBands>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBlock {
    pub panel: PanelSummary,
    pub hill: RegVarEstimate,
    /// Hill at `k/2`, `k`, `2k`; `None` where undefined.
    pub hill_sweep: Vec<Option<RegVarEstimate>>,
    pub normalizer: usize,
    pub a_n: f64,
    pub tail_curve: Vec<TailPoint>,
    pub scaling: ScalingCheck,
    pub marginal: Option<MarginalBlock>,
    pub spectral: Option<SpectralBlock>,
    pub slices: Vec<SliceRow>,
    pub modulus: Option<ModulusDiagnostic>,
    /// Failed coefficient model checks; empty when all pass.
    pub warnings: Vec<String>,
}

/// Deterministic estimator output of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub experiment: String,
    pub mode: Mode,
    pub seed: u64,
    pub n: usize,
    pub innovation: String,
    pub coefficients: String,
    pub breiman: Option<BreimanReport>,
    pub series: Option<SeriesBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Rendered config.
    pub config: String,
    pub version: String,
    pub platform: String,
    /// SHA-256 of every payload file.
    pub checksums: BTreeMap<String, String>,
    /// Not part of the payload.
    pub timings_ms: BTreeMap<String, f64>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

/// Report plus the payload files, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Computed {
    pub report: TailReport,
    pub files: BTreeMap<String, Vec<u8>>,
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: TailReport,
    pub manifest: RunManifest,
    pub dir: PathBuf,
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Stage {
            stage: "pool",
            source: Error::Io(e.to_string()),
        })?;
    Ok(pool.install(f))
}

/// Draws the series panel of a series-mode config.
pub fn simulate_panel(config: &ExperimentConfig) -> Result<Panel, RunError> {
    let spec = config
        .series_spec()
        .map_err(stage("config"))?
        .ok_or(RunError::Stage {
            stage: "simulate",
            source: Error::WiringMismatch("breiman mode has no series panel"),
        })?;
    let key = StreamKey::new(config.seed).child(PANEL_SLOT);
    in_pool(config.workers, || draw_panel(&key, &spec, config.n))?.map_err(stage("panel"))
}

/// Runs the whole pipeline in memory.
pub fn compute(config: &ExperimentConfig) -> Result<Computed, RunError> {
    in_pool(config.workers, || compute_inner(config))?
}

fn compute_inner(config: &ExperimentConfig) -> Result<Computed, RunError> {
    let mut timings = BTreeMap::new();
    let mut files = BTreeMap::new();
    let root = StreamKey::new(config.seed);
    let mut report = TailReport {
        experiment: config.name.clone(),
        mode: config.mode,
        seed: config.seed,
        n: config.n,
        innovation: config.innovation.kind_name().into(),
        coefficients: config.coefficients.variant(),
        breiman: None,
        series: None,
    };
    match config.mode {
        Mode::Breiman => {
            let start = Instant::now();
            let (CoefficientConfig::Multiplier { law }, InnovationSpec::ParetoScalar { tail }) =
                (&config.coefficients, &config.innovation)
            else {
                return Err(RunError::Stage {
                    stage: "breiman",
                    source: Error::WiringMismatch("breiman mode needs a multiplier and a pareto-scalar innovation"),
                });
            };
            let b = tails::breiman_check(&root.child(PANEL_SLOT), law, tail, config.n, &config.estimators.x_grid)
                .map_err(stage("breiman"))?;
            let mut csv = String::from("x,ratio,se,product_exceedances,innovation_exceedances\n");
            for p in &b.points {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.x, p.ratio, p.se, p.product_exceedances, p.innovation_exceedances
                ));
            }
            files.insert("breiman.csv".to_string(), csv.into_bytes());
            report.breiman = Some(b);
            timings.insert("estimate".to_string(), millis(start));
        }
        Mode::Series => {
            let start = Instant::now();
            let panel = simulate_panel(config)?;
            timings.insert("draw".to_string(), millis(start));
            let start = Instant::now();
            files.insert("panel.csv".to_string(), panel.to_csv().into_bytes());
            let block = estimate_series(config, &root, panel)?;
            files.insert("tail_curve.csv".to_string(), tail_curve_csv(&block.tail_curve).into_bytes());
            if let Some(m) = &block.modulus {
                files.insert("modulus.csv".to_string(), m.to_csv().into_bytes());
            }
            report.series = Some(block);
            timings.insert("estimate".to_string(), millis(start));
        }
    }
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    files.insert(REPORT_FILE.to_string(), json);
    Ok(Computed {
        report,
        files,
        timings_ms: timings,
    })
}

fn tail_curve_csv(points: &[TailPoint]) -> String {
    let mut out = String::from("r,empirical,model\n");
    for p in points {
        let model = p.model.map(|m| m.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", p.r, p.empirical, model));
    }
    out
}

/// Nonzero-coefficient and moment-regime checks, as warning lines.
fn model_warnings(config: &ExperimentConfig, root: &StreamKey) -> Result<Vec<String>, RunError> {
    let Some(family) = config
        .coefficients
        .family(config.grid, &config.innovation)
        .map_err(stage("model checks"))?
    else {
        return Ok(Vec::new());
    };
    let key = root.child(CHECK_SLOT);
    let mut warnings = Vec::new();
    let nonzero = coefficients::nonzero_condition_check(&key.child(0), &family, config.grid, CHECK_HEAD, CHECK_SAMPLES)
        .map_err(stage("model checks"))?;
    if !nonzero.pass {
        warnings.push(format!(
            "coefficients vanish at t = {:?} in all {} sampled heads; the tail limit there is not modeled",
            nonzero.failing, nonzero.samples
        ));
    }
    if let Some(alpha) = config.innovation.tail_index() {
        let spec = MomentCheckSpec {
            alpha,
            gamma: (alpha / 2.0).min(0.1),
            head: CHECK_HEAD,
            samples: CHECK_SAMPLES,
            max_terms: CHECK_TERMS,
        };
        let moments = coefficients::moment_regime_check(&key.child(1), &family, config.grid, &spec)
            .map_err(stage("model checks"))?;
        if !moments.pass {
            warnings.push(format!(
                "moment check failed ({}): decay ratio {:.4}",
                moments.method, moments.decay_ratio
            ));
        }
    }
    Ok(warnings)
}

fn estimate_series(config: &ExperimentConfig, root: &StreamKey, panel: Panel) -> Result<SeriesBlock, RunError> {
    let est = &config.estimators;
    let ok: Vec<_> = panel.entries.iter().filter(|e| e.status == DrawStatus::Ok).collect();
    let summary = PanelSummary {
        replicates: panel.len(),
        truncation_failures: panel.failures(),
        mean_terms: ok.iter().map(|e| e.draw.terms_used as f64).sum::<f64>() / ok.len().max(1) as f64,
        max_terms: ok.iter().map(|e| e.draw.terms_used).max().unwrap_or(0),
        max_residual: ok.iter().map(|e| e.draw.residual_bound).fold(0.0, f64::max),
    };
    drop(ok);
    let paths: Vec<CadlagPath> = panel
        .entries
        .into_iter()
        .filter(|e| e.status == DrawStatus::Ok)
        .map(|e| e.draw.path)
        .collect();
    let norms: Vec<f64> = paths.iter().map(|p| p.sup_norm()).collect();
    let big_n = norms.len();
    if big_n < 2 {
        return Err(RunError::Stage {
            stage: "hill",
            source: Error::InsufficientData(format!("{big_n} successful draws")),
        });
    }

    let k = est.k.unwrap_or_else(|| tails::default_k(big_n));
    let hill = tails::hill_estimate(&norms, k).map_err(stage("hill"))?;
    let hill_sweep = tails::hill_sweep(&norms, k).into_iter().map(|r| r.ok()).collect();
    let normalizer = est.normalizer.unwrap_or((big_n / k).max(2)).min(big_n);
    let a_n = tails::normalizer_a_n(&norms, normalizer).map_err(stage("normalizer"))?;
    let tail_curve =
        tails::tail_curve(&norms, a_n, normalizer, &est.r_grid, Some(&hill)).map_err(stage("tail curve"))?;
    let x0 = tails::empirical_quantile(&norms, est.scale_quantile).map_err(stage("scaling"))?;
    let scaling =
        tails::scaling_check_with(&norms, est.scale_s, x0, est.min_exceedances).map_err(stage("scaling"))?;

    let marginal = if est.levels.is_empty() {
        None
    } else {
        let InnovationSpec::ParetoScalar { tail } = config.innovation else {
            return Err(RunError::Stage {
                stage: "marginal",
                source: Error::WiringMismatch("the marginal check needs a pareto-scalar innovation"),
            });
        };
        let idx = config.grid.floor_index(est.t);
        let values: Vec<f64> = paths.iter().map(|p| p.values()[idx]).collect();
        let points = tails::marginal_tail_ratio(&values, &tail, &est.levels).map_err(stage("marginal"))?;
        let family = config
            .coefficients
            .family(config.grid, &config.innovation)
            .map_err(stage("marginal"))?
            .expect("series mode");
        let predicted = tails::series_tail_constant(
            &root.child(CONSTANT_SLOT),
            &family,
            config.grid,
            est.t,
            tail.alpha,
            est.tail_constant_samples,
        )
        .map_err(stage("tail constant"))?;
        let mean_ratio = points.iter().map(|p| p.ratio).sum::<f64>() / points.len() as f64;
        Some(MarginalBlock {
            t: est.t,
            relative_error: mean_ratio / predicted.value - 1.0,
            points,
            mean_ratio,
            predicted,
        })
    };

    let spectral = match est.spectral_k {
        None => None,
        Some(sk) => Some(spectral_block(config, root, &paths, sk)?),
    };
    let slices = tails::pizza_slices(&paths, a_n, normalizer, &est.r_grid, est.angle_bins, &hill)
        .map_err(stage("slices"))?;
    let modulus = if est.delta_grid.is_empty() {
        None
    } else {
        Some(
            tails::modulus_diagnostic(
                &paths,
                a_n,
                normalizer,
                &est.epsilon_grid,
                &est.delta_grid,
                ModulusThresholds {
                    fraction: est.modulus_fraction,
                    floor: est.modulus_floor,
                },
            )
            .map_err(stage("modulus"))?,
        )
    };
    Ok(SeriesBlock {
        panel: summary,
        hill,
        hill_sweep,
        normalizer,
        a_n,
        tail_curve,
        scaling,
        marginal,
        spectral,
        slices,
        modulus,
        warnings: model_warnings(config, root)?,
    })
}

fn spectral_block(
    config: &ExperimentConfig,
    root: &StreamKey,
    paths: &[CadlagPath],
    k: usize,
) -> Result<SpectralBlock, RunError> {
    let est = &config.estimators;
    let s = tails::spectral_estimate(paths, k).map_err(stage("spectral"))?;
    let locations = &s.summary.argmax_locations;
    let bins = est.angle_bins;
    let mut argmax_histogram = vec![0usize; bins];
    for &t in locations {
        argmax_histogram[((t * bins as f64).ceil() as usize).clamp(1, bins) - 1] += 1;
    }
    let argmax_ks_uniform = tails::ks_distance_uniform_grid(locations, config.grid).map_err(stage("spectral"))?;
    let bands = if est.bootstrap == 0 {
        None
    } else {
        let key = root.child(BOOTSTRAP_SLOT);
        let signs: Vec<f64> = s
            .samples
            .iter()
            .map(|x| f64::from(u8::from(x.angle.values()[x.angle.argmax_abs()] > 0.0)))
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Some(SpectralBands {
            positive_fraction: tails::bootstrap_band(&key.child(0), &signs, mean, est.bootstrap, 0.9)
                .map_err(stage("bootstrap"))?,
            mean_argmax: tails::bootstrap_band(&key.child(1), locations, mean, est.bootstrap, 0.9)
                .map_err(stage("bootstrap"))?,
        })
    };
    Ok(SpectralBlock {
        k,
        threshold: s.threshold,
        positive_fraction: s.summary.positive_fraction,
        angle_marginals: s.summary.angle_marginals,
        argmax_ks_uniform,
        argmax_histogram,
        bands,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory: the config's `out`, else `$RVSERIES_OUT_DIR/<name>`,
/// else `runs/<name>`.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &config.out {
        return out.clone();
    }
    let root = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(&config.name)
}

/// Runs the pipeline and publishes all files to [`output_dir`] atomically.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let computed = compute(config)?;
    let dir = output_dir(config);
    let manifest = RunManifest {
        config: config.render(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        platform: format!("{}-{}", std::env::consts::OS, std::env::consts::ARCH),
        checksums: computed.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        timings_ms: computed.timings_ms.clone(),
    };
    let mut files = computed.files;
    files.insert(
        MANIFEST_FILE.to_string(),
        serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    );
    publish(&dir, &files)?;
    Ok(RunOutput {
        report: computed.report,
        manifest,
        dir,
    })
}

/// Writes `files` into a sibling temp directory and renames it into place.
pub fn publish(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<(), RunError> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let name = dir
        .file_name()
        .ok_or_else(|| RunError::Io {
            path: dir.to_path_buf(),
            message: "output path has no final component".into(),
        })?
        .to_string_lossy()
        .into_owned();
    let pid = std::process::id();
    let tmp = parent.join(format!(".{name}.tmp-{pid}"));
    let result = (|| {
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
        }
        fs::create_dir(&tmp).map_err(io_err(&tmp))?;
        for (file, bytes) in files {
            let path = tmp.join(file);
            fs::write(&path, bytes).map_err(io_err(&path))?;
        }
        if dir.exists() {
            let old = parent.join(format!(".{name}.old-{pid}"));
            fs::rename(dir, &old).map_err(io_err(dir))?;
            fs::rename(&tmp, dir).map_err(io_err(dir))?;
            fs::remove_dir_all(&old).map_err(io_err(&old))
        } else {
            fs::rename(&tmp, dir).map_err(io_err(dir))
        }
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

/// Files in `dir` whose checksum disagrees with its manifest.
pub fn verify_checksums(dir: &Path) -> Result<Vec<String>, RunError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(io_err(&path))?;
    let manifest: RunManifest = serde_json::from_slice(&text).map_err(|e| RunError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let mut bad = Vec::new();
    for (file, sum) in &manifest.checksums {
        match fs::read(dir.join(file)) {
            Ok(bytes) if sha256_hex(&bytes) == *sum => {}
            _ => bad.push(file.clone()),
        }
    }
    Ok(bad)
}

/// Human-readable summary of a `report.json` document.
pub fn summarize(report: &serde_json::Value) -> String {
    use serde_json::Value;
    let num = |v: &Value, ptr: &str| v.pointer(ptr).and_then(Value::as_f64).unwrap_or(f64::NAN);
    let flag = |v: &Value, ptr: &str| v.pointer(ptr).and_then(Value::as_bool).unwrap_or(false);
    let mut out = format!(
        "experiment {} (mode {}, seed {}, n {})\nmodel: {} innovations, {} coefficients\n",
        report["experiment"].as_str().unwrap_or("?"),
        report["mode"].as_str().unwrap_or("?"),
        report["seed"],
        report["n"],
        report["innovation"].as_str().unwrap_or("?"),
        report["coefficients"].as_str().unwrap_or("?")
    );
    let b = &report["breiman"];
    if !b.is_null() {
        out.push_str(&format!(
            "breiman: mean ratio {:.4} vs limit E[Y^alpha] = {:.4} (alpha {})\n",
            num(b, "/mean_ratio"),
            num(b, "/limit"),
            num(b, "/alpha")
        ));
        for p in b["points"].as_array().into_iter().flatten() {
            out.push_str(&format!(
                "  x = {}: ratio {:.4} +- {:.4}\n",
                num(p, "/x"),
                num(p, "/ratio"),
                num(p, "/se")
            ));
        }
    }
    let s = &report["series"];
    if !s.is_null() {
        out.push_str(&format!(
            "panel: {} replicates, {} truncation failures, mean terms {:.1}\n",
            s["panel"]["replicates"], s["panel"]["truncation_failures"], num(s, "/panel/mean_terms")
        ));
        out.push_str(&format!(
            "hill: alpha {:.4} +- {:.4}, c {:.4} (k {})\n",
            num(s, "/hill/alpha"),
            num(s, "/hill/alpha_se"),
            num(s, "/hill/c"),
            s["hill"]["k"]
        ));
        out.push_str(&format!("a_n: {:.4} (n {})\n", num(s, "/a_n"), s["normalizer"]));
        out.push_str(&format!(
            "scaling: ratio {:.4} vs {:.4} (se {:.4}, sufficient {}, agrees {})\n",
            num(s, "/scaling/ratio"),
            num(s, "/scaling/expected"),
            num(s, "/scaling/se"),
            flag(s, "/scaling/sufficient"),
            flag(s, "/scaling/agrees")
        ));
        for w in s["warnings"].as_array().into_iter().flatten() {
            out.push_str(&format!("warning: {}\n", w.as_str().unwrap_or("?")));
        }
        if !s["marginal"].is_null() {
            out.push_str(&format!(
                "marginal at t = {}: mean ratio {:.4} vs predicted {:.4} ({})\n",
                num(s, "/marginal/t"),
                num(s, "/marginal/mean_ratio"),
                num(s, "/marginal/predicted/value"),
                s["marginal"]["predicted"]["method"].as_str().unwrap_or("?")
            ));
        }
        if !s["spectral"].is_null() {
            out.push_str(&format!(
                "spectral: k {}, positive fraction {:.4}, argmax KS to uniform {:.4}\n",
                s["spectral"]["k"],
                num(s, "/spectral/positive_fraction"),
                num(s, "/spectral/argmax_ks_uniform")
            ));
        }
        if !s["modulus"].is_null() {
            out.push_str(&format!(
                "modulus: c1 {}, c2 {}, c3 {}\n",
                flag(s, "/modulus/pass_c1"),
                flag(s, "/modulus/pass_c2"),
                flag(s, "/modulus/pass_c3")
            ));
        }
    }
    out
}
