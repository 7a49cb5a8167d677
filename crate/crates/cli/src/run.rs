//! Grid evaluation and report bundles.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use qplab::dynamics::EvolutionData;
use qplab::msa::ScaleSchedule;
use qplab::ModelSpec;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::cache;
use crate::config::{ExperimentConfig, ExperimentKind, Format};
use crate::experiments::{self, json_bytes, PointResult};
use crate::suites::{run_suite, Suite};
use crate::CliError;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `0` lets rayon decide.
    pub jobs: usize,
    pub fail_fast: bool,
    /// Overrides `output.format`.
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub params: BTreeMap<String, f64>,
    pub status: PointStatus,
    pub error: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    /// Whether the eigendecomposition came from earlier in this run.
    pub cache_hit: Option<bool>,
    #[serde(skip)]
    pub artifacts: Vec<(String, Vec<u8>)>,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub kind: ExperimentKind,
    pub format: Format,
    pub config_json: String,
    pub config_hash: String,
    pub seed: u64,
    pub points: Vec<PointRecord>,
    pub timings: bool,
    pub total_ms: f64,
    pub disk_cache_hits: usize,
}

impl Bundle {
    pub fn count(&self, status: PointStatus) -> usize {
        self.points.iter().filter(|p| p.status == status).count()
    }

    /// `0` when every point passed, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.points.iter().all(|p| p.status == PointStatus::Pass) {
            0
        } else {
            1
        }
    }

    pub fn manifest(&self) -> serde_json::Value {
        let hits = self.points.iter().filter(|p| p.cache_hit == Some(true)).count();
        let misses = self.points.iter().filter(|p| p.cache_hit == Some(false)).count();
        let mut m = json!({
            "code_version": CODE_VERSION,
            "config_hash": self.config_hash,
            "kind": self.kind.name(),
            "seed": self.seed,
            "format": match self.format { Format::Csv => "csv", Format::Json => "json" },
            "points": self.points.len(),
            "passed": self.count(PointStatus::Pass),
            "failed": self.count(PointStatus::Fail),
            "errors": self.count(PointStatus::Error),
            "cache": { "hits": hits, "misses": misses },
        });
        if self.timings {
            m["timings"] = json!({
                "total_ms": self.total_ms,
                "per_point_ms": self.points.iter().map(|p| p.elapsed_ms).collect::<Vec<_>>(),
                "disk_cache_hits": self.disk_cache_hits,
            });
        }
        m
    }

    pub fn summary_csv(&self) -> String {
        let params: Vec<&String> = self.points.first().map(|p| p.params.keys().collect()).unwrap_or_default();
        let mut metrics: Vec<&String> = self.points.iter().flat_map(|p| p.metrics.keys()).collect();
        metrics.sort();
        metrics.dedup();
        let mut out = String::from("index");
        for k in &params {
            out.push(',');
            out.push_str(k);
        }
        out.push_str(",status,cache_hit");
        for k in &metrics {
            out.push(',');
            out.push_str(k);
        }
        out.push_str(",error\n");
        for p in &self.points {
            out.push_str(&p.index.to_string());
            for k in &params {
                out.push_str(&format!(",{}", p.params[*k]));
            }
            let status = match p.status {
                PointStatus::Pass => "pass",
                PointStatus::Fail => "fail",
                PointStatus::Error => "error",
            };
            let hit = p.cache_hit.map(|h| h.to_string()).unwrap_or_default();
            out.push_str(&format!(",{status},{hit}"));
            for k in &metrics {
                out.push(',');
                if let Some(v) = p.metrics.get(*k) {
                    out.push_str(&v.to_string());
                }
            }
            out.push(',');
            out.push_str(&csv_field(p.error.as_deref().unwrap_or("")));
            out.push('\n');
        }
        out
    }

    /// Writes the bundle to a sibling temporary directory, then renames it over `out`.
    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            Some(_) => PathBuf::from("."),
            None => return Err(CliError::BadOutput(out.to_path_buf())),
        };
        let name = out.file_name().ok_or_else(|| CliError::BadOutput(out.to_path_buf()))?.to_string_lossy().into_owned();
        fs::create_dir_all(&parent).map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| CliError::io(format!("clearing {}", tmp.display()), e))?;
        }
        if let Err(e) = self.write_into(&tmp) {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        let backup = parent.join(format!(".{name}.old-{}", std::process::id()));
        let had_old = out.exists();
        if had_old {
            fs::rename(out, &backup).map_err(|e| CliError::io(format!("moving aside {}", out.display()), e))?;
        }
        if let Err(e) = fs::rename(&tmp, out) {
            if had_old {
                let _ = fs::rename(&backup, out);
            }
            let _ = fs::remove_dir_all(&tmp);
            return Err(CliError::io(format!("publishing {}", out.display()), e));
        }
        if had_old {
            fs::remove_dir_all(&backup).map_err(|e| CliError::io(format!("removing {}", backup.display()), e))?;
        }
        Ok(())
    }

    fn write_into(&self, dir: &Path) -> Result<(), CliError> {
        let put = |path: PathBuf, bytes: &[u8]| -> Result<(), CliError> {
            if let Some(p) = path.parent() {
                fs::create_dir_all(p).map_err(|e| CliError::io(format!("creating {}", p.display()), e))?;
            }
            fs::write(&path, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
        };
        put(dir.join("config.json"), self.config_json.as_bytes())?;
        put(dir.join("manifest.json"), &json_bytes(&self.manifest()))?;
        put(dir.join("summary.json"), &json_bytes(&self.points))?;
        put(dir.join("summary.csv"), self.summary_csv().as_bytes())?;
        for p in &self.points {
            let pdir = dir.join("points").join(format!("{:04}", p.index));
            for (name, bytes) in &p.artifacts {
                put(pdir.join(name), bytes)?;
            }
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

struct GridPoint {
    params: BTreeMap<String, f64>,
    theta: f64,
    energy: f64,
    p: f64,
    suite: Option<Suite>,
}

fn grid(cfg: &ExperimentConfig, kind: ExperimentKind) -> Vec<GridPoint> {
    let s = &cfg.sweep;
    let point = |pairs: &[(&str, f64)], theta, energy, p| GridPoint {
        params: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        theta,
        energy,
        p,
        suite: None,
    };
    match kind {
        ExperimentKind::Assemble | ExperimentKind::Green | ExperimentKind::Msa => {
            s.theta.iter().flat_map(|&t| s.energy.iter().map(move |&e| (t, e))).map(|(t, e)| point(&[("theta", t), ("energy", e)], t, e, 0.0)).collect()
        }
        ExperimentKind::Dynamics => s.theta.iter().flat_map(|&t| s.p.iter().map(move |&p| (t, p))).map(|(t, p)| point(&[("theta", t), ("p", p)], t, 0.0, p)).collect(),
        ExperimentKind::Localize => s.theta.iter().map(|&t| point(&[("theta", t)], t, 0.0, 0.0)).collect(),
        ExperimentKind::VerifyLemmas => Suite::ALL
            .iter()
            .map(|&suite| GridPoint { params: BTreeMap::from([("instances".to_string(), s.samples as f64)]), theta: 0.0, energy: 0.0, p: 0.0, suite: Some(suite) })
            .collect(),
    }
}

struct Eigen {
    data: Arc<EvolutionData>,
    from_disk: bool,
}

/// One eigendecomposition per distinct `θ`, consulting the disk cache when configured.
fn eigendecompose(cfg: &ExperimentConfig, model: &ModelSpec, theta: f64) -> Result<Eigen, String> {
    let bx = experiments::lattice_box(model, cfg.sweep.box_radius)?;
    let h = experiments::hamiltonian(model, &bx, theta)?;
    let dir = cache::cache_dir_from_env();
    let key = cache::cache_key(model, &bx, theta);
    if let Some((values, vectors)) = dir.as_deref().and_then(|d| cache::load(d, &key, bx.sites.len())) {
        let data = cache::evolution_from_parts(&h, bx.sites.clone(), values, vectors);
        if data.reconstruction_defect <= experiments::UNITARY_TOLERANCE {
            return Ok(Eigen { data: Arc::new(data), from_disk: true });
        }
    }
    let data = EvolutionData::new(&h, bx.sites.clone()).map_err(|e| e.to_string())?;
    if let Some(d) = dir {
        // A failed store only costs a recomputation next time.
        let _ = cache::store(&d, &key, &data.eigenvalues, &data.eigenvectors);
    }
    Ok(Eigen { data: Arc::new(data), from_disk: false })
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    kind: ExperimentKind,
    model: ModelSpec,
    schedule: Option<ScaleSchedule>,
    format: Format,
    eigen: HashMap<u64, Result<Eigen, String>>,
}

impl Context<'_> {
    fn evaluate(&self, pt: &GridPoint) -> Result<PointResult, String> {
        let (cfg, model, format) = (self.cfg, &self.model, self.format);
        match self.kind {
            ExperimentKind::Assemble => experiments::assemble(cfg, model, pt.theta, pt.energy, format),
            ExperimentKind::Green => experiments::green(cfg, model, pt.theta, pt.energy, format),
            ExperimentKind::Msa => experiments::msa(cfg, model, self.schedule.as_ref().expect("schedule built for msa"), pt.theta, pt.energy, format),
            ExperimentKind::Dynamics | ExperimentKind::Localize => {
                let eig = self.eigen[&pt.theta.to_bits()].as_ref().map_err(Clone::clone)?;
                if self.kind == ExperimentKind::Dynamics {
                    experiments::dynamics(cfg, model, &eig.data, pt.p, format)
                } else {
                    experiments::localize(cfg, model, &eig.data, pt.theta, format)
                }
            }
            ExperimentKind::VerifyLemmas => {
                let suite = pt.suite.expect("lemma grid carries suites");
                let r = run_suite(suite, cfg.sweep.samples, cfg.sweep.seed);
                let mut out = PointResult { pass: r.passed(), ..Default::default() };
                out.metrics.insert("violations".into(), r.violations as f64);
                out.metrics.insert("skipped".into(), r.skipped as f64);
                out.artifacts.push((format!("{}.json", suite.name()), json_bytes(&r)));
                Ok(out)
            }
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

/// Evaluates every grid point of `cfg`.
///
/// Points are independent and run on `opts.jobs` workers; results keep grid
/// order. Per-point failures are recorded in the bundle unless `fail_fast`
/// is set, in which case the first one in grid order is returned as an error.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Bundle, CliError> {
    let started = Instant::now();
    cfg.validate()?;
    let kind = cfg.kind()?;
    let model = cfg.build_model()?;
    let schedule = if kind == ExperimentKind::Msa { Some(cfg.build_schedule(&model)?) } else { None };
    let format = opts.format.unwrap_or(cfg.output.format);
    let config_json = cfg.canonical_json();
    let config_hash = format!("{:x}", Sha256::digest(config_json.as_bytes()));
    let points = grid(cfg, kind);
    let workers = pool(opts.jobs)?;

    let mut ctx = Context { cfg, kind, model, schedule, format, eigen: HashMap::new() };
    let mut first_seen: HashMap<u64, usize> = HashMap::new();
    if matches!(kind, ExperimentKind::Dynamics | ExperimentKind::Localize) {
        let mut thetas: Vec<f64> = Vec::new();
        for (i, pt) in points.iter().enumerate() {
            if let std::collections::hash_map::Entry::Vacant(v) = first_seen.entry(pt.theta.to_bits()) {
                v.insert(i);
                thetas.push(pt.theta);
            }
        }
        let model = &ctx.model;
        let decomposed: Vec<(u64, Result<Eigen, String>)> = workers.install(|| thetas.par_iter().map(|&t| (t.to_bits(), eigendecompose(cfg, model, t))).collect());
        ctx.eigen = decomposed.into_iter().collect();
    }
    let disk_cache_hits = ctx.eigen.values().filter(|e| matches!(e, Ok(Eigen { from_disk: true, .. }))).count();

    let first_error = AtomicUsize::new(usize::MAX);
    let records: Vec<Option<PointRecord>> = workers.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(index, pt)| {
                if opts.fail_fast && index > first_error.load(Ordering::Relaxed) {
                    return None;
                }
                let t0 = Instant::now();
                let result = ctx.evaluate(pt);
                let cache_hit = first_seen.get(&pt.theta.to_bits()).map(|&first| first != index);
                let record = match result {
                    Ok(r) => PointRecord {
                        index,
                        params: pt.params.clone(),
                        status: if r.pass { PointStatus::Pass } else { PointStatus::Fail },
                        error: None,
                        metrics: r.metrics,
                        cache_hit,
                        artifacts: r.artifacts,
                        elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
                    },
                    Err(message) => {
                        first_error.fetch_min(index, Ordering::Relaxed);
                        PointRecord {
                            index,
                            params: pt.params.clone(),
                            status: PointStatus::Error,
                            artifacts: vec![("error.txt".into(), format!("{message}\n").into_bytes())],
                            error: Some(message),
                            metrics: BTreeMap::new(),
                            cache_hit,
                            elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
                        }
                    }
                };
                Some(record)
            })
            .collect()
    });
    if opts.fail_fast {
        if let Some(p) = records.iter().flatten().find(|p| p.status == PointStatus::Error) {
            return Err(CliError::PointFailed { index: p.index, message: p.error.clone().unwrap_or_default() });
        }
    }
    let points: Vec<PointRecord> = records.into_iter().flatten().collect();
    Ok(Bundle {
        kind,
        format,
        config_json,
        config_hash,
        seed: cfg.sweep.seed,
        points,
        timings: cfg.output.timings,
        total_ms: started.elapsed().as_secs_f64() * 1e3,
        disk_cache_hits,
    })
}
