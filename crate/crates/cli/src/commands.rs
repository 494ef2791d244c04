//! Subcommand bodies. Separations on the command line are in units of
//! `sigma_x`, momenta in units of `sigma_k`, Fisher information in units
//! of `sigma_k^2`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use mphom_core::coincidence::special::class_density;
use mphom_core::estimator::{mle_separation, read_record, run_study, simulate_experiment, write_record, ExperimentConfig, MleOptions};
use mphom_core::fisher::{bucket_fisher, fisher_l, fisher_total, subrayleigh_fisher_total};
use mphom_core::{two_photon_density, CoincidenceModel, OutcomeClass, PsfModel, SourceScene, TwoPhotonCoordinates};
use serde::Serialize;

use crate::config::{
    parse_grid, BucketArgs, ConfigFile, EstimateArgs, FiCurveArgs, FiVsNsArgs, FitArgs, SimulateArgs, SurfaceArgs,
};
use crate::output::{file_name, manifest_path, num, sibling, write_json, Manifest, Table};

/// Bad input from the user; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Core parameter validation errors are usage errors too.
fn check<T>(r: mphom_core::Result<T>) -> Result<T> {
    r.map_err(|e| UsageError(e.to_string()).into())
}

pub struct RunOutcome {
    pub outputs: Vec<PathBuf>,
    pub unconverged: usize,
}

pub struct Runner {
    pub out_dir: PathBuf,
    pub file: ConfigFile,
}

impl Runner {
    fn target(&self, out: Option<PathBuf>, default: &str) -> PathBuf {
        self.out_dir.join(out.unwrap_or_else(|| PathBuf::from(default)))
    }

    fn finish(&self, command: &'static str, config: ConfigFile, outputs: Vec<PathBuf>, unconverged: usize) -> Result<RunOutcome> {
        let manifest = Manifest {
            tool: "mphom",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            outputs: outputs.iter().map(|p| file_name(p)).collect(),
            unconverged,
        };
        let path = manifest_path(&outputs[0]);
        write_json(&path, &manifest)?;
        let mut all = outputs;
        all.push(path);
        Ok(RunOutcome { outputs: all, unconverged })
    }

    pub fn probability_surface(&self, args: SurfaceArgs, out: Option<PathBuf>) -> Result<RunOutcome> {
        let a = args.resolve(self.file.probability_surface.as_ref());
        let l = a.l.unwrap_or(2);
        let class = check(OutcomeClass::parse(a.x_class.as_deref().unwrap_or("")))?;
        if l == 0 || l > mphom_core::coincidence::MAX_PHOTONS {
            return usage(format!("photon number must be in 1..={}", mphom_core::coincidence::MAX_PHOTONS));
        }
        if !class.exists_for(l) {
            return usage(format!("class {} does not occur for L={l}", class.label()));
        }
        let grid = a.grid.unwrap_or(0);
        let range = a.range.unwrap_or(0.0);
        if grid < 2 {
            return usage("--grid needs at least 2 points");
        }
        if !(range > 0.0 && range.is_finite()) {
            return usage("--range must be positive");
        }
        let psf = check(PsfModel::new(a.sigma_x.unwrap_or(1.0)))?;
        let sk = psf.sigma_k();
        let scene = check(SourceScene::new(a.s.unwrap_or(0.0) * psf.sigma_x(), a.ns.unwrap_or(0.0)))?;
        let model = CoincidenceModel::new(&scene, &psf);
        let axis: Vec<f64> = (0..grid).map(|i| -range + 2.0 * range * i as f64 / (grid - 1) as f64).collect();
        // densities are reported per unit of sigma_k in every momentum
        let jac = sk.powi(l as i32);

        let path = self.target(out, "surface.csv");
        let mut table;
        match l {
            1 => {
                table = Table::create(&path, &["k1", "density"])?;
                for &k in &axis {
                    let d = class_density(&[k * sk], class, &model)?;
                    table.row([num(k), num(d * jac)])?;
                }
            }
            2 => {
                table = Table::create(&path, &["kbar", "dk", "density"])?;
                for &kbar in &axis {
                    for &dk in &axis {
                        let c = TwoPhotonCoordinates { k_bar: kbar * sk, delta_k: dk * sk };
                        let d = two_photon_density(c, class, &model)?;
                        table.row([num(kbar), num(dk), num(d * jac)])?;
                    }
                }
            }
            _ => {
                let header: Vec<String> = (1..=l).map(|i| format!("k{i}")).chain(["density".into()]).collect();
                table = Table::create(&path, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
                let fixed = a.fixed.clone().unwrap_or_default();
                let mut k = vec![0.0; l];
                for &k1 in &axis {
                    for &k2 in &axis {
                        k[0] = k1;
                        k[1] = k2;
                        k[2..].copy_from_slice(&fixed);
                        let phys: Vec<f64> = k.iter().map(|v| v * sk).collect();
                        let d = class_density(&phys, class, &model)?;
                        table.row(k.iter().map(|&v| num(v)).chain([num(d * jac)]))?;
                    }
                }
            }
        }
        let csv = table.finish()?;
        let config = ConfigFile { probability_surface: Some(a), ..Default::default() };
        self.finish("probability-surface", config, vec![csv], 0)
    }

    pub fn fi_curve(&self, args: FiCurveArgs, out: Option<PathBuf>) -> Result<RunOutcome> {
        let a = args.resolve(self.file.fi_curve.as_ref());
        let quad = check_any(a.quadrature.spec())?;
        let grid = check_any(parse_grid(a.s_grid.as_deref().unwrap_or("")))?;
        let lmax = a.lmax.unwrap_or(2);
        if lmax < 2 {
            return usage("--lmax must be at least 2");
        }
        let psf = check(PsfModel::new(a.sigma_x.unwrap_or(1.0)))?;
        let ns = a.ns.unwrap_or(0.0);
        let scenes = grid
            .iter()
            .map(|&s| check(SourceScene::new(s * psf.sigma_x(), ns)))
            .collect::<Result<Vec<_>>>()?;

        let path = self.target(out, "fi_curve.csv");
        let mut table = Table::create(&path, &["s", "L", "F_L", "F_L_stderr", "F_total", "converged"])?;
        let mut unconverged = 0;
        for (&s, scene) in grid.iter().zip(&scenes) {
            info!("fi-curve: s = {s}");
            let b = fisher_total(scene, &psf, Some(lmax), &quad)?;
            for (l, v) in &b.per_l {
                unconverged += usize::from(!v.converged);
                table.row([num(s), l.to_string(), num(v.value), num(v.stderr), num(b.total), v.converged.to_string()])?;
            }
        }
        let csv = table.finish()?;
        let config = ConfigFile { fi_curve: Some(a), ..Default::default() };
        self.finish("fi-curve", config, vec![csv], unconverged)
    }

    pub fn fi_vs_ns(&self, args: FiVsNsArgs, out: Option<PathBuf>) -> Result<RunOutcome> {
        let a = args.resolve(self.file.fi_vs_ns.as_ref());
        let quad = check_any(a.quadrature.spec())?;
        let grid = check_any(parse_grid(a.ns_grid.as_deref().unwrap_or("")))?;
        let lmax = a.lmax.unwrap_or(2);
        if lmax < 2 {
            return usage("--lmax must be at least 2");
        }
        let psf = check(PsfModel::new(a.sigma_x.unwrap_or(1.0)))?;
        let s = a.s.unwrap_or(0.0) * psf.sigma_x();
        let scenes = grid.iter().map(|&n| check(SourceScene::new(s, n))).collect::<Result<Vec<_>>>()?;

        let path = self.target(out, "fi_vs_ns.csv");
        let mut table = Table::create(&path, &["ns", "L", "F_L", "F_total", "closed_form_total", "converged"])?;
        let mut unconverged = 0;
        for (&n, scene) in grid.iter().zip(&scenes) {
            info!("fi-vs-ns: ns = {n}");
            let b = fisher_total(scene, &psf, Some(lmax), &quad)?;
            let closed = subrayleigh_fisher_total(n);
            for (l, v) in &b.per_l {
                unconverged += usize::from(!v.converged);
                table.row([num(n), l.to_string(), num(v.value), num(b.total), num(closed), v.converged.to_string()])?;
            }
        }
        let csv = table.finish()?;
        let config = ConfigFile { fi_vs_ns: Some(a), ..Default::default() };
        self.finish("fi-vs-ns", config, vec![csv], unconverged)
    }

    pub fn bucket_compare(&self, args: BucketArgs, out: Option<PathBuf>) -> Result<RunOutcome> {
        let a = args.resolve(self.file.bucket_compare.as_ref());
        let quad = check_any(a.quadrature.spec())?;
        let grid = check_any(parse_grid(a.s_grid.as_deref().unwrap_or("")))?;
        let l = a.l.unwrap_or(0);
        if !(2..=4).contains(&l) {
            return usage("bucket comparison supports L = 2, 3 or 4");
        }
        let psf = check(PsfModel::new(a.sigma_x.unwrap_or(1.0)))?;
        let ns = a.ns.unwrap_or(0.0);
        let scenes = grid
            .iter()
            .map(|&s| check(SourceScene::new(s * psf.sigma_x(), ns)))
            .collect::<Result<Vec<_>>>()?;

        let path = self.target(out, "bucket.csv");
        let mut table = Table::create(&path, &["s", "F_resolved", "F_bucket", "F_resolved_stderr", "converged"])?;
        let mut unconverged = 0;
        for (&s, scene) in grid.iter().zip(&scenes) {
            info!("bucket-compare: s = {s}");
            let resolved = fisher_l(scene, &psf, l, &quad)?;
            let bucket = bucket_fisher(scene, &psf, l)?;
            unconverged += usize::from(!resolved.converged);
            table.row([num(s), num(resolved.value), num(bucket), num(resolved.stderr), resolved.converged.to_string()])?;
        }
        let csv = table.finish()?;
        let config = ConfigFile { bucket_compare: Some(a), ..Default::default() };
        self.finish("bucket-compare", config, vec![csv], unconverged)
    }

    pub fn estimate(&self, args: EstimateArgs, out: Option<PathBuf>) -> Result<RunOutcome> {
        let a = args.resolve(self.file.estimate.as_ref());
        let trials = a.trials.unwrap_or(0);
        if trials < 2 {
            return usage("--trials must be at least 2");
        }
        let psf = check(PsfModel::new(a.sigma_x.unwrap_or(1.0)))?;
        let sx = psf.sigma_x();
        let scene = check(SourceScene::new(a.true_s.unwrap_or(0.0) * sx, a.ns.unwrap_or(0.0)))?;
        let mut cfg = ExperimentConfig::new(scene, psf, a.frames.unwrap_or(0), a.seed.unwrap_or(0));
        cfg.l_cap = a.l_cap.unwrap_or(0);
        cfg.search = (0.0, a.s_max.unwrap_or(0.0) * sx);
        check(cfg.validate())?;
        let quad = mphom_core::QuadratureSpec::default().with_samples(a.crb_samples.unwrap_or(0));
        check(quad.validate())?;

        let study = run_study(&cfg, trials, &quad)?;
        let path = self.target(out, "estimate.csv");
        let mut table = Table::create(&path, &["trial", "s_hat", "at_boundary"])?;
        for t in &study.trials {
            table.row([t.trial.to_string(), num(t.s_hat / sx), t.at_boundary.to_string()])?;
        }
        let csv = table.finish()?;

        let summary = StudySummary {
            true_s: study.true_separation / sx,
            ns: study.brightness,
            frames: study.frames,
            trials: study.trials.len(),
            mean: study.mean / sx,
            variance: study.variance / (sx * sx),
            bias: study.bias / sx,
            bias_stderr: study.bias_stderr / sx,
            crb: study.crb.crb / (sx * sx),
            fisher_per_frame: study.crb.fisher_per_frame,
            fisher_stderr: study.crb.fisher_stderr,
            l_cap: cfg.l_cap,
            variance_ratio: study.variance_ratio,
            variance_window: (0.8, 1.3),
            boundary_hits: study.boundary_hits,
            bias_ok: study.bias_ok,
            variance_ok: study.variance_ok,
            passed: study.passed(),
        };
        let summary_path = sibling(&csv, "summary.json");
        write_json(&summary_path, &summary)?;
        info!(
            "estimate: mean {} variance/CRB {} ({})",
            summary.mean,
            summary.variance_ratio,
            if summary.passed { "pass" } else { "fail" }
        );
        let unconverged = usize::from(!study.crb.converged);
        let config = ConfigFile { estimate: Some(a), ..Default::default() };
        self.finish("estimate", config, vec![csv, summary_path], unconverged)
    }

    pub fn simulate(&self, args: SimulateArgs, out: Option<PathBuf>) -> Result<RunOutcome> {
        let a = args.resolve(self.file.simulate.as_ref());
        let psf = check(PsfModel::new(a.sigma_x.unwrap_or(1.0)))?;
        let scene = check(SourceScene::new(a.s.unwrap_or(0.0) * psf.sigma_x(), a.ns.unwrap_or(0.0)))?;
        let mut cfg = ExperimentConfig::new(scene, psf, a.frames.unwrap_or(0), a.seed.unwrap_or(0));
        cfg.l_cap = a.l_cap.unwrap_or(0);
        check(cfg.validate())?;
        let record = simulate_experiment(&cfg)?;
        let path = self.target(out, "record.txt");
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        write_record(&mut w, &record, &psf)?;
        w.flush()?;
        let config = ConfigFile { simulate: Some(a), ..Default::default() };
        self.finish("simulate", config, vec![path], 0)
    }

    pub fn fit(&self, args: FitArgs, out: Option<PathBuf>) -> Result<RunOutcome> {
        let a = args.resolve(self.file.fit.as_ref());
        let Some(record_path) = a.record.clone() else {
            return usage("--record is required");
        };
        let psf = check(PsfModel::new(a.sigma_x.unwrap_or(1.0)))?;
        let sx = psf.sigma_x();
        let ns = a.ns.unwrap_or(0.0);
        check(SourceScene::new(0.0, ns))?;
        let record = read_record(BufReader::new(open(&record_path)?), &psf)
            .with_context(|| format!("reading {}", record_path.display()))?;
        let opts = MleOptions { search: (0.0, a.s_max.unwrap_or(0.0) * sx), l_cap: a.l_cap.unwrap_or(0), ..Default::default() };
        let r = mle_separation(&record, &psf, ns, &opts)?;
        let fit = FitSummary {
            s_hat: r.s_hat / sx,
            log_likelihood: r.log_likelihood,
            at_boundary: r.at_boundary,
            observed_information: r.observed_information * sx * sx,
            concave: r.concave,
            frames: r.frames,
        };
        let path = self.target(out, "fit.json");
        write_json(&path, &fit)?;
        let config = ConfigFile { fit: Some(a), ..Default::default() };
        self.finish("fit", config, vec![path], 0)
    }
}

fn check_any<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| UsageError(format!("{e:#}")).into())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

/// Estimation study in units of `sigma_x`.
#[derive(Debug, Serialize)]
struct StudySummary {
    true_s: f64,
    ns: f64,
    frames: usize,
    trials: usize,
    mean: f64,
    variance: f64,
    bias: f64,
    bias_stderr: f64,
    crb: f64,
    fisher_per_frame: f64,
    fisher_stderr: f64,
    l_cap: usize,
    variance_ratio: f64,
    variance_window: (f64, f64),
    boundary_hits: usize,
    bias_ok: bool,
    variance_ok: bool,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct FitSummary {
    s_hat: f64,
    log_likelihood: f64,
    at_boundary: bool,
    observed_information: f64,
    concave: bool,
    frames: usize,
}
