//! Per-command parameter sets. Every field is optional so that a config
//! file and command-line flags can be layered: flags win, then the file,
//! then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use mphom_core::fisher::{QuadratureSpec, Scheme};
use serde::{Deserialize, Serialize};

/// Fills every `None` field of `$dst` from `$src`.
macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),+ $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )+
    };
}

/// Config file layout: one table per subcommand.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability_surface: Option<SurfaceArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fi_curve: Option<FiCurveArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fi_vs_ns: Option<FiVsNsArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bucket_compare: Option<BucketArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitArgs>,
}

impl ConfigFile {
    /// Reads TOML, or JSON for `.json` files. A run manifest is accepted
    /// too: its `config` member has the same layout.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value = serde_json::from_str(&text).context("parsing JSON config")?;
            if let Some(inner) = v.get_mut("config") {
                v = inner.take();
            }
            Ok(serde_json::from_value(v).context("config schema")?)
        } else {
            Ok(toml::from_str(&text).context("parsing TOML config")?)
        }
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct QuadArgs {
    /// Integration scheme: auto, gh or mc.
    #[arg(long = "quad")]
    pub scheme: Option<String>,
    /// Gauss-Hermite nodes per momentum (default grows with s).
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Monte Carlo samples per photon number.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative standard error above which a value is flagged.
    #[arg(long)]
    pub rel_error: Option<f64>,
}

impl QuadArgs {
    fn fill(&mut self, other: &QuadArgs) {
        overlay!(self, other; scheme, nodes, samples, seed, rel_error);
        let d = QuadratureSpec::default();
        self.scheme.get_or_insert_with(|| "auto".into());
        self.samples.get_or_insert(d.sample_count);
        self.seed.get_or_insert(d.seed);
        self.rel_error.get_or_insert(d.relative_error_target);
    }

    pub fn spec(&self) -> Result<QuadratureSpec> {
        let scheme = match self.scheme.as_deref().unwrap_or("auto") {
            "auto" => Scheme::Auto,
            "gh" | "gauss-hermite" => Scheme::GaussHermiteTensor,
            "mc" | "monte-carlo" => Scheme::MonteCarloImportance,
            other => bail!("unknown quadrature scheme '{other}' (expected auto, gh or mc)"),
        };
        let d = QuadratureSpec::default();
        let spec = QuadratureSpec {
            scheme,
            nodes_per_dim: self.nodes,
            sample_count: self.samples.unwrap_or(d.sample_count),
            batch_size: d.batch_size,
            seed: self.seed.unwrap_or(d.seed),
            relative_error_target: self.rel_error.unwrap_or(d.relative_error_target),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SurfaceArgs {
    /// Photon number L.
    #[arg(long)]
    pub l: Option<usize>,
    /// Outcome class: B, UA or A.
    #[arg(long)]
    pub x_class: Option<String>,
    /// Separation in units of sigma_x.
    #[arg(long)]
    pub s: Option<f64>,
    /// Mean photon number per source.
    #[arg(long)]
    pub ns: Option<f64>,
    /// Grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Half-width of each axis in units of sigma_k.
    #[arg(long)]
    pub range: Option<f64>,
    /// Momenta k3..kL (units of sigma_k) held fixed when L > 2.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub fixed: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
}

impl SurfaceArgs {
    pub fn resolve(mut self, file: Option<&SurfaceArgs>) -> Self {
        if let Some(f) = file {
            overlay!(self, f; l, x_class, s, ns, grid, range, fixed, sigma_x);
        }
        self.l.get_or_insert(2);
        self.x_class.get_or_insert_with(|| "A".into());
        self.s.get_or_insert(5.0);
        self.ns.get_or_insert(1.5);
        self.grid.get_or_insert(101);
        self.range.get_or_insert(6.0);
        self.sigma_x.get_or_insert(1.0);
        let l = self.l.unwrap_or(2);
        let fixed = self.fixed.get_or_insert_with(Vec::new);
        fixed.resize(l.saturating_sub(2), 0.0);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FiCurveArgs {
    #[arg(long)]
    pub ns: Option<f64>,
    /// Separations: numbers and `lin:a:b:n` / `log:a:b:n` ranges, comma separated.
    #[arg(long)]
    pub s_grid: Option<String>,
    /// Largest photon number summed (default min(7, ceil(2(2 N_s + 1)))).
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[command(flatten)]
    #[serde(default)]
    pub quadrature: QuadArgs,
}

impl FiCurveArgs {
    pub fn resolve(mut self, file: Option<&FiCurveArgs>) -> Self {
        if let Some(f) = file {
            overlay!(self, f; ns, s_grid, lmax, sigma_x);
            self.quadrature.fill(&f.quadrature);
        } else {
            self.quadrature.fill(&QuadArgs::default());
        }
        self.ns.get_or_insert(1.5);
        self.s_grid.get_or_insert_with(|| "log:0.01:8:25".into());
        let ns = self.ns.unwrap_or(1.5);
        self.lmax.get_or_insert(mphom_core::fisher::default_l_max(ns));
        self.sigma_x.get_or_insert(1.0);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FiVsNsArgs {
    #[arg(long)]
    pub s: Option<f64>,
    /// Brightness values, same syntax as separation grids.
    #[arg(long)]
    pub ns_grid: Option<String>,
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[command(flatten)]
    #[serde(default)]
    pub quadrature: QuadArgs,
}

impl FiVsNsArgs {
    pub fn resolve(mut self, file: Option<&FiVsNsArgs>) -> Self {
        if let Some(f) = file {
            overlay!(self, f; s, ns_grid, lmax, sigma_x);
            self.quadrature.fill(&f.quadrature);
        } else {
            self.quadrature.fill(&QuadArgs::default());
        }
        self.s.get_or_insert(0.01);
        self.ns_grid.get_or_insert_with(|| "0.01,lin:0.1:5:50".into());
        self.lmax.get_or_insert(6);
        self.sigma_x.get_or_insert(1.0);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BucketArgs {
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub s_grid: Option<String>,
    #[arg(long)]
    pub ns: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[command(flatten)]
    #[serde(default)]
    pub quadrature: QuadArgs,
}

impl BucketArgs {
    pub fn resolve(mut self, file: Option<&BucketArgs>) -> Self {
        if let Some(f) = file {
            overlay!(self, f; l, s_grid, ns, sigma_x);
            self.quadrature.fill(&f.quadrature);
        } else {
            self.quadrature.fill(&QuadArgs::default());
        }
        self.l.get_or_insert(2);
        self.s_grid.get_or_insert_with(|| "log:0.01:8:25".into());
        self.ns.get_or_insert(1.5);
        self.sigma_x.get_or_insert(1.0);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EstimateArgs {
    #[arg(long)]
    pub true_s: Option<f64>,
    #[arg(long)]
    pub ns: Option<f64>,
    /// Frames per trial.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Frames with more photons are redrawn.
    #[arg(long)]
    pub l_cap: Option<usize>,
    /// Upper end of the separation search interval.
    #[arg(long)]
    pub s_max: Option<f64>,
    /// Monte Carlo samples per photon number for the bound.
    #[arg(long)]
    pub crb_samples: Option<usize>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
}

impl EstimateArgs {
    pub fn resolve(mut self, file: Option<&EstimateArgs>) -> Self {
        if let Some(f) = file {
            overlay!(self, f; true_s, ns, frames, trials, seed, l_cap, s_max, crb_samples, sigma_x);
        }
        self.true_s.get_or_insert(1.0);
        self.ns.get_or_insert(1.5);
        self.frames.get_or_insert(5000);
        self.trials.get_or_insert(200);
        self.seed.get_or_insert(2024);
        self.l_cap.get_or_insert(mphom_core::estimator::DEFAULT_L_CAP);
        self.sigma_x.get_or_insert(1.0);
        let default_hi = (4.0 * self.true_s.unwrap_or(1.0)).max(4.0 * self.sigma_x.unwrap_or(1.0));
        self.s_max.get_or_insert(default_hi);
        self.crb_samples.get_or_insert(QuadratureSpec::default().sample_count);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub ns: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub l_cap: Option<usize>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
}

impl SimulateArgs {
    pub fn resolve(mut self, file: Option<&SimulateArgs>) -> Self {
        if let Some(f) = file {
            overlay!(self, f; s, ns, frames, seed, l_cap, sigma_x);
        }
        self.s.get_or_insert(1.0);
        self.ns.get_or_insert(1.5);
        self.frames.get_or_insert(10_000);
        self.seed.get_or_insert(1);
        self.l_cap.get_or_insert(mphom_core::estimator::DEFAULT_L_CAP);
        self.sigma_x.get_or_insert(1.0);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitArgs {
    /// Record file written by `simulate` (or by hand in the same format).
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Brightness assumed known.
    #[arg(long)]
    pub ns: Option<f64>,
    #[arg(long)]
    pub l_cap: Option<usize>,
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
}

impl FitArgs {
    pub fn resolve(mut self, file: Option<&FitArgs>) -> Self {
        if let Some(f) = file {
            overlay!(self, f; record, ns, l_cap, s_max, sigma_x);
        }
        self.ns.get_or_insert(1.5);
        self.l_cap.get_or_insert(mphom_core::estimator::DEFAULT_L_CAP);
        self.sigma_x.get_or_insert(1.0);
        let hi = 4.0 * self.sigma_x.unwrap_or(1.0);
        self.s_max.get_or_insert(hi);
        self
    }
}

/// Parses `0.1,0.5,lin:1:5:5,log:0.01:8:25` into a sorted list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some(rest) = part.strip_prefix("lin:").or_else(|| part.strip_prefix("log:")) {
            let nums: Vec<&str> = rest.split(':').collect();
            if nums.len() != 3 {
                bail!("range '{part}' must look like lin:a:b:n or log:a:b:n");
            }
            let a: f64 = nums[0].parse().with_context(|| format!("bad start in '{part}'"))?;
            let b: f64 = nums[1].parse().with_context(|| format!("bad end in '{part}'"))?;
            let n: usize = nums[2].parse().with_context(|| format!("bad count in '{part}'"))?;
            if n == 0 {
                bail!("range '{part}' has no points");
            }
            let log = part.starts_with("log:");
            if log && !(a > 0.0 && b > 0.0) {
                bail!("log range '{part}' needs positive ends");
            }
            for i in 0..n {
                let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                out.push(if log { (a.ln() + t * (b.ln() - a.ln())).exp() } else { a + t * (b - a) });
            }
        } else {
            out.push(part.parse().with_context(|| format!("bad grid value '{part}'"))?);
        }
    }
    if out.is_empty() {
        bail!("empty grid '{spec}'");
    }
    if out.iter().any(|v| !v.is_finite()) {
        bail!("grid '{spec}' contains non-finite values");
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}
