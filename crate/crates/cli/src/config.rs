use std::path::{Path, PathBuf};

use bifloop_core::continuation::ContinuationConfig;
use bifloop_core::grid::{Grid, Interval};
use bifloop_core::pencil::lambda1;
use bifloop_core::problem::ProblemParams;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Every setting of a run. Read from a flat JSON object; missing keys take
/// their defaults and command-line flags win over the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub d: f64,
    pub q: u32,
    pub a: Vec<f64>,
    pub interval: [f64; 2],
    pub n: usize,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,

    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub ds_min: f64,
    pub ds_max: f64,
    pub ds_init: f64,
    pub w_lambda: f64,
    pub grow: f64,
    pub fast_iters: usize,
    pub trivial_threshold: f64,
    pub closure_tol: f64,
    pub max_steps: usize,
    pub window_margin: f64,
    pub seed_amplitude: f64,
    pub puiseux_seed_x: f64,

    /// Step of the scan for sign changes of μ(λ) on the trivial line.
    pub scan_step: f64,
    /// Initial number of steps of the d-homotopy.
    pub homotopy_steps: usize,
    /// Random starts per nonexistence probe.
    pub probe_attempts: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,

    /// Diffusions swept by `spectrum`. Empty means an even sweep over
    /// `spectrum_d_range` with `spectrum_count` values.
    pub spectrum_d: Vec<f64>,
    pub spectrum_d_range: [f64; 2],
    pub spectrum_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = ContinuationConfig::default();
        Self {
            d: 0.25,
            q: 5,
            a: vec![1.0],
            interval: [0.0, std::f64::consts::PI],
            n: 200,
            lambda_min: None,
            lambda_max: None,
            newton_tol: c.newton_tol,
            newton_max_iter: c.newton_max_iter,
            ds_min: c.ds_min,
            ds_max: c.ds_max,
            ds_init: c.ds_init,
            w_lambda: c.w_lambda,
            grow: c.grow,
            fast_iters: c.fast_iters,
            trivial_threshold: c.trivial_threshold,
            closure_tol: c.closure_tol,
            max_steps: c.max_steps,
            window_margin: c.window_margin,
            seed_amplitude: c.seed_amplitude,
            puiseux_seed_x: c.puiseux_seed_x,
            scan_step: 0.01,
            homotopy_steps: 20,
            probe_attempts: 50,
            seed: 0,
            out: PathBuf::from("out"),
            workers: 1,
            spectrum_d: Vec::new(),
            spectrum_d_range: [0.05, 2.0],
            spectrum_count: 40,
        }
    }
}

/// Flags shared by all commands.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON configuration file
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub q: Option<u32>,
    /// Advection coefficient
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Grid intervals
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_max: Option<f64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed of the random probe profiles
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for tracing
    #[arg(long)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Defaults, then the config file, then the flags; validated.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(v) = o.d {
            c.d = v;
        }
        if let Some(v) = o.q {
            c.q = v;
        }
        if let Some(v) = o.a {
            c.a = vec![v];
        }
        if let Some(v) = o.n {
            c.n = v;
        }
        if o.lambda_min.is_some() {
            c.lambda_min = o.lambda_min;
        }
        if o.lambda_max.is_some() {
            c.lambda_max = o.lambda_max;
        }
        if let Some(v) = &o.out {
            c.out = v.clone();
        }
        if let Some(v) = o.seed {
            c.seed = v;
        }
        if let Some(v) = o.workers {
            c.workers = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.d > 0.0 && self.d.is_finite()) {
            return bad(format!("d must be positive, got {}", self.d));
        }
        if self.q < 4 {
            return bad(format!("q must be at least 4, got {}", self.q));
        }
        if self.n < 8 {
            return bad(format!("n must be at least 8, got {}", self.n));
        }
        if self.a.is_empty() || self.a.iter().any(|x| !x.is_finite()) {
            return bad("a must be a nonempty list of finite numbers".into());
        }
        let positive = [
            ("scan_step", self.scan_step),
            ("spectrum_d_range[0]", self.spectrum_d_range[0]),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.spectrum_d_range[1] < self.spectrum_d_range[0] || self.spectrum_count == 0 {
            return bad("empty spectrum sweep".into());
        }
        if self.spectrum_d.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad("spectrum_d values must be positive".into());
        }
        if self.workers == 0 || self.homotopy_steps == 0 {
            return bad("workers and homotopy_steps must be at least 1".into());
        }
        Interval::new(self.interval[0], self.interval[1]).map_err(|e| CliError::Config(e.to_string()))?;
        if let (Some(lo), Some(hi)) = (self.lambda_min, self.lambda_max) {
            if !(lo < hi) {
                return bad(format!("empty λ window [{lo}, {hi}]"));
            }
        }
        // Tolerance checks live with the tracer.
        self.continuation((-1.0, 1.0))
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn grid(&self) -> Result<Grid> {
        let iv =
            Interval::new(self.interval[0], self.interval[1]).map_err(|e| CliError::Config(e.to_string()))?;
        Grid::build(self.n, iv).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn problem(&self, g: &Grid) -> Result<ProblemParams> {
        ProblemParams::new(self.d, self.q, self.a.clone(), g).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The λ window: the configured bounds, else ±max(4, λ₁(d) + 3).
    pub fn lambda_range(&self, p: &ProblemParams) -> (f64, f64) {
        let l1 = lambda1(p.d, p.abs_a(), p.sigma1).unwrap_or(0.0);
        let half = (l1 + 3.0).max(4.0);
        (self.lambda_min.unwrap_or(-half), self.lambda_max.unwrap_or(half))
    }

    pub fn continuation(&self, lam_range: (f64, f64)) -> ContinuationConfig {
        ContinuationConfig {
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            ds_min: self.ds_min,
            ds_max: self.ds_max,
            ds_init: self.ds_init,
            w_lambda: self.w_lambda,
            grow: self.grow,
            fast_iters: self.fast_iters,
            trivial_threshold: self.trivial_threshold,
            closure_tol: self.closure_tol,
            max_steps: self.max_steps,
            lambda_min: lam_range.0,
            lambda_max: lam_range.1,
            window_margin: self.window_margin,
            seed_amplitude: self.seed_amplitude,
            puiseux_seed_x: self.puiseux_seed_x,
        }
    }

    /// Diffusions for the spectrum sweep, sorted, with `1/σ₁` included.
    pub fn spectrum_values(&self, sigma1: f64) -> Vec<f64> {
        let mut ds = if self.spectrum_d.is_empty() {
            let [lo, hi] = self.spectrum_d_range;
            let k = self.spectrum_count;
            let mut v: Vec<f64> = (0..k)
                .map(|i| {
                    if k == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (k - 1) as f64
                    }
                })
                .collect();
            if (lo..=hi).contains(&(1.0 / sigma1)) {
                v.push(1.0 / sigma1);
            }
            v
        } else {
            self.spectrum_d.clone()
        };
        ds.sort_by(f64::total_cmp);
        ds.dedup();
        ds
    }
}
