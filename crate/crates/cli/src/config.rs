//! Run configuration: defaults, flat `key = value` files and command-line
//! overrides, merged in that order of increasing precedence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kspace_policy::estimators::{AcquisitionConfig, Mode, RunSettings};
use kspace_policy::metrics::SsimWindow;
use kspace_policy::policynet::{Architecture, LrSchedule};
use kspace_policy::seeding::derive_seed;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Generate { count: usize, size: usize },
    Pgm(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub width: Option<usize>,
    pub initial_budget: usize,
    pub total_budget: usize,
    pub samples_per_step: usize,
    /// Only meaningful in non-greedy mode; `None` means 1.
    pub gamma: Option<f64>,
    pub data: DataSource,
    pub data_seed: Option<u64>,
    pub split: (f64, f64, f64),
    pub window: SsimWindow,
    pub recon_dir: Option<PathBuf>,
    pub arch: Option<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Option<LrSchedule>,
    pub seed: u64,
    pub workers: usize,
    pub q_eval: usize,
    pub mi_replicates: usize,
    pub bootstrap: usize,
    pub snr_batches: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Greedy,
            width: None,
            initial_budget: 4,
            total_budget: 12,
            samples_per_step: 8,
            gamma: None,
            data: DataSource::Generate {
                count: 200,
                size: 32,
            },
            data_seed: None,
            split: (0.6, 0.2, 0.2),
            window: SsimWindow::Gaussian11,
            recon_dir: None,
            arch: None,
            epochs: 15,
            batch_size: 16,
            learning_rate: 5e-5,
            schedule: None,
            seed: 0,
            workers: 1,
            q_eval: 8,
            mi_replicates: 8,
            bootstrap: 200,
            snr_batches: 50,
            out: PathBuf::from("run"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse `{value}` for `{key}`")))
}

/// Seeds fanned out from the run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub split: u64,
    pub init: u64,
    pub train: u64,
    pub eval: u64,
    pub analysis: u64,
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "mode" => self.mode = value.parse().map_err(|e| CliError::Config(format!("{e}")))?,
            "width" => {
                let w = parse(key, value)?;
                self.width = Some(w);
                if let DataSource::Generate { count, .. } = self.data {
                    self.data = DataSource::Generate { count, size: w };
                }
            }
            "L" | "initial_budget" => self.initial_budget = parse(key, value)?,
            "M" | "total_budget" => self.total_budget = parse(key, value)?,
            "q" | "samples_per_step" => self.samples_per_step = parse(key, value)?,
            "gamma" => self.gamma = Some(parse(key, value)?),
            "data" => {
                self.data = if value == "generate" {
                    match self.data {
                        DataSource::Generate { .. } => self.data.clone(),
                        DataSource::Pgm(_) => RunConfig::default().data,
                    }
                } else {
                    DataSource::Pgm(PathBuf::from(value))
                }
            }
            "count" | "size" => {
                let n: usize = parse(key, value)?;
                let (mut count, mut size) = match self.data {
                    DataSource::Generate { count, size } => (count, size),
                    DataSource::Pgm(_) => {
                        return Err(CliError::Config(format!("`{key}` only applies to generated data")))
                    }
                };
                if key == "count" {
                    count = n;
                } else {
                    size = n;
                }
                self.data = DataSource::Generate { count, size };
            }
            "data_seed" => self.data_seed = Some(parse(key, value)?),
            "split" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| parse(key, p.trim()))
                    .collect::<Result<_, _>>()?;
                if parts.len() != 3 {
                    return Err(CliError::Config("`split` needs three fractions".into()));
                }
                self.split = (parts[0], parts[1], parts[2]);
            }
            "window" => self.window = value.parse().map_err(|e| CliError::Config(format!("{e}")))?,
            "recon_dir" => self.recon_dir = Some(PathBuf::from(value)),
            "arch" => self.arch = Some(value.to_string()),
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" | "learning_rate" => self.learning_rate = parse(key, value)?,
            "schedule" => {
                self.schedule = Some(value.parse().map_err(|e| CliError::Config(format!("{e}")))?)
            }
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "q_eval" => self.q_eval = parse(key, value)?,
            "mi_replicates" => self.mi_replicates = parse(key, value)?,
            "bootstrap" => self.bootstrap = parse(key, value)?,
            "snr_batches" => self.snr_batches = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected `key = value`", origin.display(), n + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    /// The merged configuration in the file format accepted by
    /// [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", self.mode.to_string());
        if let Some(w) = self.width {
            kv("width", w.to_string());
        }
        kv("L", self.initial_budget.to_string());
        kv("M", self.total_budget.to_string());
        kv("q", self.samples_per_step.to_string());
        if let Some(g) = self.gamma {
            kv("gamma", g.to_string());
        }
        match &self.data {
            DataSource::Generate { count, size } => {
                kv("data", "generate".into());
                kv("count", count.to_string());
                kv("size", size.to_string());
            }
            DataSource::Pgm(p) => kv("data", p.display().to_string()),
        }
        if let Some(d) = self.data_seed {
            kv("data_seed", d.to_string());
        }
        kv("split", format!("{},{},{}", self.split.0, self.split.1, self.split.2));
        kv("window", self.window.to_string());
        if let Some(r) = &self.recon_dir {
            kv("recon_dir", r.display().to_string());
        }
        if let Some(a) = &self.arch {
            kv("arch", a.clone());
        }
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", self.learning_rate.to_string());
        kv("schedule", self.lr_schedule().to_string());
        kv("seed", self.seed.to_string());
        kv("workers", self.workers.to_string());
        kv("q_eval", self.q_eval.to_string());
        kv("mi_replicates", self.mi_replicates.to_string());
        kv("bootstrap", self.bootstrap.to_string());
        kv("snr_batches", self.snr_batches.to_string());
        kv("out", self.out.display().to_string());
        s
    }

    pub fn lr_schedule(&self) -> LrSchedule {
        self.schedule.unwrap_or_else(|| self.mode.default_schedule())
    }

    pub fn discount(&self) -> f64 {
        self.gamma.unwrap_or(1.0)
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.mode == Mode::Greedy && self.gamma.is_some() {
            return fail("gamma has no effect in greedy mode".into());
        }
        if self.total_budget <= self.initial_budget {
            return fail(format!(
                "M = {} must exceed L = {}",
                self.total_budget, self.initial_budget
            ));
        }
        if let (Some(w), DataSource::Generate { size, .. }) = (self.width, &self.data) {
            if w != *size {
                return fail(format!("width {w} differs from phantom size {size}"));
            }
        }
        if let DataSource::Generate { count, size } = self.data {
            if count == 0 || size < 16 {
                return fail("generated data needs count >= 1 and size >= 16".into());
            }
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("workers", self.workers),
            ("q_eval", self.q_eval),
            ("mi_replicates", self.mi_replicates),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.bootstrap < 2 || self.snr_batches < 2 {
            return fail("bootstrap and snr_batches need at least 2".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be positive".into());
        }
        if let Some(a) = &self.arch {
            Architecture::from_str(a).map_err(|e| CliError::Config(format!("{e}")))?;
        }
        if let Some(w) = self.width {
            self.acquisition(w)?;
        }
        Ok(())
    }

    pub fn acquisition(&self, width: usize) -> Result<AcquisitionConfig, CliError> {
        AcquisitionConfig {
            width,
            initial_budget: self.initial_budget,
            total_budget: self.total_budget,
            samples_per_step: self.samples_per_step,
            discount: self.discount(),
            mode: self.mode,
        }
        .validated()
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            batch_size: self.batch_size,
            window: self.window,
            workers: self.workers,
        }
    }

    /// `data_seed` if set, otherwise derived from `seed`; every other seed
    /// is derived from `seed` with a fixed domain tag.
    pub fn seeds(&self) -> Seeds {
        let s = self.seed;
        Seeds {
            data: self.data_seed.unwrap_or_else(|| derive_seed(s, "data", 0)),
            split: derive_seed(s, "split", 0),
            init: derive_seed(s, "init", 0),
            train: derive_seed(s, "train", 0),
            eval: derive_seed(s, "eval", 0),
            analysis: derive_seed(s, "analysis", 0),
        }
    }
}

impl Seeds {
    pub fn to_text(&self) -> String {
        format!(
            "data = {}\nsplit = {}\ninit = {}\ntrain = {}\neval = {}\nanalysis = {}\n",
            self.data, self.split, self.init, self.train, self.eval, self.analysis
        )
    }
}
