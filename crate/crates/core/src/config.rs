//! Experiment configuration, stored as TOML. Every key is optional; unknown
//! or repeated keys are errors.
//!
//! ```toml
//! [model]
//! n_modes = 8
//! lambda = "dirichlet"        # dirichlet | flat | constant:<v>
//! q = "inverse_square"        # inverse_square | ones | power:<α>
//! t_start = 0.0
//! t_end = 1.0
//! n_steps = 1024
//!
//! [ladder]
//! multiples = [32, 16, 8, 4, 2, 1]
//!
//! [ensemble]
//! n_paths = 10000
//! master_seed = 20240601
//!
//! [experiment]
//! name = "default"
//!
//! [output]
//! dir = "out"
//!
//! [control]
//! radius = 2.0
//! h_scale = 0.8               # h_k = h_scale / k
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer};

use crate::ensemble::Execution;
use crate::error::{Error, Result};
use crate::noise::TimeGrid;
use crate::regularization::EpsilonLadder;
use crate::spaces::{HVector, TruncatedSpace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRule {
    /// `λ_k = −(kπ)²`
    Dirichlet,
    /// `λ_k = c` for every mode.
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QRule {
    /// `q_k = k^{−α}`
    Power(f64),
}

impl FromStr for LambdaRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dirichlet" => Ok(LambdaRule::Dirichlet),
            "flat" => Ok(LambdaRule::Constant(0.0)),
            _ => match s.strip_prefix("constant:") {
                Some(v) => v
                    .trim()
                    .parse()
                    .map(LambdaRule::Constant)
                    .map_err(|e| format!("{e}")),
                None => Err(format!("unknown lambda rule `{s}`")),
            },
        }
    }
}

impl FromStr for QRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "inverse_square" => Ok(QRule::Power(2.0)),
            "ones" => Ok(QRule::Power(0.0)),
            _ => match s.strip_prefix("power:") {
                Some(v) => v
                    .trim()
                    .parse()
                    .map(QRule::Power)
                    .map_err(|e| format!("{e}")),
                None => Err(format!("unknown q rule `{s}`")),
            },
        }
    }
}

fn from_str_de<'de, D, T>(d: D) -> std::result::Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr<Err = String>,
{
    let s = String::deserialize(d)?;
    s.parse().map(Some).map_err(de::Error::custom)
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawModel {
    n_modes: Option<usize>,
    #[serde(deserialize_with = "from_str_de")]
    lambda: Option<LambdaRule>,
    #[serde(deserialize_with = "from_str_de")]
    q: Option<QRule>,
    t_start: Option<f64>,
    t_end: Option<f64>,
    n_steps: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawLadder {
    multiples: Option<Vec<usize>>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEnsemble {
    n_paths: Option<usize>,
    master_seed: Option<u64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawExperiment {
    name: Option<String>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawControl {
    radius: Option<f64>,
    h_scale: Option<f64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    model: RawModel,
    ladder: RawLadder,
    ensemble: RawEnsemble,
    experiment: RawExperiment,
    output: RawOutput,
    control: RawControl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n_modes: usize,
    pub lambda: LambdaRule,
    pub q: QRule,
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub ladder_multiples: Vec<usize>,
    pub n_paths: usize,
    pub master_seed: u64,
    pub name: String,
    pub output_dir: PathBuf,
    pub control_radius: f64,
    pub control_h_scale: f64,
    /// Not a file key: results do not depend on it.
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_modes: 8,
            lambda: LambdaRule::Dirichlet,
            q: QRule::Power(2.0),
            t_start: 0.0,
            t_end: 1.0,
            n_steps: 1024,
            ladder_multiples: EpsilonLadder::DEFAULT_MULTIPLES.to_vec(),
            n_paths: 10_000,
            master_seed: 20_240_601,
            name: "default".into(),
            output_dir: PathBuf::from("out"),
            control_radius: 2.0,
            control_h_scale: 0.8,
            execution: Execution::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let mut cfg = Self::default();
        let RawConfig {
            model,
            ladder,
            ensemble,
            experiment,
            output,
            control,
        } = raw;
        macro_rules! set {
            ($($field:ident <- $value:expr),* $(,)?) => {
                $(if let Some(v) = $value { cfg.$field = v; })*
            };
        }
        set!(
            n_modes <- model.n_modes,
            lambda <- model.lambda,
            q <- model.q,
            t_start <- model.t_start,
            t_end <- model.t_end,
            n_steps <- model.n_steps,
            ladder_multiples <- ladder.multiples,
            n_paths <- ensemble.n_paths,
            master_seed <- ensemble.master_seed,
            name <- experiment.name,
            output_dir <- output.dir,
            control_radius <- control.radius,
            control_h_scale <- control.h_scale,
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Err(Error::Config { line: 0, message });
        if self.n_paths == 0 {
            return fail("ensemble.n_paths must be at least 1".into());
        }
        if self.n_modes == 0 {
            return fail("model.n_modes must be at least 1".into());
        }
        if !(self.control_radius > 0.0) {
            return fail("control.radius must be positive".into());
        }
        let grid = self.grid().map_err(|e| Error::Config {
            line: 0,
            message: e.to_string(),
        })?;
        EpsilonLadder::new(&grid, self.ladder_multiples.clone()).map_err(|e| Error::Config {
            line: 0,
            message: e.to_string(),
        })?;
        self.space_with(self.n_modes).map_err(|e| Error::Config {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_start, self.t_end, self.n_steps)
    }

    pub fn ladder(&self) -> Result<EpsilonLadder> {
        EpsilonLadder::new(&self.grid()?, self.ladder_multiples.clone())
    }

    pub fn space(&self) -> Result<TruncatedSpace> {
        self.space_with(self.n_modes)
    }

    /// Same rules with a different number of modes.
    pub fn space_with(&self, n: usize) -> Result<TruncatedSpace> {
        let lambda = (1..=n)
            .map(|k| match self.lambda {
                LambdaRule::Dirichlet => -(k as f64 * std::f64::consts::PI).powi(2),
                LambdaRule::Constant(c) => c,
            })
            .collect();
        let q = (1..=n)
            .map(|k| match self.q {
                QRule::Power(a) => (k as f64).powf(-a),
            })
            .collect();
        TruncatedSpace::new(lambda, q, format!("{}-{}", self.name, n))
    }

    /// Terminal-cost direction `h_k = h_scale / k`.
    pub fn control_h(&self) -> HVector {
        HVector::new(
            (1..=self.n_modes)
                .map(|k| self.control_h_scale / k as f64)
                .collect(),
        )
    }

    /// Canonical TOML rendering; parsing it gives back `self`.
    pub fn to_canonical(&self) -> String {
        let lambda = match self.lambda {
            LambdaRule::Dirichlet => "dirichlet".to_string(),
            LambdaRule::Constant(c) => format!("constant:{c:?}"),
        };
        let QRule::Power(a) = self.q;
        let multiples: Vec<String> = self
            .ladder_multiples
            .iter()
            .map(|m| m.to_string())
            .collect();
        let quote = |s: &str| toml::Value::String(s.to_string()).to_string();
        let mut s = String::new();
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "n_modes = {}", self.n_modes);
        let _ = writeln!(s, "lambda = {}", quote(&lambda));
        let _ = writeln!(s, "q = {}", quote(&format!("power:{a:?}")));
        let _ = writeln!(s, "t_start = {:?}", self.t_start);
        let _ = writeln!(s, "t_end = {:?}", self.t_end);
        let _ = writeln!(s, "n_steps = {}", self.n_steps);
        let _ = writeln!(s, "\n[ladder]\nmultiples = [{}]", multiples.join(", "));
        let _ = writeln!(s, "\n[ensemble]\nn_paths = {}", self.n_paths);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "\n[experiment]\nname = {}", quote(&self.name));
        let _ = writeln!(
            s,
            "\n[output]\ndir = {}",
            quote(&self.output_dir.to_string_lossy())
        );
        let _ = writeln!(s, "\n[control]\nradius = {:?}", self.control_radius);
        let _ = writeln!(s, "h_scale = {:?}", self.control_h_scale);
        s
    }
}
