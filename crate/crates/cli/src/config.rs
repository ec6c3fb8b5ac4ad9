use std::fs;
use std::path::{Path, PathBuf};

use locc_usd::analysis::{FigureSpec, SuiteSizes};
use locc_usd::closedform::GridSettings;
use locc_usd::ensembles::EnsembleParams;
use locc_usd::montecarlo::CaseIiiSpec;
use locc_usd::protocols::{ProtocolKind, ProtocolSetup};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Everything a run can be configured with. Each command reads the keys it
/// needs and ignores the rest; unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// If present, the only subcommand this file may be used with.
    pub command: Option<String>,
    pub params: Option<EnsembleParams>,
    pub protocol: Option<ProtocolKind>,
    /// Schedules of the protocol's observers, keyed by observer
    /// (`alice`, `bob`, `charlie`, `global`, or `first`/`second`/`global`
    /// stages for the sequential hybrid).
    pub schedules: Option<Map<String, Value>>,
    pub target: Option<Target>,
    pub seed: Option<u64>,
    pub n_samples: Option<u64>,
    pub optimizer: Option<OptimizerConfig>,
    pub verify: Option<SuiteSizes>,
    pub figure: Option<FigureSpec>,
    pub case_iii: Option<CaseIiiSpec>,
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    #[default]
    GlobalMixed,
    GlobalPure,
    SsdStage,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub coarse_points: Option<usize>,
    pub resolution: Option<f64>,
    pub refine_rounds: Option<usize>,
    pub starts: Option<usize>,
    /// Allowed `|closed − oracle|`.
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub n_samples: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            use serde_json::error::Category;
            match e.classify() {
                Category::Syntax | Category::Eof | Category::Io => CliError::Parse {
                    line: e.line(),
                    column: e.column(),
                    message: strip_position(&e.to_string()),
                },
                Category::Data => CliError::Validation(format!("config: {e}")),
            }
        })
    }

    pub fn check_command(&self, command: &str) -> Result<(), CliError> {
        match &self.command {
            Some(c) if c != command => Err(CliError::Validation(format!(
                "config is for command `{c}`, not `{command}`"
            ))),
            _ => Ok(()),
        }
    }

    pub fn params(&self) -> Result<EnsembleParams, CliError> {
        let p = self.params.ok_or_else(|| missing("params"))?;
        p.validate()?;
        Ok(p)
    }

    /// Protocol from the flag, else the config; both must agree if given.
    pub fn protocol(&self, flag: Option<ProtocolKind>) -> Result<ProtocolKind, CliError> {
        match (flag, self.protocol) {
            (Some(a), Some(b)) if a != b => Err(CliError::Validation(format!(
                "--protocol {a} conflicts with config protocol `{b}`"
            ))),
            (Some(a), _) | (None, Some(a)) => Ok(a),
            (None, None) => Err(missing("protocol")),
        }
    }

    /// The configured schedules for `kind`, if any were given.
    pub fn setup(&self, kind: ProtocolKind) -> Result<Option<ProtocolSetup>, CliError> {
        let Some(schedules) = &self.schedules else {
            return Ok(None);
        };
        let mut tagged = schedules.clone();
        tagged.insert("protocol".into(), Value::String(kind.to_string()));
        serde_json::from_value(Value::Object(tagged))
            .map(Some)
            .map_err(|e| CliError::Validation(format!("schedules for `{kind}`: {e}")))
    }

    pub fn grid(&self, resolution: Option<f64>) -> Result<GridSettings, CliError> {
        let mut g = GridSettings::default();
        let o = self.optimizer.unwrap_or_default();
        g.coarse_points = o.coarse_points.unwrap_or(g.coarse_points);
        g.refine_rounds = o.refine_rounds.unwrap_or(g.refine_rounds);
        g.starts = o.starts.unwrap_or(g.starts);
        g.resolution = resolution.or(o.resolution).unwrap_or(g.resolution);
        if !(g.resolution.is_finite() && g.resolution > 0.0 && g.resolution < 1.0) {
            return Err(CliError::Validation(format!(
                "resolution = {} must lie in (0, 1)",
                g.resolution
            )));
        }
        if g.coarse_points < 2 || g.starts == 0 {
            return Err(CliError::Validation(
                "optimizer needs coarse_points >= 2 and starts >= 1".into(),
            ));
        }
        Ok(g)
    }

    pub fn seed(&self, flag: Option<u64>, default: u64) -> u64 {
        flag.or(self.seed).or(self.optimizer.and_then(|o| o.seed)).unwrap_or(default)
    }

    pub fn n(&self, flag: Option<u64>) -> Option<u64> {
        flag.or(self.n_samples).or(self.optimizer.and_then(|o| o.n_samples))
    }

    pub fn out(&self, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.output.as_ref().and_then(|o| o.path.clone()))
    }

    pub fn format(&self, flag: Option<Format>, default: Format) -> Format {
        flag.or(self.output.as_ref().and_then(|o| o.format)).unwrap_or(default)
    }
}

/// serde_json appends " at line L column C"; the error carries those
/// separately.
fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(k) => message[..k].to_string(),
        None => message.to_string(),
    }
}

fn missing(key: &str) -> CliError {
    CliError::Validation(format!("missing required key `{key}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse(r#"{"paramz": {}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("paramz"));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = RunConfig::parse("{\n  \"seed\": ,\n}").unwrap_err();
        match err {
            CliError::Parse { line, column, .. } => assert_eq!((line, column), (2, 11)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schedules_are_tagged_with_the_protocol() {
        let cfg = RunConfig::parse(
            r#"{"schedules": {"global": {"q1": 0.5, "q2": 0.5, "q1_tilde": 1, "q2_tilde": 1, "t": 0.4, "t_tilde": 0.3}}}"#,
        )
        .unwrap();
        let setup = cfg.setup(ProtocolKind::Global).unwrap().unwrap();
        assert_eq!(setup.kind(), ProtocolKind::Global);
        let err = cfg.setup(ProtocolKind::Locc).unwrap_err();
        assert!(err.to_string().contains("alice"), "{err}");
    }
}
