use std::fs;
use std::io::Write;
use std::path::PathBuf;

use locc_usd::analysis::{self, ClaimId, FigureId, SuiteSizes, VerificationResult};
use locc_usd::closedform::{
    self, GridOptimum, OptimumReport, SsdDelta, global_mixed_oracle, pure_oracle, ssd_stage_oracle,
};
use locc_usd::ensembles::EnsembleParams;
use locc_usd::measurements::MeasurementSchedule;
use locc_usd::montecarlo;
use locc_usd::protocols::{ProtocolKind, ProtocolReport, ProtocolSetup};
use serde::Serialize;

use crate::config::{Format, RunConfig, Target};
use crate::{CliError, Command, Common};

/// Default `|closed − oracle|` accepted by `optimize`.
const OPTIMIZE_TOL: f64 = 1e-6;
const DEFAULT_SEED: u64 = 7;
const DEFAULT_SAMPLES: u64 = 100_000;

/// Runs one subcommand; `Ok(false)` means a verification failed.
pub(crate) fn run(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Discriminate {
            protocol,
            q_from_locc,
            formula_only,
            common,
        } => {
            let cfg = load(&common, "discriminate")?;
            let out = discriminate(&cfg, protocol, q_from_locc, formula_only)?;
            emit_json(&cfg, &common, &out).map(|_| true)
        }
        Command::Optimize {
            target,
            formula_only,
            common,
        } => {
            let cfg = load(&common, "optimize")?;
            let out = optimize(&cfg, target, formula_only, common.resolution)?;
            emit_json(&cfg, &common, &out).map(|_| true)
        }
        Command::Ssd {
            s,
            s_prime,
            formula_only,
            common,
        } => {
            let cfg = load(&common, "ssd")?;
            let out = ssd(&cfg, s, s_prime, formula_only)?;
            emit_json(&cfg, &common, &out).map(|_| true)
        }
        Command::Hybrid {
            protocol,
            formula_only,
            common,
        } => {
            let cfg = load(&common, "hybrid")?;
            let kind = cfg.protocol(protocol)?;
            if !matches!(
                kind,
                ProtocolKind::Reproduce | ProtocolKind::Broadcast | ProtocolKind::SsdHybrid
            ) {
                return Err(CliError::Validation(format!(
                    "`{kind}` is not a hybrid protocol (reproduce, broadcast, ssd-hybrid)"
                )));
            }
            let out = discriminate(&cfg, Some(kind), false, formula_only)?;
            emit_json(&cfg, &common, &out).map(|_| true)
        }
        Command::Verify { claim, common } => {
            let cfg = load(&common, "verify")?;
            let out = verify(&cfg, &claim, common.seed, common.n)?;
            eprintln!("verify: {}/{} passed", out.passed, out.results.len());
            emit_json(&cfg, &common, &out)?;
            Ok(out.failed == 0)
        }
        Command::Figure { id, common } => {
            let cfg = load(&common, "figure")?;
            let id: FigureId = id.parse()?;
            let mut spec = cfg.figure.unwrap_or_default();
            if let Some(n) = common.n {
                spec.points = to_usize(n)?;
            }
            let fig = analysis::emit_figure(id, &spec)?;
            match cfg.format(common.format, Format::Csv) {
                Format::Csv => write_out(cfg.out(common.out.clone()), &fig.to_csv()),
                Format::Json => emit_json(&cfg, &common, &fig),
            }
            .map(|_| true)
        }
        Command::Sample { protocol, common } => {
            let cfg = load(&common, "sample")?;
            sample(&cfg, protocol.as_deref(), &common).map(|_| true)
        }
    }
}

fn load(common: &Common, command: &str) -> Result<RunConfig, CliError> {
    let cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.check_command(command)?;
    Ok(cfg)
}

fn to_usize(n: u64) -> Result<usize, CliError> {
    usize::try_from(n).map_err(|_| CliError::Validation(format!("--n {n} is too large")))
}

fn emit_json<T: Serialize>(cfg: &RunConfig, common: &Common, value: &T) -> Result<(), CliError> {
    if cfg.format(common.format, Format::Json) == Format::Csv {
        return Err(CliError::Validation("this command has no CSV output".into()));
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("cannot serialize output: {e}")))?;
    text.push('\n');
    write_out(cfg.out(common.out.clone()), &text)
}

fn write_out(path: Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            fs::write(&p, text).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Validation(format!("cannot write stdout: {e}")))
        }
    }
}

// ---------------------------------------------------------------------------
// discriminate / hybrid

#[derive(Debug, Serialize)]
pub struct DiscriminateOutput {
    pub params: EnsembleParams,
    pub setup: ProtocolSetup,
    pub report: ProtocolReport,
    /// Largest formula-versus-trace difference over the report's fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_residual: Option<f64>,
    /// The LOCC run whose schedules produced the global one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locc: Option<ProtocolReport>,
}

/// Schedules used when the config gives none.
fn default_setup(kind: ProtocolKind, p: &EnsembleParams) -> Result<ProtocolSetup, CliError> {
    Ok(match kind {
        ProtocolKind::Locc => ProtocolSetup::Locc {
            alice: MeasurementSchedule::symmetric_optimal(p.s, p.s_tilde),
            bob: MeasurementSchedule::symmetric_optimal(p.s_prime, p.s_tilde_prime),
        },
        ProtocolKind::PureLocal => ProtocolSetup::PureLocal {
            alice: MeasurementSchedule::symmetric_optimal(p.s, p.s_tilde),
            bob: MeasurementSchedule::symmetric_optimal(p.s_prime, p.s_tilde_prime),
        },
        ProtocolKind::Global => ProtocolSetup::Global {
            global: MeasurementSchedule::symmetric_optimal(p.s0(), p.s0_tilde()),
        },
        ProtocolKind::Reproduce => ProtocolSetup::Reproduce,
        ProtocolKind::Broadcast => ProtocolSetup::Broadcast,
        ProtocolKind::SsdHybrid => {
            let delta = closedform::ssd_delta(p.s, p.s_prime)?;
            closedform::ssd_hybrid_setup(&delta, p)?
        }
        ProtocolKind::Ssd => {
            return Err(CliError::Validation(
                "missing required key `schedules` (ssd needs alice and charlie schedules)".into(),
            ));
        }
    })
}

fn setup_for(cfg: &RunConfig, kind: ProtocolKind, p: &EnsembleParams) -> Result<ProtocolSetup, CliError> {
    match cfg.setup(kind)? {
        Some(s) => Ok(s),
        None => default_setup(kind, p),
    }
}

pub fn discriminate(
    cfg: &RunConfig,
    protocol: Option<ProtocolKind>,
    q_from_locc: bool,
    formula_only: bool,
) -> Result<DiscriminateOutput, CliError> {
    let params = cfg.params()?;
    let kind = cfg.protocol(protocol)?;
    if q_from_locc {
        if kind != ProtocolKind::Global {
            return Err(CliError::Validation("--q-from-locc needs --protocol global".into()));
        }
        // Schedules in the config, if any, are the local ones.
        let local = setup_for(cfg, ProtocolKind::Locc, &params)?;
        let ProtocolSetup::Locc { alice, bob } = local else {
            unreachable!("setup_for returns the requested kind")
        };
        let locc = local.run(&params)?;
        let setup = ProtocolSetup::Global {
            global: alice.product(&bob),
        };
        let mut report = setup.run(&params)?;
        report.delta = Some(report.total_success - locc.total_success);
        let trace_residual = residual(&setup, &params, &report, formula_only)?;
        return Ok(DiscriminateOutput {
            params,
            setup,
            report,
            trace_residual,
            locc: Some(locc),
        });
    }
    let setup = setup_for(cfg, kind, &params)?;
    let report = setup.run(&params)?;
    let trace_residual = residual(&setup, &params, &report, formula_only)?;
    Ok(DiscriminateOutput {
        params,
        setup,
        report,
        trace_residual,
        locc: None,
    })
}

fn residual(
    setup: &ProtocolSetup,
    params: &EnsembleParams,
    report: &ProtocolReport,
    formula_only: bool,
) -> Result<Option<f64>, CliError> {
    if formula_only {
        return Ok(None);
    }
    Ok(Some(setup.trace(params)?.max_difference(report)))
}

// ---------------------------------------------------------------------------
// optimize

#[derive(Debug, Serialize)]
pub struct OptimizeOutput {
    pub target: Target,
    pub closed_form: OptimumReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<GridOptimum>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub difference: Option<f64>,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_tolerance: Option<bool>,
}

pub fn optimize(
    cfg: &RunConfig,
    target: Option<Target>,
    formula_only: bool,
    resolution: Option<f64>,
) -> Result<OptimizeOutput, CliError> {
    let target = target.or(cfg.target).unwrap_or_default();
    let p = cfg.params()?;
    let grid = cfg.grid(resolution)?;
    let tolerance = cfg.optimizer.and_then(|o| o.tolerance).unwrap_or(OPTIMIZE_TOL);
    // The SSD stage reads `P1` as the first stage prior and `s` as the
    // overlap.
    let closed_form = match target {
        Target::GlobalMixed => closedform::optimal_global_mixed(&p)?,
        Target::GlobalPure => closedform::optimal_global_pure(&p)?,
        Target::SsdStage => closedform::optimal_ssd_stage(p.p1, p.s)?,
    };
    let oracle = if formula_only {
        None
    } else {
        Some(match target {
            Target::GlobalMixed => global_mixed_oracle(&p, &grid)?,
            Target::GlobalPure => pure_oracle(p.p1, p.s_star(), &grid)?,
            Target::SsdStage => ssd_stage_oracle(p.p1, p.s, &grid)?,
        })
    };
    let difference = oracle.as_ref().map(|o| (closed_form.p_max - o.value).abs());
    Ok(OptimizeOutput {
        target,
        closed_form,
        oracle,
        difference,
        tolerance,
        within_tolerance: difference.map(|d| d < tolerance),
    })
}

// ---------------------------------------------------------------------------
// ssd

#[derive(Debug, Serialize)]
pub struct SsdOutput {
    pub s: f64,
    pub s_prime: f64,
    pub delta: SsdDelta,
    /// The protocol run at the stage optima.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolReport>,
    /// `|protocol delta − closed-form delta|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

pub fn ssd(cfg: &RunConfig, s: Option<f64>, s_prime: Option<f64>, formula_only: bool) -> Result<SsdOutput, CliError> {
    let from_cfg = cfg.params.map(|p| (p.s, p.s_prime));
    let s = s
        .or(from_cfg.map(|p| p.0))
        .ok_or_else(|| CliError::Validation("missing required key `s` (params.s or --s)".into()))?;
    let s_prime = s_prime
        .or(from_cfg.map(|p| p.1))
        .ok_or_else(|| CliError::Validation("missing required key `s_prime` (params.s_prime or --s-prime)".into()))?;
    let delta = closedform::ssd_delta(s, s_prime)?;
    let (protocol, residual) = if formula_only {
        (None, None)
    } else {
        let params = EnsembleParams::pure_product(s, s_prime);
        let setup = closedform::ssd_hybrid_setup(&delta, &params)?;
        let report = setup.run(&params)?;
        let r = report.delta.map(|d| (d - delta.delta).abs());
        (Some(report), r)
    };
    Ok(SsdOutput {
        s,
        s_prime,
        delta,
        protocol,
        residual,
    })
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Serialize)]
pub struct VerifyOutput {
    pub seed: u64,
    pub sizes: SuiteSizes,
    pub passed: usize,
    pub failed: usize,
    pub results: Vec<VerificationResult>,
}

pub fn verify(cfg: &RunConfig, claim: &str, seed: Option<u64>, n: Option<u64>) -> Result<VerifyOutput, CliError> {
    let claims: Vec<ClaimId> = if claim == "all" {
        ClaimId::ALL.to_vec()
    } else {
        vec![claim.parse()?]
    };
    let seed = cfg.seed(seed, DEFAULT_SEED);
    let mut sizes = cfg.verify.unwrap_or_default();
    if let Some(n) = cfg.n(n) {
        sizes.draws = to_usize(n)?;
    }
    let results = claims
        .into_iter()
        .map(|c| analysis::verify(c, seed, &sizes))
        .collect::<Result<Vec<_>, _>>()?;
    let failed = results.iter().filter(|r| r.status == analysis::Status::Fail).count();
    Ok(VerifyOutput {
        seed,
        sizes,
        passed: results.iter().filter(|r| r.status == analysis::Status::Pass).count(),
        failed,
        results,
    })
}

// ---------------------------------------------------------------------------
// sample

fn sample(cfg: &RunConfig, protocol: Option<&str>, common: &Common) -> Result<(), CliError> {
    let seed = cfg.seed(common.seed, 0);
    let n = cfg.n(common.n).unwrap_or(DEFAULT_SAMPLES);
    if protocol == Some("case-iii") {
        let spec = cfg.case_iii.unwrap_or_default();
        let report = montecarlo::sample_appendix_c_case_iii(&spec, n, seed)?;
        return emit_json(cfg, common, &report);
    }
    let flag = protocol.map(str::parse::<ProtocolKind>).transpose()?;
    let kind = cfg.protocol(flag)?;
    let params = cfg.params()?;
    let setup = setup_for(cfg, kind, &params)?;
    let report = montecarlo::sample_protocol(&params, &setup, n, seed)?;
    match cfg.format(common.format, Format::Json) {
        Format::Csv => write_out(cfg.out(common.out.clone()), &report.counts_csv()),
        Format::Json => emit_json(cfg, common, &report),
    }
}
