use serde_json::json;
use subsampled_rdp::accountant::{AccountantConfig, CgfLedger, LedgerCurve};
use subsampled_rdp::amplification::{BoundKind, SubsampledCurve};
use subsampled_rdp::baselines::{calibrated_baseline, BaselineMethod};
use subsampled_rdp::mechanisms::{Mechanism, RdpCurve};
use subsampled_rdp::parallel::{self, Execution};
use subsampled_rdp::verifier::{sandwich_report, BoundReport, Tolerance, VerifyConfig};

use crate::config::{
    apply_config, AlphaGrid, AmplifyArgs, Baseline, Cli, Command, ComposeArgs, ConvertArgs, MechArgs, VerifyArgs,
};
use crate::output::{emit, real, Cell, Table};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mech(a) => {
            let path = a.common.config.clone();
            mech(apply_config(a, path.as_ref())?)
        }
        Command::Amplify(a) => {
            let path = a.common.config.clone();
            amplify(apply_config(a, path.as_ref())?)
        }
        Command::Compose(a) => {
            let path = a.common.config.clone();
            compose(apply_config(a, path.as_ref())?)
        }
        Command::Convert(a) => {
            let path = a.common.config.clone();
            convert(apply_config(a, path.as_ref())?)
        }
        Command::Verify(a) => {
            let path = a.common.config.clone();
            verify(apply_config(a, path.as_ref())?)
        }
    }
}

fn parse_mechanism(spec: Option<&str>) -> Result<(Mechanism, RdpCurve)> {
    let spec = spec.ok_or_else(|| usage("a mechanism spec is required (--mechanism '<json>')"))?;
    let mechanism: Mechanism =
        serde_json::from_str(spec).map_err(|e| usage(format!("malformed mechanism spec: {e}")))?;
    let curve = mechanism.curve()?;
    Ok((mechanism, curve))
}

fn require_gamma(gamma: Option<f64>) -> Result<f64> {
    gamma.ok_or_else(|| usage("--gamma is required"))
}

fn alpha_grid(grid: &AlphaGrid, default_max: u64) -> Result<Vec<f64>> {
    let alphas = match &grid.alphas {
        Some(list) => list.clone(),
        None => {
            let max = grid.alpha_max.unwrap_or(default_max);
            if grid.alpha_min < 2 || max < grid.alpha_min {
                return Err(usage(format!(
                    "alpha range {}..={max} must start at 2 or above and be non-empty",
                    grid.alpha_min
                )));
            }
            let mut alphas: Vec<f64> = (grid.alpha_min..=max).map(|a| a as f64).collect();
            let n = grid.fractional_points;
            if n > 0 {
                let (lo, hi) = ((grid.alpha_min as f64).ln(), (max as f64).ln());
                alphas.extend(
                    (0..n)
                        .map(|i| (lo + (hi - lo) * (i as f64 + 0.5) / n as f64).exp())
                        .filter(|a| (a - a.round()).abs() > 1e-9),
                );
                alphas.sort_by(f64::total_cmp);
                alphas.dedup();
            }
            alphas
        }
    };
    if alphas.is_empty() {
        return Err(usage("the alpha grid is empty"));
    }
    if alphas.iter().any(|a| !(*a > 1.0 && a.is_finite())) {
        return Err(usage("every order must be finite and above 1"));
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("the alpha grid must be strictly increasing"));
    }
    Ok(alphas)
}

fn mech(args: MechArgs) -> Result<()> {
    let (_, curve) = parse_mechanism(args.mechanism.as_deref())?;
    let alphas = alpha_grid(&args.grid, 256)?;
    let rows = alphas
        .iter()
        .map(|&a| vec![Cell::Real(a), Cell::Real(curve.eval(a))])
        .collect();
    let table = Table {
        columns: vec!["alpha".into(), "eps".into()],
        rows,
    };
    emit(&table.render(args.common.format), args.common.output.as_deref())
}

fn subsampled(base: &RdpCurve, gamma: f64, kind: BoundKind, n: Option<u64>, thresh: u64) -> Result<SubsampledCurve> {
    let n = matches!(kind, BoundKind::AsymptoticBad | BoundKind::AsymptoticGood)
        .then_some(n)
        .flatten();
    Ok(SubsampledCurve::build(base.clone(), gamma, kind, n)?.with_alpha_thresh(thresh))
}

fn amplify(args: AmplifyArgs) -> Result<()> {
    let (_, base) = parse_mechanism(args.mechanism.as_deref())?;
    let gamma = require_gamma(args.gamma)?;
    let alphas = alpha_grid(&args.grid, 256)?;
    if args.bounds.is_empty() {
        return Err(usage("no bound kinds requested"));
    }
    let curves = args
        .bounds
        .iter()
        .map(|name| {
            let kind: BoundKind = name.parse()?;
            subsampled(&base, gamma, kind, Some(args.n), args.alpha_thresh)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = parallel::map(&alphas, Execution::Parallel, |&alpha| {
        let mut row = vec![Cell::Real(alpha)];
        for c in &curves {
            // Interpolating a lower bound's CGF does not give a lower bound.
            if c.kind() == BoundKind::Lower && alpha.fract() != 0.0 {
                row.push(Cell::Empty);
            } else {
                row.push(Cell::Real(c.eval(alpha)));
            }
        }
        row
    });
    let mut columns = vec!["alpha".to_string()];
    columns.extend(curves.iter().map(|c| c.kind().as_str().to_string()));
    let table = Table { columns, rows };
    emit(&table.render(args.common.format), args.common.output.as_deref())
}

fn accountant_config(base: Option<AccountantConfig>, tol: f64) -> Result<AccountantConfig> {
    if !(tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    Ok(AccountantConfig {
        tol,
        ..base.unwrap_or_default()
    })
}

const METHODS: [&str; 4] = ["rdp_general", "rdp_lower", "naive", "strong"];

fn round_counts(args: &ComposeArgs) -> Result<Vec<u64>> {
    let ks = match &args.rounds {
        Some(list) => list.clone(),
        None => {
            if args.k_max == 0 || args.k_points == 0 || args.k_points as u64 > args.k_max {
                return Err(usage("--k-points must lie in 1..=k_max"));
            }
            // Log-spaced, bumped by one where rounding would repeat a count, so
            // exactly `k_points` distinct values come out.
            let top = (args.k_max as f64).ln();
            let denom = (args.k_points.max(2) - 1) as f64;
            let mut ks: Vec<u64> = Vec::with_capacity(args.k_points);
            for i in 0..args.k_points {
                let target = (top * i as f64 / denom).exp().round() as u64;
                let next = ks.last().map_or(1, |&prev| target.max(prev + 1));
                ks.push(next.min(args.k_max));
            }
            ks
        }
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(usage("round counts must be positive"));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("round counts must be strictly increasing"));
    }
    Ok(ks)
}

fn compose(args: ComposeArgs) -> Result<()> {
    let (_, base) = parse_mechanism(args.mechanism.as_deref())?;
    let gamma = require_gamma(args.gamma)?;
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(usage("--delta must lie in (0, 1)"));
    }
    let cfg = accountant_config(args.accountant, args.tol)?;
    let methods: Vec<String> = match &args.methods {
        Some(m) => m.clone(),
        None => METHODS
            .iter()
            .filter(|m| **m != "rdp_lower" || base.is_tight())
            .filter(|m| {
                !matches!(
                    (args.baseline, **m),
                    (Some(Baseline::Naive), "strong") | (Some(Baseline::Strong), "naive")
                )
            })
            .map(|m| m.to_string())
            .collect(),
    };
    if let Some(bad) = methods.iter().find(|m| !METHODS.contains(&m.as_str())) {
        return Err(usage(format!("unknown method `{bad}` (expected one of {})", METHODS.join(", "))));
    }
    let general = subsampled(&base, gamma, BoundKind::General, None, args.alpha_thresh)?;
    let lower = if methods.iter().any(|m| m == "rdp_lower") {
        Some(subsampled(&base, gamma, BoundKind::Lower, None, args.alpha_thresh)?)
    } else {
        None
    };
    let ks = round_counts(&args)?;
    let delta = args.delta;
    let rdp = |curve: &SubsampledCurve, k: u64| -> Result<f64> {
        let ledger = CgfLedger::new().with_config(cfg).compose(curve.clone(), k)?;
        Ok(ledger.eps_from_delta(delta)?.eps)
    };
    let rows = parallel::map(&ks, Execution::Parallel, |&k| -> Result<Vec<Cell>> {
        let mut row = vec![Cell::Int(k)];
        for m in &methods {
            let eps = match m.as_str() {
                "rdp_general" => rdp(&general, k)?,
                "rdp_lower" => rdp(lower.as_ref().expect("built when requested"), k)?,
                "naive" => calibrated_baseline(&base, gamma, k, delta, BaselineMethod::Naive)?.eps,
                _ => calibrated_baseline(&base, gamma, k, delta, BaselineMethod::Strong)?.eps,
            };
            row.push(Cell::Real(eps));
        }
        Ok(row)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["k".to_string()];
    columns.extend(methods);
    let table = Table { columns, rows };
    emit(&table.render(args.common.format), args.common.output.as_deref())
}

fn convert(args: ConvertArgs) -> Result<()> {
    let cfg = accountant_config(args.accountant, args.tol)?;
    let ledger = match (&args.ledger, &args.mechanism) {
        (Some(_), Some(_)) => return Err(usage("give either --ledger or --mechanism, not both")),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read ledger {}: {e}", path.display())))?;
            CgfLedger::from_json(&text)?
        }
        (None, Some(_)) => {
            let (_, base) = parse_mechanism(args.mechanism.as_deref())?;
            let curve: LedgerCurve = match args.gamma {
                Some(g) => subsampled(&base, g, args.bound_kind.parse()?, args.n, 256)?.into(),
                None => base.into(),
            };
            CgfLedger::new().compose(curve, args.rounds)?
        }
        (None, None) => return Err(usage("a ledger file or a mechanism spec is required")),
    };
    let ledger = ledger.with_config(cfg);
    let ledger = if args.project { ledger.project_cgf() } else { ledger };
    let result = match (args.delta, args.eps) {
        (Some(d), None) => ledger.eps_from_delta(d)?,
        (None, Some(e)) => ledger.delta_from_eps(e)?,
        _ => return Err(usage("give exactly one of --delta or --eps")),
    };
    if let Some(path) = &args.save_ledger {
        emit(&ledger.to_json()?, Some(path))?;
    }
    let record = json!({
        "eps": real(result.eps),
        "delta": real(result.delta),
        "lambda_star": real(result.lambda_star),
        "flags": result.flags,
    });
    let mut text = serde_json::to_string_pretty(&record).expect("record serializes");
    text.push('\n');
    emit(&text, args.common.output.as_deref())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let (mechanism, _) = parse_mechanism(args.mechanism.as_deref())?;
    let gamma = require_gamma(args.gamma)?;
    let alphas = alpha_grid(&args.grid, 64)?;
    if !(args.tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let cfg = VerifyConfig {
        tol: Tolerance {
            rel: args.tol,
            ..Tolerance::default()
        },
        n: Some(args.n),
        execution: Execution::Parallel,
    };
    let reports = sandwich_report(&mechanism, gamma, &alphas, &cfg)?;
    let opt = |v: Option<f64>| v.map(Cell::Real).unwrap_or(Cell::Empty);
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                Cell::Real(r.alpha),
                opt(r.lower),
                opt(r.oracle),
                Cell::Real(r.upper_general),
                opt(r.upper_tight),
                opt(r.asymptotic_bad),
                opt(r.asymptotic_good),
                Cell::Bool(r.pass),
            ]
        })
        .collect();
    let table = Table {
        columns: BoundReport::CSV_HEADER.split(',').map(String::from).collect(),
        rows,
    };
    emit(&table.render(args.common.format), args.common.output.as_deref())?;
    let failed: Vec<&BoundReport> = reports.iter().filter(|r| !r.pass).collect();
    if failed.is_empty() {
        return Ok(());
    }
    for r in &failed {
        eprintln!("alpha {}: {}", r.alpha, r.failure.as_deref().unwrap_or("failed"));
    }
    Err(CliError::Verification(format!("{} of {} rows failed the sandwich check", failed.len(), reports.len())))
}
