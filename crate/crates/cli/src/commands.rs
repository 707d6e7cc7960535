//! Command implementations and run artifacts.
//!
//! Every command resolves its inputs, computes, writes its artifacts under
//! the output directory, and finishes with a manifest recording the resolved
//! configuration, stage seeds, partition corners, and the SHA-256 of every
//! input and output file. Manifests contain no timestamps, so a rerun with
//! the same inputs and seeds produces byte-identical files.
//!
//! Each fallible step is explicitly classified: input loading and schema
//! checks surface as validation failures (exit 2), compute and artifact
//! writing as runtime failures (exit 3).

use crate::config::{ResolvedSeeds, RunConfig};
use crate::{Failure, Phase};
use anyhow::{anyhow, Context, Result};
use ridgearb::{
    build_report, build_scenarios, buy_and_hold, buy_and_hold_equal_dollar, clip_path,
    detect_arbitrage, enumerate_min_cost, load_prices_from_reader, oracle_gap, penalized_value,
    regression_metrics, run_backtest, sliding_paths, spec_from_table, train, validate_path,
    verify_arbitrage, AmbiguitySet, BacktestReport, Checkpoint, CostParams, GapReport, MarketSpec,
    ObjectiveReport, OracleResult, Partition, Payoff, PenaltyConfig, PricePath, RidgeletStrategy,
    ScenarioCache, TinyMarket, TradeRecord, TrainResult, Verdict, VerificationReport,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Input data for training or detection: either a cached scenario set from
/// `ingest`, or a self-contained tiny-market fixture.
pub enum DataSource {
    Scenarios(PathBuf),
    Fixture(PathBuf),
}

struct LoadedMarket {
    spec: MarketSpec,
    ambiguity: AmbiguitySet,
    costs: CostParams,
    payoff: Payoff,
    input_name: String,
    input_sha256: String,
}

/// Artifact names are fixed so downstream tooling can find them.
const SCENARIOS_FILE: &str = "scenarios.json";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const TRACE_FILE: &str = "trace.json";
const DETECT_FILE: &str = "detect_report.json";
const BACKTEST_FILE: &str = "backtest_report.json";
const TRADES_FILE: &str = "trades.csv";
const CUMULATIVE_FILE: &str = "cumulative.csv";
const ORACLE_FILE: &str = "oracle_result.json";
const GAP_FILE: &str = "gap_report.json";
const SUMMARY_JSON: &str = "summary.json";
const SUMMARY_CSV: &str = "summary.csv";

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    config: &'a RunConfig,
    seeds: ResolvedSeeds,
    inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition_corners: Option<&'a Vec<Vec<f64>>>,
    outputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let mut out = String::with_capacity(64);
    for byte in hasher.finalize() {
        write!(out, "{byte:02x}").expect("writing to a string cannot fail");
    }
    out
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).context("serializing artifact")?;
    text.push('\n');
    let path = dir.join(name);
    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    Ok(sha256_hex(text.as_bytes()))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<String> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(sha256_hex(text.as_bytes()))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    inputs: BTreeMap<String, String>,
    partition_corners: Option<&Vec<Vec<f64>>>,
    outputs: BTreeMap<String, String>,
) -> Result<()> {
    let manifest = Manifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        seeds: config.seeds(),
        inputs,
        partition_corners,
        outputs,
    };
    write_json(dir, &format!("{command}_manifest.json"), &manifest)?;
    Ok(())
}

fn ensure_out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn read_input(path: &Path) -> Result<(Vec<u8>, String, String)> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading input {}", path.display()))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let hash = sha256_hex(&bytes);
    Ok((bytes, name, hash))
}

/// Payoff functional of a fixture: zero when the table is all zeros,
/// otherwise an exact per-path lookup.
fn payoff_from_fixture(market: &TinyMarket) -> Payoff {
    if market.payoff.iter().flatten().all(|&v| v == 0.0) {
        return Payoff::Zero;
    }
    let key = |path: &PricePath| -> Vec<u64> {
        path.prices.iter().flatten().map(|v| v.to_bits()).collect()
    };
    let mut table = std::collections::HashMap::new();
    for (measure, values) in market.measures.iter().zip(&market.payoff) {
        for (path, &value) in measure.paths.iter().zip(values) {
            table.insert(key(path), value);
        }
    }
    Payoff::custom(move |path| table.get(&key(path)).copied().unwrap_or(0.0))
}

fn load_market(config: &RunConfig, source: &DataSource) -> Result<LoadedMarket> {
    match source {
        DataSource::Scenarios(path) => {
            let (bytes, input_name, input_sha256) = read_input(path)?;
            let cache: ScenarioCache = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing scenario cache {}", path.display()))?;
            let ambiguity = AmbiguitySet::new(cache.measures).context("scenario cache")?;
            Ok(LoadedMarket {
                spec: cache.spec,
                ambiguity,
                costs: config.cost_params()?,
                payoff: Payoff::Zero,
                input_name,
                input_sha256,
            })
        }
        DataSource::Fixture(path) => {
            let (bytes, input_name, input_sha256) = read_input(path)?;
            let market: TinyMarket = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing fixture {}", path.display()))?;
            market.validate().context("fixture")?;
            let payoff = payoff_from_fixture(&market);
            let ambiguity = market.ambiguity()?;
            Ok(LoadedMarket {
                spec: market.spec,
                ambiguity,
                costs: market.costs,
                payoff,
                input_name,
                input_sha256,
            })
        }
    }
}

fn make_partition(config: &RunConfig, spec: &MarketSpec) -> Partition {
    ridgearb::generate_partition(spec, config.partition.num_corners, config.seeds().partition)
}

fn train_on(config: &RunConfig, market: &LoadedMarket, partition: &Partition) -> Result<TrainResult> {
    let strategy_config = config.strategy_config(market.spec.num_assets, market.spec.num_times);
    let result = train(
        &strategy_config,
        &market.ambiguity,
        partition,
        &market.payoff,
        &market.costs,
        &config.train_config(),
    )?;
    Ok(result)
}

/// Deterministic training artifacts (no wall time: that goes to stderr).
#[derive(Serialize, Deserialize)]
struct TraceArtifact {
    trace: Vec<f64>,
    stage_values: Vec<f64>,
    converged: bool,
}

pub fn cmd_ingest(config: &RunConfig, csv: &Path) -> Result<(), Failure> {
    let (bytes, input_name, input_sha256) = read_input(csv).invalid()?;
    let table = load_prices_from_reader(&bytes[..]).context("loading prices").invalid()?;
    if table.dropped_rows > 0 {
        eprintln!("warning: dropped {} rows with missing values", table.dropped_rows);
    }
    let scenario_config = config.scenario_config();
    let spec =
        spec_from_table(&table, scenario_config.horizon, config.market.bounds_margin).invalid()?;
    let (ambiguity, stats) = build_scenarios(&table, &scenario_config, &spec).invalid()?;
    if stats.clipped_prices > 0 {
        eprintln!(
            "warning: clipped {} of {} generated prices into the market bounds ({:.3}%)",
            stats.clipped_prices,
            stats.total_prices,
            100.0 * stats.clip_rate()
        );
    }

    let dir = ensure_out_dir(config).runtime()?;
    let num_paths: usize = ambiguity.measures.iter().map(|m| m.paths.len()).sum();
    let cache = ScenarioCache {
        config: scenario_config,
        spec,
        measures: ambiguity.measures,
        stats,
        data_sha256: input_sha256.clone(),
    };
    let hash = write_json(&dir, SCENARIOS_FILE, &cache).runtime()?;
    write_manifest(
        &dir,
        "ingest",
        config,
        BTreeMap::from([(input_name, input_sha256)]),
        None,
        BTreeMap::from([(SCENARIOS_FILE.to_string(), hash)]),
    )
    .runtime()?;
    println!(
        "ingested {} rows x {} assets -> {} measures, {} paths ({})",
        table.num_rows(),
        table.num_assets(),
        cache.measures.len(),
        num_paths,
        dir.join(SCENARIOS_FILE).display()
    );
    Ok(())
}

pub fn cmd_train(config: &RunConfig, source: &DataSource) -> Result<(), Failure> {
    let market = load_market(config, source).invalid()?;
    let partition = make_partition(config, &market.spec);
    let result = train_on(config, &market, &partition).runtime()?;

    let dir = ensure_out_dir(config).runtime()?;
    let checkpoint = Checkpoint::from_strategy(&market.spec, &result.strategy);
    let checkpoint_hash = write_json(&dir, CHECKPOINT_FILE, &checkpoint).runtime()?;
    let trace = TraceArtifact {
        trace: result.trace.clone(),
        stage_values: result.stage_reports.iter().map(|r| r.value).collect(),
        converged: result.converged,
    };
    let trace_hash = write_json(&dir, TRACE_FILE, &trace).runtime()?;

    write_manifest(
        &dir,
        "train",
        config,
        BTreeMap::from([(market.input_name.clone(), market.input_sha256.clone())]),
        Some(&partition.corners),
        BTreeMap::from([
            (CHECKPOINT_FILE.to_string(), checkpoint_hash),
            (TRACE_FILE.to_string(), trace_hash),
        ]),
    )
    .runtime()?;
    let final_value = result.stage_reports.last().map_or(f64::NAN, |r| r.value);
    eprintln!("trained in {:.1}s", result.wall_time_secs);
    println!(
        "final objective {final_value:.6} ({}converged) -> {}",
        if result.converged { "" } else { "not " },
        dir.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DetectArtifact {
    verdict: Verdict,
    tolerance: f64,
    objective: ObjectiveReport,
    verification: VerificationReport,
}

pub fn cmd_detect(
    config: &RunConfig,
    source: &DataSource,
    checkpoint: Option<&Path>,
) -> Result<(), Failure> {
    let market = load_market(config, source).invalid()?;
    let partition = make_partition(config, &market.spec);
    let mut inputs = BTreeMap::from([(market.input_name.clone(), market.input_sha256.clone())]);

    let strategy: RidgeletStrategy = match checkpoint {
        Some(path) => {
            let (bytes, name, hash) = read_input(path).invalid()?;
            inputs.insert(name, hash);
            let loaded: Checkpoint = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing checkpoint {}", path.display()))
                .invalid()?;
            let (spec, strategy) = loaded.into_strategy().invalid()?;
            if spec != market.spec {
                return Err(Failure::Validation(anyhow!(
                    "checkpoint was trained on a different market spec than {}",
                    market.input_name
                )));
            }
            strategy
        }
        None => train_on(config, &market, &partition).runtime()?.strategy,
    };

    let k = *config
        .train
        .k_schedule
        .last()
        .ok_or_else(|| anyhow!("train.k_schedule must be non-empty"))
        .invalid()?;
    let objective = penalized_value(
        &strategy,
        &market.ambiguity,
        &partition,
        &PenaltyConfig::new(k).invalid()?,
        &market.payoff,
        &market.costs,
    )
    .runtime()?;
    let verdict = detect_arbitrage(&objective, config.detection.tolerance);
    let verification = verify_arbitrage(
        &strategy,
        &market.ambiguity,
        &partition,
        &market.costs,
        config.detection.tolerance,
    )
    .runtime()?;

    let dir = ensure_out_dir(config).runtime()?;
    let artifact =
        DetectArtifact { verdict, tolerance: config.detection.tolerance, objective, verification };
    let hash = write_json(&dir, DETECT_FILE, &artifact).runtime()?;
    write_manifest(
        &dir,
        "detect",
        config,
        inputs,
        Some(&partition.corners),
        BTreeMap::from([(DETECT_FILE.to_string(), hash)]),
    )
    .runtime()?;
    println!(
        "verdict: {:?} (value {:.6}, tolerance {})",
        artifact.verdict, artifact.objective.value, artifact.tolerance
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct BacktestArtifact {
    strategy: BacktestReport,
    baseline: BacktestReport,
    clipped_prices: usize,
}

pub fn cmd_backtest(config: &RunConfig, checkpoint: &Path, csv: &Path) -> Result<(), Failure> {
    let (ck_bytes, ck_name, ck_hash) = read_input(checkpoint).invalid()?;
    let loaded: Checkpoint = serde_json::from_slice(&ck_bytes)
        .with_context(|| format!("parsing checkpoint {}", checkpoint.display()))
        .invalid()?;
    let (spec, strategy) = loaded.into_strategy().invalid()?;

    let (csv_bytes, csv_name, csv_hash) = read_input(csv).invalid()?;
    let table = load_prices_from_reader(&csv_bytes[..]).context("loading test prices").invalid()?;
    if table.dropped_rows > 0 {
        eprintln!("warning: dropped {} rows with missing values", table.dropped_rows);
    }
    let stride = config.backtest.stride.unwrap_or(config.scenario.stride);
    let mut paths = sliding_paths(&table, spec.num_times, stride, &spec.spot).invalid()?;
    let mut clipped = 0;
    for path in &mut paths {
        clipped += clip_path(path, &spec.lower_bounds, &spec.upper_bounds);
        validate_path(&spec, path).invalid()?;
    }
    if clipped > 0 {
        eprintln!("warning: clipped {clipped} test prices into the trained market bounds");
    }
    let costs = config.cost_params().invalid()?;

    let records = run_backtest(&strategy, &spec, &paths, &costs).runtime()?;
    let baseline = if config.backtest.equal_dollar {
        buy_and_hold_equal_dollar(&paths, &costs).runtime()?
    } else {
        buy_and_hold(&paths, &costs).runtime()?
    };
    let profits: Vec<f64> = records.iter().map(|r| r.net_profit).collect();
    let baseline_profits: Vec<f64> = baseline.iter().map(|r| r.net_profit).collect();
    let regression = regression_metrics(&profits, &baseline_profits).ok();

    let dir = ensure_out_dir(config).runtime()?;
    let artifact = BacktestArtifact {
        strategy: build_report(&records, regression).runtime()?,
        baseline: build_report(&baseline, None).runtime()?,
        clipped_prices: clipped,
    };
    let report_hash = write_json(&dir, BACKTEST_FILE, &artifact).runtime()?;
    let trades_hash = write_text(&dir, TRADES_FILE, &trades_csv(&records, &baseline)).runtime()?;
    let cumulative_hash =
        write_text(&dir, CUMULATIVE_FILE, &cumulative_csv(&records, &baseline)).runtime()?;

    write_manifest(
        &dir,
        "backtest",
        config,
        BTreeMap::from([(ck_name, ck_hash), (csv_name, csv_hash)]),
        None,
        BTreeMap::from([
            (BACKTEST_FILE.to_string(), report_hash),
            (TRADES_FILE.to_string(), trades_hash),
            (CUMULATIVE_FILE.to_string(), cumulative_hash),
        ]),
    )
    .runtime()?;
    println!(
        "backtested {} paths: average profit {:.6} vs baseline {:.6} -> {}",
        artifact.strategy.num_trades,
        artifact.strategy.average_profit,
        artifact.baseline.average_profit,
        dir.join(BACKTEST_FILE).display()
    );
    Ok(())
}

fn trades_csv(records: &[TradeRecord], baseline: &[TradeRecord]) -> String {
    let mut out = String::from("path_id,strategy_profit,baseline_profit\n");
    for (r, b) in records.iter().zip(baseline) {
        let _ = writeln!(out, "{},{},{}", r.path_id, r.net_profit, b.net_profit);
    }
    out
}

fn cumulative_csv(records: &[TradeRecord], baseline: &[TradeRecord]) -> String {
    let mut out = String::from("path_id,strategy_cumulative,baseline_cumulative\n");
    let (mut acc_s, mut acc_b) = (0.0f64, 0.0f64);
    for (r, b) in records.iter().zip(baseline) {
        acc_s += r.net_profit;
        acc_b += b.net_profit;
        let _ = writeln!(out, "{},{},{}", r.path_id, acc_s, acc_b);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct OracleArtifact {
    result: OracleResult,
}

pub fn cmd_oracle(config: &RunConfig, fixture: &Path) -> Result<(), Failure> {
    let (bytes, input_name, input_sha256) = read_input(fixture).invalid()?;
    let market: TinyMarket = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing fixture {}", fixture.display()))
        .invalid()?;
    market.validate().context("fixture").invalid()?;
    let partition = make_partition(config, &market.spec);

    let result = enumerate_min_cost(
        &market,
        &partition,
        config.oracle.grid_step,
        config.strategy.budget,
        config.oracle.max_enumerations,
    )
    .runtime()?;

    let loaded = LoadedMarket {
        spec: market.spec.clone(),
        ambiguity: market.ambiguity().invalid()?,
        costs: market.costs.clone(),
        payoff: payoff_from_fixture(&market),
        input_name: input_name.clone(),
        input_sha256: input_sha256.clone(),
    };
    let trained = train_on(config, &loaded, &partition).runtime()?;
    let trained_value = trained
        .stage_reports
        .last()
        .map(|r| r.value)
        .ok_or_else(|| anyhow!("training produced no stage reports"))
        .runtime()?;
    let gap: GapReport = oracle_gap(trained_value, &result, config.oracle.gap_tolerance);

    let dir = ensure_out_dir(config).runtime()?;
    let oracle_hash =
        write_json(&dir, ORACLE_FILE, &OracleArtifact { result: result.clone() }).runtime()?;
    let gap_hash = write_json(&dir, GAP_FILE, &gap).runtime()?;
    write_manifest(
        &dir,
        "oracle",
        config,
        BTreeMap::from([(input_name, input_sha256)]),
        Some(&partition.corners),
        BTreeMap::from([
            (ORACLE_FILE.to_string(), oracle_hash),
            (GAP_FILE.to_string(), gap_hash),
        ]),
    )
    .runtime()?;
    println!(
        "oracle c_min {:.6} over {} strategies; trained {:.6}; gap {:.6} ({} tolerance {})",
        gap.c_min,
        result.enumeration_count,
        gap.trained_value,
        gap.gap,
        if gap.within_tolerance { "within" } else { "OUTSIDE" },
        gap.tolerance
    );
    Ok(())
}

pub fn cmd_report(config: &RunConfig, run_dir: Option<&Path>) -> Result<(), Failure> {
    let dir = run_dir.map(Path::to_path_buf).unwrap_or(config.output_dir.clone());
    if !dir.is_dir() {
        return Err(Failure::Validation(anyhow!(
            "run directory {} does not exist",
            dir.display()
        )));
    }
    let mut inputs = BTreeMap::new();
    let mut summary = serde_json::Map::new();
    let mut rows: Vec<(String, String)> = Vec::new();

    let fmt = |v: f64| format!("{v:.6}");
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));

    if let Some((value, hash)) = read_artifact::<DetectArtifact>(&dir, DETECT_FILE).invalid()? {
        inputs.insert(DETECT_FILE.to_string(), hash);
        rows.push(("Verdict".into(), format!("{:?}", value.verdict)));
        rows.push(("Penalized Value".into(), fmt(value.objective.value)));
        rows.push(("Capital Constant".into(), fmt(value.objective.c)));
        summary.insert("detect".into(), serde_json::to_value(&value).runtime()?);
    }
    if let Some((value, hash)) = read_artifact::<BacktestArtifact>(&dir, BACKTEST_FILE).invalid()? {
        inputs.insert(BACKTEST_FILE.to_string(), hash);
        for (label, report) in [("", &value.strategy), ("B&H ", &value.baseline)] {
            rows.push((format!("{label}Overall Profit"), fmt(report.overall_profit)));
            rows.push((format!("{label}Average Profit"), fmt(report.average_profit)));
            rows.push((format!("{label}% of Profitable Trades"), fmt(report.pct_profitable)));
            rows.push((format!("{label}Maximal Profit"), fmt(report.max_profit)));
            rows.push((format!("{label}Minimal Profit"), fmt(report.min_profit)));
            rows.push((format!("{label}Sharpe Ratio"), opt(report.sharpe)));
            rows.push((format!("{label}Sortino Ratio"), opt(report.sortino)));
        }
        if let Some(reg) = &value.strategy.regression {
            rows.push(("RMSE".into(), fmt(reg.rmse)));
            rows.push(("MAE".into(), fmt(reg.mae)));
            rows.push(("R2".into(), fmt(reg.r2)));
        }
        summary.insert("backtest".into(), serde_json::to_value(&value).runtime()?);
    }
    if let Some((value, hash)) = read_artifact::<OracleArtifact>(&dir, ORACLE_FILE).invalid()? {
        inputs.insert(ORACLE_FILE.to_string(), hash);
        rows.push(("Oracle Minimal Capital".into(), fmt(value.result.c_min)));
        rows.push(("Oracle Enumerations".into(), value.result.enumeration_count.to_string()));
        summary.insert("oracle".into(), serde_json::to_value(&value).runtime()?);
    }
    if let Some((value, hash)) = read_artifact::<GapReport>(&dir, GAP_FILE).invalid()? {
        inputs.insert(GAP_FILE.to_string(), hash);
        rows.push(("Trained Value".into(), fmt(value.trained_value)));
        rows.push(("Oracle Gap".into(), fmt(value.gap)));
        rows.push(("Gap Within Tolerance".into(), value.within_tolerance.to_string()));
        summary.insert("oracle_gap".into(), serde_json::to_value(&value).runtime()?);
    }
    if summary.is_empty() {
        return Err(Failure::Validation(anyhow!(
            "no report artifacts found in {}",
            dir.display()
        )));
    }

    let json_hash = write_json(&dir, SUMMARY_JSON, &serde_json::Value::Object(summary)).runtime()?;
    let mut csv = String::from("metric,value\n");
    for (label, value) in &rows {
        let _ = writeln!(csv, "{label},{value}");
    }
    let csv_hash = write_text(&dir, SUMMARY_CSV, &csv).runtime()?;

    write_manifest(
        &dir,
        "report",
        config,
        inputs,
        None,
        BTreeMap::from([
            (SUMMARY_JSON.to_string(), json_hash),
            (SUMMARY_CSV.to_string(), csv_hash),
        ]),
    )
    .runtime()?;
    println!("wrote {} and {}", dir.join(SUMMARY_JSON).display(), dir.join(SUMMARY_CSV).display());
    Ok(())
}

fn read_artifact<T: for<'de> Deserialize<'de>>(
    dir: &Path,
    name: &str,
) -> Result<Option<(T, String)>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Ok(None);
    }
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let value = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing artifact {}", path.display()))?;
    Ok(Some((value, sha256_hex(&bytes))))
}
