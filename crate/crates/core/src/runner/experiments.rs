//! Experiment pipelines: each writes its data files into the output
//! directory and records hashes, metrics and invariant checks in the manifest.

use std::fs;
use std::path::Path;

use crate::chain::{build_concentric_chain, sample_xy_chain, ChainSpec};
use crate::entanglement::{block_profile, fmt_num, EntropyCurve};
use crate::error::{Error, Result};
use crate::linalg::linear_fit;
use crate::oracle::{self, build_dense_hamiltonian, ground_state};
use crate::precision::{Extended, Real, DOUBLE_BITS};
use crate::rg::{
    average_pairing_entropy, concentric_average_entropy, concentric_pairing, decimate, pairing_entropy,
    rsp_scaling_fit, strong_disorder_ensemble,
};
use crate::solver::{ground_energy, solve_chain};

use super::config::{ExperimentConfig, ExperimentKind};
use super::manifest::{RunManifest, RunStatus};

/// Tolerance for the purity check `S(L) = S(N − L)` on end blocks.
const PURITY_TOLERANCE: f64 = 1e-8;

/// `ln 2 / 3`: the log₂-slope of the disorder-averaged entropy for `c = 1`.
pub const RSP_SLOPE_TARGET: f64 = std::f64::consts::LN_2 / 3.0;

/// A finished (or aborted) run. The manifest is always written.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.manifest.status == RunStatus::Ok
    }

    /// Process exit status: 0 ok, 1 I/O, 2 bad input, 3 numerical failure,
    /// 4 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            None if self.manifest.status == RunStatus::Ok => EXIT_OK,
            None => EXIT_INVARIANT,
            Some(e) => error_exit_code(e),
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::InvalidChain(_)
        | Error::InvalidProfile(_)
        | Error::InvalidBlock(_)
        | Error::UnsupportedModel(_)
        | Error::TooLarge { .. }
        | Error::Parse(_) => EXIT_CONFIG,
        Error::DegenerateGroundState { .. }
        | Error::NumericalFailure(_)
        | Error::FirstOrderNotZero(_)
        | Error::InvalidSubspace(_)
        | Error::FitUnderdetermined(_) => EXIT_NUMERICAL,
        Error::PhysicalityViolation(_) => EXIT_INVARIANT,
    }
}

type Staged<T> = std::result::Result<T, (&'static str, Error)>;

fn stage<T>(name: &'static str, r: Result<T>) -> Staged<T> {
    r.map_err(|e| (name, e))
}

/// Execute `config`, writing into `out_dir` (created if missing).
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> RunOutcome {
    execute(config, out_dir, |m| match config.experiment {
            ExperimentKind::Fig4a | ExperimentKind::Fig4b | ExperimentKind::Custom => {
                if config.chain.precision_bits == DOUBLE_BITS {
                    chain_pipeline::<f64>(config, m)
                } else {
                    chain_pipeline::<Extended>(config, m)
                }
            }
            ExperimentKind::OracleCompare => {
                if config.chain.precision_bits == DOUBLE_BITS {
                    oracle_compare::<f64>(config, m)
                } else {
                    oracle_compare::<Extended>(config, m)
                }
            }
            ExperimentKind::ConcentricAverage => concentric_average(config, m),
            ExperimentKind::RspScaling => rsp_scaling(config, m),
    })
}

/// Strong-disorder decimation only. Ensemble and concentric experiments run
/// as usual; chain experiments skip the free-fermion solve and just record
/// the pairing of the configured chain.
pub fn run_rg(config: &ExperimentConfig, out_dir: &Path) -> RunOutcome {
    match config.experiment {
        ExperimentKind::ConcentricAverage | ExperimentKind::RspScaling => run_experiment(config, out_dir),
        ExperimentKind::OracleCompare => execute(config, out_dir, |_| {
            Err(("setup", Error::UnsupportedModel("oracle-compare has no decimation stage".into())))
        }),
        _ => execute(config, out_dir, |m| {
            if config.chain.precision_bits == DOUBLE_BITS {
                rg_pipeline::<f64>(config, m)
            } else {
                rg_pipeline::<Extended>(config, m)
            }
        }),
    }
}

fn execute(
    config: &ExperimentConfig,
    out_dir: &Path,
    body: impl FnOnce(&mut RunManifest) -> Staged<()>,
) -> RunOutcome {
    let mut manifest = RunManifest::new(config.clone(), out_dir);
    let result = fs::create_dir_all(out_dir)
        .map_err(|e| ("setup", Error::from(e)))
        .and_then(|_| body(&mut manifest));
    let error = match result {
        Ok(()) => None,
        Err((name, e)) => {
            manifest.fail(name, &e.to_string());
            Some(e)
        }
    };
    if let Err(e) = manifest.write() {
        if error.is_none() {
            manifest.fail("write_manifest", &e.to_string());
            return RunOutcome { manifest, error: Some(e) };
        }
    }
    RunOutcome { manifest, error }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn load_chain<T: Real>(config: &ExperimentConfig) -> Result<ChainSpec<T>> {
    let bits = config.chain.precision_bits;
    if let Some(path) = &config.chain.chain_file {
        let text = fs::read_to_string(path)?;
        let mut doc: crate::chain::ChainDocument =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.precision_bits = bits;
        return ChainSpec::from_document(&doc);
    }
    let profile = config
        .chain
        .profile
        .as_ref()
        .ok_or_else(|| Error::InvalidProfile("no coupling profile configured".into()))?;
    build_concentric_chain(config.chain.n_sites, profile, bits)
}

fn chain_pipeline<T: Real>(config: &ExperimentConfig, m: &mut RunManifest) -> Staged<()> {
    let chain = stage("build_chain", load_chain::<T>(config))?;
    for w in chain.warnings() {
        m.warn(w.to_string());
    }
    stage("write", m.emit("chain.json", chain.to_json().as_bytes()))?;

    let (modes, g) = stage("solve", solve_chain(&chain, config.chain.zero_mode_tolerance))?;
    m.metric("ground_energy", ground_energy(&modes).to_f64());
    m.metric("lambda_min", modes.lambdas.last().map(Real::to_f64).unwrap_or(0.0));
    if config.dump_correlation {
        stage("write", m.emit("correlation.csv", g.to_csv().as_bytes()))?;
    }

    let n = chain.n_sites();
    let lens: Vec<usize> = (config.scan.l_min..=config.scan.l_max.min(n.saturating_sub(1))).collect();
    if !lens.is_empty() {
        let curve = stage("entropy", block_profile(&g, &lens, config.scan.positions))?;
        write_curve(&curve, config.scan.positions, m)?;
        curve_metrics(&curve, m);
        curve_checks(&curve, m);
    }

    if chain.is_xx() && chain.has_zero_field() && n % 2 == 0 && chain.jx().iter().all(|j| !j.is_zero()) {
        record_decimation(&chain, m)?;
    }
    Ok(())
}

fn rg_pipeline<T: Real>(config: &ExperimentConfig, m: &mut RunManifest) -> Staged<()> {
    let chain = stage("build_chain", load_chain::<T>(config))?;
    for w in chain.warnings() {
        m.warn(w.to_string());
    }
    stage("write", m.emit("chain.json", chain.to_json().as_bytes()))?;
    record_decimation(&chain, m)
}

fn record_decimation<T: Real>(chain: &ChainSpec<T>, m: &mut RunManifest) -> Staged<()> {
    let pairing = stage("rg", decimate(chain))?;
    let mut buf = Vec::new();
    stage("write", pairing.write_pairs_csv(&mut buf))?;
    stage("write", m.emit("pairing.csv", &buf))?;
    stage("write", m.emit("decimation_log.json", pairing.decimation_log_json().as_bytes()))?;
    let concentric = pairing.same_matching(&concentric_pairing(chain.n_sites()).expect("even n"));
    m.metric("rg_pairing_is_concentric", if concentric { 1.0 } else { 0.0 });
    m.check("rg_perfect_matching", pairing.is_perfect_matching(), "");
    Ok(())
}

fn write_curve(curve: &EntropyCurve, positions: bool, m: &mut RunManifest) -> Staged<()> {
    let mut buf = Vec::new();
    stage("write", curve.write_summary_csv(&mut buf))?;
    stage("write", m.emit("entropy_summary.csv", &buf))?;
    if positions {
        let mut buf = Vec::new();
        stage("write", curve.write_positions_csv(&mut buf))?;
        stage("write", m.emit("entropy_positions.csv", &buf))?;
    }
    Ok(())
}

fn curve_metrics(curve: &EntropyCurve, m: &mut RunManifest) {
    let half = curve.n_sites / 2;
    let fit_rows: Vec<_> = curve
        .rows
        .iter()
        .filter(|r| r.block_len >= 2 && r.block_len <= half)
        .collect();
    let x: Vec<f64> = fit_rows.iter().map(|r| r.block_len as f64).collect();
    if let Ok(f) = linear_fit(&x, &fit_rows.iter().map(|r| r.end_entropy).collect::<Vec<_>>()) {
        m.metric("end_entropy_slope", f.slope);
    }
    let fro_rows: Vec<_> = curve.rows.iter().filter(|r| r.block_len <= half).collect();
    let x: Vec<f64> = fro_rows.iter().map(|r| r.block_len as f64).collect();
    if let Ok(f) = linear_fit(&x, &fro_rows.iter().map(|r| r.fro_sq).collect::<Vec<_>>()) {
        m.metric("fro_sq_slope", f.slope);
        m.metric("fro_sq_r_squared", f.r_squared);
    }
    let max_dev = fro_rows
        .iter()
        .map(|r| (r.end_entropy + r.fro_sq - r.block_len as f64).abs())
        .fold(0.0, f64::max);
    m.metric("max_abs_entropy_plus_fro_sq_minus_l", max_dev);
    if let Some(b) = curve.beta {
        m.metric("beta_estimate", b.beta);
        m.metric("beta_block_len", b.block_len as f64);
        m.label("beta_class", b.class.to_string());
    }
}

fn curve_checks(curve: &EntropyCurve, m: &mut RunManifest) {
    let in_range = curve.rows.iter().all(|r| {
        r.per_position
            .iter()
            .all(|&s| (0.0..=r.block_len as f64 + 1e-12).contains(&s))
    });
    m.check("entropy_within_0_and_l", in_range, "");
    let n = curve.n_sites;
    let mut worst: f64 = 0.0;
    for r in &curve.rows {
        if let Some(c) = curve.row(n - r.block_len) {
            worst = worst.max((r.end_entropy - c.end_entropy).abs());
        }
    }
    m.check(
        "end_block_complement_symmetry",
        worst <= PURITY_TOLERANCE,
        format!("max |S(L) - S(N-L)| = {worst:e}"),
    );
}

fn oracle_compare<T: Real>(config: &ExperimentConfig, m: &mut RunManifest) -> Staged<()> {
    let oc = &config.oracle;
    let bits = config.chain.precision_bits;
    let n = oc.n_sites;
    let mut rows = Vec::new();
    let (mut worst_e, mut worst_s, mut compared) = (0.0f64, 0.0f64, 0usize);
    for k in 0..oc.samples {
        let seed = config.seed.wrapping_add(k as u64);
        let chain = stage("build_chain", sample_xy_chain::<f64>(n, oc.coupling, oc.field, seed, DOUBLE_BITS))?;
        let h = stage("oracle", build_dense_hamiltonian(&chain, oc.convention))?;
        let gs = stage("oracle", ground_state(&h))?;
        if gs.degenerate {
            m.warn(format!("sample {k} (seed {seed}) has a degenerate ground state and was skipped"));
            rows.push(vec![k.to_string(), seed.to_string(), "true".into(), String::new(), fmt_num(gs.energy), String::new(), String::new()]);
            continue;
        }
        let ff_chain = stage("build_chain", chain.convert::<T>(bits))?;
        let (modes, g) = stage("solve", solve_chain(&ff_chain, config.chain.zero_mode_tolerance))?;
        let e_ff = ground_energy(&modes).to_f64();
        let mut dev_s: f64 = 0.0;
        for len in 1..n {
            for start in 1..=n - len + 1 {
                let s_ff = stage("entropy", crate::entanglement::block_spectrum(&g.g, start, len))?.entropy_bits;
                let s_ex = stage("oracle", oracle::block_entropy(&gs, start, len))?;
                dev_s = dev_s.max((s_ff - s_ex).abs());
            }
        }
        let dev_e = (e_ff - gs.energy).abs();
        worst_e = worst_e.max(dev_e);
        worst_s = worst_s.max(dev_s);
        compared += 1;
        rows.push(vec![
            k.to_string(),
            seed.to_string(),
            "false".into(),
            fmt_num(e_ff),
            fmt_num(gs.energy),
            fmt_num(dev_e),
            fmt_num(dev_s),
        ]);
    }
    let bytes = stage(
        "write",
        csv_bytes(
            &["sample", "seed", "degenerate", "energy_free_fermion", "energy_exact", "energy_abs_dev", "max_entropy_abs_dev"],
            rows,
        ),
    )?;
    stage("write", m.emit("oracle_report.csv", &bytes))?;
    m.metric("samples_compared", compared as f64);
    m.metric("max_energy_abs_dev", worst_e);
    m.metric("max_entropy_abs_dev", worst_s);
    m.check(
        "oracle_energy_agreement",
        worst_e <= oc.tolerance,
        format!("max |dE| = {worst_e:e}, tolerance {:e}", oc.tolerance),
    );
    m.check(
        "oracle_entropy_agreement",
        worst_s <= oc.tolerance,
        format!("max |dS| = {worst_s:e}, tolerance {:e}", oc.tolerance),
    );
    Ok(())
}

fn concentric_average(config: &ExperimentConfig, m: &mut RunManifest) -> Staged<()> {
    let n = config.chain.n_sites;
    let pairing = stage("rg", concentric_pairing(n))?;
    let mut rows = Vec::new();
    let (mut worst, mut margin, mut enum_ok) = (0.0f64, f64::INFINITY, true);
    for len in config.scan.l_min..=config.scan.l_max {
        let avg = stage("rg", average_pairing_entropy(&pairing, len))?;
        let brute = (1..=n - len + 1)
            .map(|i| pairing_entropy(&pairing, i, len).map(|c| c as f64))
            .sum::<Result<f64>>();
        let brute = stage("rg", brute)? / (n - len + 1) as f64;
        enum_ok &= (brute - avg).abs() <= 1e-12 * avg.max(1.0);
        let formula = concentric_average_entropy(n, len);
        worst = worst.max((avg - formula).abs());
        margin = margin.min(avg - len as f64 / 2.0);
        rows.push(vec![
            len.to_string(),
            fmt_num(avg),
            fmt_num(formula),
            fmt_num((avg - formula).abs()),
            fmt_num(len as f64 / 2.0),
        ]);
    }
    let bytes = stage(
        "write",
        csv_bytes(&["L", "S_avg_bits", "formula_bits", "abs_diff", "half_L"], rows),
    )?;
    stage("write", m.emit("concentric_average.csv", &bytes))?;
    let mut buf = Vec::new();
    stage("write", pairing.write_pairs_csv(&mut buf))?;
    stage("write", m.emit("pairing.csv", &buf))?;
    m.metric("max_abs_diff_from_formula", worst);
    m.metric("min_avg_minus_half_l", margin);
    m.check("pairing_perfect_matching", pairing.is_perfect_matching(), "");
    m.check("sliding_window_matches_enumeration", enum_ok, "");
    Ok(())
}

fn rsp_scaling(config: &ExperimentConfig, m: &mut RunManifest) -> Staged<()> {
    let e = &config.ensemble;
    let ensemble = stage("rg", strong_disorder_ensemble(e.n_sites, e.delta, config.seed, e.samples))?;
    let lens: Vec<usize> = (e.l_min..=e.l_max).collect();
    let fit = stage("fit", rsp_scaling_fit(&ensemble, &lens))?;
    let mut buf = Vec::new();
    stage("write", fit.write_csv(&mut buf))?;
    stage("write", m.emit("rsp_scaling.csv", &buf))?;
    let first = &ensemble[0];
    let mut buf = Vec::new();
    stage("write", first.write_pairs_csv(&mut buf))?;
    stage("write", m.emit("pairing.csv", &buf))?;
    stage("write", m.emit("decimation_log.json", first.decimation_log_json().as_bytes()))?;
    m.metric("slope", fit.slope);
    m.metric("intercept", fit.intercept);
    m.metric("slope_target", RSP_SLOPE_TARGET);
    m.metric("slope_ratio", fit.slope / RSP_SLOPE_TARGET);
    let all_ok = ensemble
        .iter()
        .all(|p| p.is_perfect_matching() && p.decimation_log.len() == e.n_sites / 2);
    m.check("ensemble_perfect_matchings", all_ok, format!("{} samples", ensemble.len()));
    Ok(())
}

/// Profiles offered by `presets`, for display.
pub fn preset_summary() -> Vec<(ExperimentKind, &'static str)> {
    ExperimentKind::ALL.iter().map(|k| (*k, k.describe())).collect()
}
