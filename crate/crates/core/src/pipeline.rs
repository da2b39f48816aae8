//! Pass scheduling, end-to-end verification, and batch reporting.
//!
//! A pipeline runs a list of passes — each already a fixed-point rewriter —
//! in cycles until one full cycle leaves the circuit unchanged.  Outcome
//! flips reported by individual passes XOR-accumulate across the whole run,
//! and the optional verification step checks the final circuit against the
//! original under those flips.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{Circuit, Metrics};
use crate::constprop::{run_cp, CpConfig};
use crate::generators::{build, GenError};
use crate::lifting::{lift_hadamards, lift_measurements, PassError, PassReport};
use crate::sim::{equivalent_with, SimError, CMP_EPS, DEFAULT_ORACLE_QUBIT_LIMIT};

/// The three rewrite passes the driver knows how to schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassKind {
    /// Constant propagation over the entanglement-group table.
    Cp,
    /// Measurement lifting: commute measurements left, classicalize controls.
    MeasLift,
    /// Hadamard lifting: commute Hadamards left over Pauli-type predecessors.
    HLift,
}

impl PassKind {
    pub fn name(self) -> &'static str {
        match self {
            PassKind::Cp => "cp",
            PassKind::MeasLift => "measlift",
            PassKind::HLift => "hlift",
        }
    }
}

/// Parse a comma-separated pass list such as `"cp,measlift,hlift"`.
pub fn parse_pass_spec(spec: &str) -> Result<Vec<PassKind>, PipelineError> {
    let mut out = Vec::new();
    for tok in spec.split(',') {
        let t = tok.trim();
        if t.is_empty() {
            continue;
        }
        out.push(match t {
            "cp" => PassKind::Cp,
            "measlift" => PassKind::MeasLift,
            "hlift" => PassKind::HLift,
            other => return Err(PipelineError::UnknownPass(other.to_string())),
        });
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyPassSpec);
    }
    Ok(out)
}

/// Canonical string form of a pass list (inverse of [`parse_pass_spec`]).
pub fn pass_spec_string(passes: &[PassKind]) -> String {
    passes.iter().map(|p| p.name()).collect::<Vec<_>>().join(",")
}

/// Everything the driver needs to run and optionally verify a pipeline.
#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub passes: Vec<PassKind>,
    /// Amplitude budget per entanglement group before it degrades to "unknown".
    pub max_amplitudes: usize,
    /// Hybrid-state budget per entanglement group before it degrades.
    pub max_hybrid_states: usize,
    /// Maximum number of full pass cycles before giving up.
    pub cycle_cap: usize,
    /// Run the brute-force oracle on input vs. output at the end.
    pub verify: bool,
    /// Total-variation tolerance for verification.
    pub tolerance: f64,
    /// Verification is skipped (not failed) above this qubit count.
    pub oracle_qubit_limit: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            passes: vec![PassKind::Cp, PassKind::MeasLift],
            max_amplitudes: 16,
            max_hybrid_states: 4,
            cycle_cap: 50,
            verify: false,
            tolerance: CMP_EPS,
            oracle_qubit_limit: DEFAULT_ORACLE_QUBIT_LIMIT,
        }
    }
}

/// What the end-of-run oracle said, if it ran.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum VerifyOutcome {
    Passed { tv_distance: f64 },
    Failed { tv_distance: f64, witness: Option<String> },
    /// The oracle could not run (too many qubits/registers); not a failure.
    Skipped { reason: String },
}

impl VerifyOutcome {
    /// True unless the oracle ran and found a discrepancy.
    pub fn passed(&self) -> bool {
        !matches!(self, VerifyOutcome::Failed { .. })
    }
}

/// Summary of one pipeline run, serializable into the stats report.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub pass_spec: String,
    /// Full cycles executed (the last one confirms the fixed point).
    pub cycles: usize,
    pub metrics_before: Metrics,
    pub metrics_after: Metrics,
    pub reduction_gates_pct: f64,
    pub reduction_cgates_pct: f64,
    /// Registers whose final reported value is negated relative to the input
    /// circuit; XOR these bits when comparing outcome distributions.
    pub output_flips: Vec<usize>,
    pub duration_ms: f64,
    pub verify: Option<VerifyOutcome>,
    pub pass_reports: Vec<PassReport>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown pass `{0}` (expected cp, measlift, hlift)")]
    UnknownPass(String),
    #[error("empty pass spec")]
    EmptyPassSpec,
    #[error("pass cycle did not stabilize within {cycles} cycle(s)")]
    CycleCapExceeded { cycles: usize },
    #[error(transparent)]
    Pass(#[from] PassError),
    #[error("verification oracle failed: {0}")]
    Oracle(SimError),
    #[error(transparent)]
    Generator(#[from] GenError),
}

/// Percentage drop from `before` to `after`; 0 when there was nothing before.
/// Negative when a pass grew the count (possible for gate totals).
pub fn reduction_pct(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (before as f64 - after as f64) / before as f64
    }
}

/// Run `opts.passes` in cycles until a full cycle changes nothing, then
/// optionally verify the result against `input` under the accumulated flips.
pub fn run_pipeline(
    input: &Circuit,
    opts: &PipelineOptions,
) -> Result<(Circuit, RunRecord), PipelineError> {
    let start = Instant::now();
    let cp_cfg = CpConfig {
        max_amplitudes: opts.max_amplitudes,
        max_hybrid_states: opts.max_hybrid_states,
        ..CpConfig::default()
    };
    let mut c = input.clone();
    let mut flips: BTreeSet<usize> = BTreeSet::new();
    let mut reports = Vec::new();
    let mut cycles = 0usize;
    loop {
        if cycles == opts.cycle_cap {
            return Err(PipelineError::CycleCapExceeded { cycles });
        }
        cycles += 1;
        let before_cycle = c.clone();
        for pass in &opts.passes {
            let (next, report) = match pass {
                PassKind::Cp => run_cp(&c, &cp_cfg)?,
                PassKind::MeasLift => lift_measurements(&c)?,
                PassKind::HLift => lift_hadamards(&c)?,
            };
            for &r in &report.output_flips {
                // XOR: flipping twice restores the original sense.
                if !flips.remove(&r) {
                    flips.insert(r);
                }
            }
            reports.push(report);
            c = next;
        }
        if c == before_cycle {
            break;
        }
    }

    let flips_vec: Vec<usize> = flips.iter().copied().collect();
    let verify = if opts.verify {
        Some(verify_pair(input, &c, &flips_vec, opts)?)
    } else {
        None
    };

    let mb = input.metrics();
    let ma = c.metrics();
    let record = RunRecord {
        pass_spec: pass_spec_string(&opts.passes),
        cycles,
        metrics_before: mb,
        metrics_after: ma,
        reduction_gates_pct: reduction_pct(mb.gates, ma.gates),
        reduction_cgates_pct: reduction_pct(mb.qcontrolled_gates, ma.qcontrolled_gates),
        output_flips: flips_vec,
        duration_ms: start.elapsed().as_secs_f64() * 1e3,
        verify,
        pass_reports: reports,
    };
    Ok((c, record))
}

fn verify_pair(
    input: &Circuit,
    output: &Circuit,
    flips: &[usize],
    opts: &PipelineOptions,
) -> Result<VerifyOutcome, PipelineError> {
    match equivalent_with(input, output, flips, opts.tolerance, opts.oracle_qubit_limit) {
        Ok(check) => Ok(if check.equivalent {
            VerifyOutcome::Passed { tv_distance: check.tv_distance }
        } else {
            VerifyOutcome::Failed {
                tv_distance: check.tv_distance,
                witness: check.witness.map(|w| {
                    format!(
                        "register assignment {:#b} differs by {:.3e}{}",
                        w.beta,
                        w.probability_gap,
                        if w.extended { " (with appended measurements)" } else { "" }
                    )
                }),
            }
        }),
        Err(SimError::QubitLimitExceeded { n, limit }) => Ok(VerifyOutcome::Skipped {
            reason: format!("{n} qubits exceeds the oracle limit of {limit}"),
        }),
        Err(SimError::WidthLimit(what)) => Ok(VerifyOutcome::Skipped {
            reason: format!("more than 64 {what}s; beyond the oracle's packing"),
        }),
        Err(e) => Err(PipelineError::Oracle(e)),
    }
}

#[derive(Serialize)]
struct StatsFile<'a> {
    input: &'a str,
    spec: &'a str,
    records: &'a [RunRecord],
}

/// Render the stats report JSON: `{"input", "spec", "records": [...]}`.
pub fn stats_json(input: &str, spec: &str, records: &[RunRecord]) -> String {
    let file = StatsFile { input, spec, records };
    let mut s = serde_json::to_string_pretty(&file).expect("stats serialize");
    s.push('\n');
    s
}

/// Header line of the benchmark CSV report.
pub const CSV_HEADER: &str = "family,size,pass_spec,gates_before,gates_after,\
cgates_before,cgates_after,reduction_gates_pct,reduction_cgates_pct,duration_ms,verified";

/// One benchmark result row.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub family: String,
    pub size: usize,
    pub pass_spec: String,
    pub gates_before: usize,
    pub gates_after: usize,
    pub cgates_before: usize,
    pub cgates_after: usize,
    pub reduction_gates_pct: f64,
    pub reduction_cgates_pct: f64,
    pub duration_ms: f64,
    /// "yes", "no", "skipped", or "off" when verification was not requested.
    pub verified: String,
}

impl BenchRow {
    /// Render as a CSV line matching [`CSV_HEADER`]; the pass spec is quoted
    /// because it contains commas.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},\"{}\",{},{},{},{},{:.2},{:.2},{:.3},{}",
            self.family,
            self.size,
            self.pass_spec,
            self.gates_before,
            self.gates_after,
            self.cgates_before,
            self.cgates_after,
            self.reduction_gates_pct,
            self.reduction_cgates_pct,
            self.duration_ms,
            self.verified,
        )
    }
}

/// Build one family circuit, run the pipeline over it, and summarize.
pub fn bench_one(
    family: &str,
    size: usize,
    opts: &PipelineOptions,
) -> Result<BenchRow, PipelineError> {
    let c = build(family, size)?;
    let (_, rec) = run_pipeline(&c, opts)?;
    Ok(BenchRow {
        family: family.to_string(),
        size,
        pass_spec: rec.pass_spec,
        gates_before: rec.metrics_before.gates,
        gates_after: rec.metrics_after.gates,
        cgates_before: rec.metrics_before.qcontrolled_gates,
        cgates_after: rec.metrics_after.qcontrolled_gates,
        reduction_gates_pct: rec.reduction_gates_pct,
        reduction_cgates_pct: rec.reduction_cgates_pct,
        duration_ms: rec.duration_ms,
        verified: match &rec.verify {
            None => "off",
            Some(VerifyOutcome::Passed { .. }) => "yes",
            Some(VerifyOutcome::Failed { .. }) => "no",
            Some(VerifyOutcome::Skipped { .. }) => "skipped",
        }
        .to_string(),
    })
}

/// Run every `(family, size)` job in order on the current thread.
pub fn run_batch_sequential(
    jobs: &[(String, usize)],
    opts: &PipelineOptions,
) -> Vec<Result<BenchRow, PipelineError>> {
    jobs.iter().map(|(f, s)| bench_one(f, *s, opts)).collect()
}

/// Run the jobs across the rayon thread pool, preserving job order.
#[cfg(feature = "parallel")]
pub fn run_batch(
    jobs: &[(String, usize)],
    opts: &PipelineOptions,
) -> Vec<Result<BenchRow, PipelineError>> {
    use rayon::prelude::*;
    jobs.par_iter().map(|(f, s)| bench_one(f, *s, opts)).collect()
}

/// Sequential stand-in with the same signature when the `parallel` feature
/// is disabled.
#[cfg(not(feature = "parallel"))]
pub fn run_batch(
    jobs: &[(String, usize)],
    opts: &PipelineOptions,
) -> Vec<Result<BenchRow, PipelineError>> {
    run_batch_sequential(jobs, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;

    fn opts(passes: &[PassKind], verify: bool) -> PipelineOptions {
        PipelineOptions { passes: passes.to_vec(), verify, ..PipelineOptions::default() }
    }

    #[test]
    fn pass_spec_round_trips() {
        let passes = parse_pass_spec("cp, measlift,hlift").unwrap();
        assert_eq!(passes, vec![PassKind::Cp, PassKind::MeasLift, PassKind::HLift]);
        assert_eq!(pass_spec_string(&passes), "cp,measlift,hlift");
        assert!(matches!(parse_pass_spec("cp,nope"), Err(PipelineError::UnknownPass(_))));
        assert!(matches!(parse_pass_spec(" ,"), Err(PipelineError::EmptyPassSpec)));
    }

    #[test]
    fn ghz_pipeline_removes_all_quantum_controls() {
        let c = build("ghz", 6).unwrap();
        let (out, rec) =
            run_pipeline(&c, &opts(&[PassKind::Cp, PassKind::MeasLift], true)).unwrap();
        assert_eq!(out.metrics().qcontrolled_gates, 0);
        assert_eq!(out.metrics().cguarded_gates, 5);
        assert!((rec.reduction_cgates_pct - 100.0).abs() < 1e-12);
        assert!(rec.verify.unwrap().passed());
        assert!(rec.cycles >= 2, "needs a confirming cycle");
    }

    #[test]
    fn flips_survive_the_pipeline_and_verification() {
        // Z then H in front of a measurement: hlift turns [Z,H] into [H,X],
        // measlift absorbs the X into a flipped outcome.
        let mut c = Circuit::new(1, 1);
        c.gate(GateKind::Z, 0).h(0).measure(0, 0);
        let (out, rec) =
            run_pipeline(&c, &opts(&[PassKind::HLift, PassKind::MeasLift], true)).unwrap();
        assert_eq!(rec.output_flips, vec![0]);
        assert_eq!(out.metrics().gates, 1);
        assert!(rec.verify.unwrap().passed());
    }

    #[test]
    fn adder_collapses_to_measurements_under_cp() {
        let (out, rec) = run_pipeline(
            &build("adder", 6).unwrap(),
            &opts(&[PassKind::Cp], true),
        )
        .unwrap();
        assert_eq!(out.metrics().gates, 0);
        assert!((rec.reduction_gates_pct - 100.0).abs() < 1e-12);
        assert!(rec.verify.unwrap().passed());
    }

    #[test]
    fn oversized_verification_is_skipped_not_failed() {
        let c = build("ghz", 6).unwrap();
        let mut o = opts(&[PassKind::Cp], true);
        o.oracle_qubit_limit = 3;
        let (_, rec) = run_pipeline(&c, &o).unwrap();
        match rec.verify.unwrap() {
            VerifyOutcome::Skipped { reason } => assert!(reason.contains("oracle limit")),
            other => panic!("expected skip, got {other:?}"),
        }
    }

    #[test]
    fn cycle_cap_zero_reports_an_error() {
        let c = build("ghz", 3).unwrap();
        let mut o = opts(&[PassKind::Cp], false);
        o.cycle_cap = 0;
        assert!(matches!(
            run_pipeline(&c, &o),
            Err(PipelineError::CycleCapExceeded { cycles: 0 })
        ));
    }

    #[test]
    fn stats_json_has_the_documented_shape() {
        let c = build("ghz", 4).unwrap();
        let (_, rec) = run_pipeline(&c, &opts(&[PassKind::MeasLift], true)).unwrap();
        let s = stats_json("ghz4.qasm", "measlift", &[rec]);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["input"], "ghz4.qasm");
        assert_eq!(v["spec"], "measlift");
        let recs = v["records"].as_array().unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0]["pass_spec"], "measlift");
        assert!(recs[0]["metrics_after"]["qcontrolled_gates"].is_number());
        assert_eq!(recs[0]["verify"]["status"], "passed");
        assert!(recs[0]["pass_reports"].as_array().unwrap().len() >= 1);
    }

    #[test]
    fn csv_rows_match_the_header() {
        let row = bench_one("ghz", 5, &opts(&[PassKind::Cp, PassKind::MeasLift], true)).unwrap();
        let line = row.to_csv();
        assert_eq!(CSV_HEADER.split(',').count(), 11);
        // The quoted pass spec hides its internal commas from a naive split.
        let unquoted = line.replace("\"cp,measlift\"", "spec");
        assert_eq!(unquoted.split(',').count(), 11, "line: {line}");
        assert!(line.starts_with("ghz,5,\"cp,measlift\","));
        assert!(line.ends_with(",yes"));
    }

    #[test]
    fn batch_runners_agree() {
        let jobs: Vec<(String, usize)> = [("ghz", 4), ("wstate", 4), ("bv", 5), ("adder", 6)]
            .iter()
            .map(|(f, s)| (f.to_string(), *s))
            .collect();
        let o = opts(&[PassKind::Cp, PassKind::MeasLift], true);
        let seq = run_batch_sequential(&jobs, &o);
        let par = run_batch(&jobs, &o);
        assert_eq!(seq.len(), par.len());
        for (a, b) in seq.iter().zip(par.iter()) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            // Timings differ; everything observable must not.
            assert_eq!(a.family, b.family);
            assert_eq!(a.size, b.size);
            assert_eq!(a.gates_after, b.gates_after);
            assert_eq!(a.cgates_after, b.cgates_after);
            assert_eq!(a.verified, b.verified);
        }
    }

    #[test]
    fn generator_errors_surface_per_job() {
        let jobs = vec![("adder".to_string(), 5), ("ghz".to_string(), 4)];
        let res = run_batch_sequential(&jobs, &opts(&[PassKind::Cp], false));
        assert!(matches!(res[0], Err(PipelineError::Generator(_))));
        assert!(res[1].is_ok());
    }
}
