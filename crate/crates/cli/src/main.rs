//! `dequant` — rewrite hybrid quantum/classical circuits so that provably
//! classical work runs classically.
//!
//! Exit codes: 0 success, 1 usage error, 2 input parse error, 3 verification
//! failure, 4 a rewrite pass or the pass cycle hit its iteration cap.

use std::path::{Path, PathBuf};
use std::process::exit;

use clap::{Args, Parser, Subcommand};

use dequant_core::circuit::Circuit;
use dequant_core::constprop::{self, CpConfig};
use dequant_core::generators::FAMILIES;
use dequant_core::lifting::PassError;
use dequant_core::pipeline::{
    parse_pass_spec, run_batch, run_batch_sequential, run_pipeline, stats_json, BenchRow,
    PipelineError, PipelineOptions, VerifyOutcome, CSV_HEADER,
};
use dequant_core::qasm;

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_PARSE: i32 = 2;
const EXIT_VERIFY: i32 = 3;
const EXIT_CAP: i32 = 4;

#[derive(Parser)]
#[command(
    name = "dequant",
    version,
    about = "Move provably classical work out of quantum circuits",
    long_about = "Tracks the exact machine state of a hybrid circuit through an \
entanglement-group table and rewrites gates whose behavior is already determined: \
constant gates disappear, constant controls fold away, and quantum controls that \
mirror a recorded measurement become classical guards."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rewrite a circuit with the selected passes and emit OpenQASM 3.
    Optimize(OptimizeArgs),
    /// Run the pass pipeline across generated benchmark families.
    Bench(BenchArgs),
    /// Print a sweep-by-sweep account of what constant propagation sees.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct TableArgs {
    /// Amplitude budget per entanglement group before it degrades to unknown.
    #[arg(long, default_value_t = 16, value_name = "N")]
    max_amplitudes: usize,
    /// Hybrid-state budget per entanglement group before it degrades.
    #[arg(long, default_value_t = 4, value_name = "N")]
    max_hybrid_states: usize,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Input OpenQASM 3 file.
    input: PathBuf,
    /// Output file (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Comma-separated pass list: cp, measlift, hlift.
    #[arg(long, default_value = "cp,measlift", value_name = "LIST")]
    passes: String,
    #[command(flatten)]
    table: TableArgs,
    /// Check input/output equivalence with the brute-force oracle.
    #[arg(long)]
    verify: bool,
    /// Skip (do not fail) verification above this many qubits.
    #[arg(long, default_value_t = 12, value_name = "N")]
    oracle_limit: usize,
    /// Write a JSON stats report here.
    #[arg(long, value_name = "FILE")]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated benchmark families.
    #[arg(long, default_value = "ghz,wstate,bv,dj,qft,qpe,adder", value_name = "LIST")]
    families: String,
    /// Inclusive size range `lo..hi`, a single size, or a comma list.
    #[arg(long, default_value = "2..10", value_name = "SIZES")]
    sizes: String,
    /// Comma-separated pass list: cp, measlift, hlift.
    #[arg(long, default_value = "cp,measlift", value_name = "LIST")]
    passes: String,
    #[command(flatten)]
    table: TableArgs,
    /// Verify each row with the oracle (rows above the limit are skipped).
    #[arg(long)]
    verify: bool,
    /// Skip (do not fail) verification above this many qubits.
    #[arg(long, default_value_t = 12, value_name = "N")]
    oracle_limit: usize,
    /// Write the CSV report here (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Run jobs one at a time even when parallel support is compiled in.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ExplainArgs {
    /// Input OpenQASM 3 file.
    input: PathBuf,
    #[command(flatten)]
    table: TableArgs,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            exit(code);
        }
    };
    let code = match cli.cmd {
        Cmd::Optimize(a) => cmd_optimize(&a),
        Cmd::Bench(a) => cmd_bench(&a),
        Cmd::Explain(a) => cmd_explain(&a),
    };
    exit(code);
}

fn read_circuit(path: &Path) -> Result<Circuit, i32> {
    let src = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(EXIT_PARSE);
        }
    };
    match qasm::parse(&src) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {} at {}", w.message, w.span);
            }
            Ok(out.circuit)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(EXIT_PARSE)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), i32> {
    std::fs::write(path, text).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_USAGE
    })
}

/// Emit OpenQASM, appending an annotation naming the registers whose
/// recorded outcomes are negated relative to the source program.
fn emit_with_flips(c: &Circuit, flips: &[usize]) -> String {
    let mut text = qasm::emit(c);
    if !flips.is_empty() {
        let list: Vec<String> = flips.iter().map(|r| format!("c[{r}]")).collect();
        text.push_str(&format!("// output-flips: {}\n", list.join(" ")));
    }
    text
}

fn pipeline_error_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::CycleCapExceeded { .. }
        | PipelineError::Pass(PassError::SweepCapExceeded { .. }) => EXIT_CAP,
        PipelineError::UnknownPass(_)
        | PipelineError::EmptyPassSpec
        | PipelineError::Generator(_) => EXIT_USAGE,
        PipelineError::Oracle(_) => EXIT_VERIFY,
    }
}

fn cmd_optimize(a: &OptimizeArgs) -> i32 {
    let input = match read_circuit(&a.input) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let passes = match parse_pass_spec(&a.passes) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let opts = PipelineOptions {
        passes,
        max_amplitudes: a.table.max_amplitudes,
        max_hybrid_states: a.table.max_hybrid_states,
        verify: a.verify,
        oracle_qubit_limit: a.oracle_limit,
        ..PipelineOptions::default()
    };
    let (out, rec) = match run_pipeline(&input, &opts) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return pipeline_error_code(&e);
        }
    };

    let text = emit_with_flips(&out, &rec.output_flips);
    if let Some(path) = &a.output {
        if let Err(code) = write_text(path, &text) {
            return code;
        }
    } else {
        print!("{text}");
    }
    if let Some(path) = &a.stats {
        let json = stats_json(&a.input.display().to_string(), &rec.pass_spec, &[rec.clone()]);
        if let Err(code) = write_text(path, &json) {
            return code;
        }
    }

    eprintln!(
        "optimize: {} -> {} gate(s), quantum-controlled {} -> {} ({:.1}% reduction)",
        rec.metrics_before.gates,
        rec.metrics_after.gates,
        rec.metrics_before.qcontrolled_gates,
        rec.metrics_after.qcontrolled_gates,
        rec.reduction_cgates_pct,
    );
    match &rec.verify {
        Some(VerifyOutcome::Passed { tv_distance }) => {
            eprintln!("verification passed (tv distance {tv_distance:.3e})");
            EXIT_OK
        }
        Some(VerifyOutcome::Failed { tv_distance, witness }) => {
            eprintln!("verification FAILED: tv distance {tv_distance:.3e}");
            if let Some(w) = witness {
                eprintln!("  witness: {w}");
            }
            EXIT_VERIFY
        }
        Some(VerifyOutcome::Skipped { reason }) => {
            eprintln!("verification skipped: {reason}");
            EXIT_OK
        }
        None => EXIT_OK,
    }
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, String> {
    let t = s.trim();
    if let Some((lo, hi)) = t.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| format!("bad size range `{t}`"))?;
        let hi: usize = hi
            .trim()
            .trim_start_matches('=')
            .trim()
            .parse()
            .map_err(|_| format!("bad size range `{t}`"))?;
        if hi < lo {
            return Err(format!("empty size range `{t}`"));
        }
        Ok((lo..=hi).collect())
    } else {
        t.split(',')
            .map(|x| x.trim().parse().map_err(|_| format!("bad size `{x}`")))
            .collect()
    }
}

fn cmd_bench(a: &BenchArgs) -> i32 {
    let families: Vec<String> =
        a.families.split(',').map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect();
    for f in &families {
        if !FAMILIES.contains(&f.as_str()) {
            eprintln!("error: unknown family `{f}` (known: {})", FAMILIES.join(", "));
            return EXIT_USAGE;
        }
    }
    if families.is_empty() {
        eprintln!("error: no families selected");
        return EXIT_USAGE;
    }
    let sizes = match parse_sizes(&a.sizes) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let passes = match parse_pass_spec(&a.passes) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let opts = PipelineOptions {
        passes,
        max_amplitudes: a.table.max_amplitudes,
        max_hybrid_states: a.table.max_hybrid_states,
        verify: a.verify,
        oracle_qubit_limit: a.oracle_limit,
        ..PipelineOptions::default()
    };

    let jobs: Vec<(String, usize)> = families
        .iter()
        .flat_map(|f| sizes.iter().map(move |s| (f.clone(), *s)))
        .collect();
    let results = if a.sequential {
        run_batch_sequential(&jobs, &opts)
    } else {
        run_batch(&jobs, &opts)
    };

    let mut rows: Vec<BenchRow> = Vec::new();
    for ((family, size), res) in jobs.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(PipelineError::Generator(e)) => {
                eprintln!("skipping {family} size {size}: {e}");
            }
            Err(e) => {
                eprintln!("error: {family} size {size}: {e}");
                return pipeline_error_code(&e);
            }
        }
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    if let Some(path) = &a.report {
        if let Err(code) = write_text(path, &csv) {
            return code;
        }
        eprintln!("bench: {} row(s) written to {}", rows.len(), path.display());
    } else {
        print!("{csv}");
    }
    EXIT_OK
}

fn cmd_explain(a: &ExplainArgs) -> i32 {
    let input = match read_circuit(&a.input) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let cfg = CpConfig {
        max_amplitudes: a.table.max_amplitudes,
        max_hybrid_states: a.table.max_hybrid_states,
        ..CpConfig::default()
    };
    print!("{}", constprop::explain(&input, &cfg));
    EXIT_OK
}
