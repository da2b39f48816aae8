//! Constant propagation over the union table.
//!
//! The pass replays the circuit through a fresh [`UnionTable`] each sweep.
//! Before stepping the table over an instruction it asks the table what it
//! already knows and rewrites the instruction in place:
//!
//! - a control or guard whose site has a proven constant value is removed
//!   (always satisfied) or kills the whole instruction (never satisfied);
//! - an instruction whose controls and guards can never hold at once is
//!   deleted;
//! - a quantum control implied by another control or guard on the same
//!   instruction is redundant and removed;
//! - a quantum control whose qubit is perfectly correlated with a register in
//!   its group is replaced by a classical guard on that register;
//! - a diagonal gate that multiplies every reachable branch by one common
//!   factor is deleted and the factor folded into the circuit's global phase.
//!
//! After any rewrite the same instruction is re-examined from the top of that
//! priority list, then the table steps over whatever survived.  Sweeps repeat
//! until one makes no change; a configurable cap turns non-termination into a
//! loud error carrying the partial result.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use crate::circuit::{angle_is_zero, normalize_angle, Circuit, Ctrl, Instruction, Polarity};
use crate::lifting::{bump, make_report, PassError, PassReport};
use crate::table::{Site, UnionTable, PHASE_EPS};

/// A control/guard that always holds was removed from an instruction.
pub const CP_ALWAYS_TRUE_SITE: &str = "cp_always_true_site";
/// An instruction was deleted because one site can never hold.
pub const CP_NEVER_TRUE_SITE: &str = "cp_never_true_site";
/// An instruction was deleted because its sites can never all hold at once.
pub const CP_UNSAT_SITES: &str = "cp_unsat_sites";
/// A quantum control implied by another site was removed.
pub const CP_IMPLIED_CONTROL: &str = "cp_implied_control";
/// A quantum control was replaced by a guard on a correlated register.
pub const CP_CONTROL_TO_GUARD: &str = "cp_control_to_guard";
/// A diagonal gate acting as one common phase factor was deleted.
pub const CP_CONSTANT_PHASE: &str = "cp_constant_phase";

/// Budget and iteration limits for the pass.
#[derive(Clone, Copy, Debug)]
pub struct CpConfig {
    /// Largest basis-state support a group may track before collapsing to ⊤.
    pub max_amplitudes: usize,
    /// Largest number of hybrid entries a group may track before ⊤.
    pub max_hybrid_states: usize,
    /// Upper bound on sweeps before the pass gives up loudly.
    pub max_sweeps: usize,
}

impl Default for CpConfig {
    fn default() -> Self {
        CpConfig {
            max_amplitudes: crate::table::DEFAULT_MAX_AMPLITUDES,
            max_hybrid_states: crate::table::DEFAULT_MAX_HYBRID_STATES,
            max_sweeps: 10_000,
        }
    }
}

/// Which rewrite rules may fire; used to study rules in isolation.
#[derive(Clone, Copy, Debug)]
pub struct RuleToggles {
    /// Remove always-true sites, delete on never-true sites.
    pub const_sites: bool,
    /// Delete instructions with jointly unsatisfiable sites.
    pub unsat: bool,
    /// Remove controls implied by other sites on the same instruction.
    pub implied: bool,
    /// Replace controls by guards on perfectly correlated registers.
    pub correlate: bool,
    /// Delete diagonal gates that act as one constant phase.
    pub constant_phase: bool,
}

impl RuleToggles {
    pub fn all() -> Self {
        RuleToggles {
            const_sites: true,
            unsat: true,
            implied: true,
            correlate: true,
            constant_phase: true,
        }
    }

    pub fn none() -> Self {
        RuleToggles {
            const_sites: false,
            unsat: false,
            implied: false,
            correlate: false,
            constant_phase: false,
        }
    }
}

impl Default for RuleToggles {
    fn default() -> Self {
        RuleToggles::all()
    }
}

enum Outcome {
    Deleted(&'static str),
    Rewritten(&'static str),
    Keep,
}

/// Run constant propagation with every rule enabled.
pub fn run_cp(input: &Circuit, cfg: &CpConfig) -> Result<(Circuit, PassReport), PassError> {
    run_cp_with_rules(input, cfg, RuleToggles::all())
}

/// Run constant propagation with a chosen rule subset.
pub fn run_cp_with_rules(
    input: &Circuit,
    cfg: &CpConfig,
    rules: RuleToggles,
) -> Result<(Circuit, PassReport), PassError> {
    assert!(cfg.max_amplitudes >= 1, "amplitude budget must be positive");
    assert!(cfg.max_hybrid_states >= 1, "hybrid-state budget must be positive");
    let start = Instant::now();
    let mut c = input.clone();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let no_flips = BTreeSet::new();
    let mut sweeps = 0usize;
    loop {
        sweeps += 1;
        if sweeps > cfg.max_sweeps {
            let report =
                make_report("cp", cfg.max_sweeps, counts, input, &c, start, &no_flips);
            return Err(PassError::SweepCapExceeded {
                pass: "cp".into(),
                cap: cfg.max_sweeps,
                report: Box::new(report),
            });
        }
        if !cp_sweep(&mut c, cfg, rules, &mut counts, None) {
            break;
        }
    }
    let report = make_report("cp", sweeps, counts, input, &c, start, &no_flips);
    Ok((c, report))
}

/// One replay of the circuit against a fresh table.  Returns whether anything
/// changed; with `log` set, appends one annotated line per instruction.
fn cp_sweep(
    c: &mut Circuit,
    cfg: &CpConfig,
    rules: RuleToggles,
    counts: &mut BTreeMap<String, usize>,
    mut log: Option<&mut Vec<String>>,
) -> bool {
    let mut table = UnionTable::with_limits(c.n, c.m, cfg.max_amplitudes, cfg.max_hybrid_states);
    let mut changed = false;
    let mut idx = 0;
    let mut seen = 0usize;
    while idx < c.body.len() {
        let rendered =
            log.is_some().then(|| crate::qasm::emit_instruction(&c.body[idx]));
        let mut notes: Vec<String> = Vec::new();
        if log.is_some() {
            notes.extend(describe_facts(&c.body[idx], &table));
        }
        let mut deleted = false;
        loop {
            match try_rules_at(c, idx, &table, rules, &mut notes) {
                Outcome::Deleted(rule) => {
                    bump(counts, rule);
                    changed = true;
                    deleted = true;
                    c.body.remove(idx);
                    break;
                }
                Outcome::Rewritten(rule) => {
                    bump(counts, rule);
                    changed = true;
                }
                Outcome::Keep => break,
            }
        }
        if !deleted {
            let info = table.step(&c.body[idx]);
            if log.is_some() {
                if info.became_top {
                    notes.push("group is now ⊤ (state budget exceeded)".into());
                } else if info.merged {
                    notes.push("groups merged".into());
                }
            }
        }
        if let Some(lines) = log.as_deref_mut() {
            let mut line = format!("  {:>3}: {}", seen, rendered.unwrap());
            if !notes.is_empty() {
                while line.len() < 44 {
                    line.push(' ');
                }
                line.push_str("| ");
                line.push_str(&notes.join("; "));
            }
            lines.push(line);
        }
        if !deleted {
            idx += 1;
        }
        seen += 1;
    }
    changed
}

/// Apply the highest-priority matching rule at `c.body[idx]`, if any.
fn try_rules_at(
    c: &mut Circuit,
    idx: usize,
    table: &UnionTable,
    rules: RuleToggles,
    notes: &mut Vec<String>,
) -> Outcome {
    let Instruction::Apply { gate, targets: _, controls, guards } = c.body[idx].clone() else {
        return Outcome::Keep;
    };

    // Jointly unsatisfiable sites: the instruction can never fire.
    if rules.unsat && !(controls.is_empty() && guards.is_empty()) {
        let req: Vec<(Site, Polarity)> = controls
            .iter()
            .map(|ct| (Site::Qubit(ct.index), ct.pol))
            .chain(guards.iter().map(|g| (Site::Register(g.index), g.pol)))
            .collect();
        if !table.query_satisfiable(&req) {
            notes.push("deleted: controls and guards can never all hold".into());
            return Outcome::Deleted(CP_UNSAT_SITES);
        }
    }

    // Individually constant sites.
    if rules.const_sites {
        for (k, ct) in controls.iter().enumerate() {
            let Some(b) = table.query_qubit(ct.index) else { continue };
            if b == ct.pol.required_bit() {
                notes.push(format!("control q{} is always {b}: removed", ct.index));
                if let Instruction::Apply { controls, .. } = &mut c.body[idx] {
                    controls.remove(k);
                }
                return Outcome::Rewritten(CP_ALWAYS_TRUE_SITE);
            }
            notes.push(format!("deleted: control q{} is always {b}", ct.index));
            return Outcome::Deleted(CP_NEVER_TRUE_SITE);
        }
        for (k, g) in guards.iter().enumerate() {
            let Some(b) = table.query_register(g.index) else { continue };
            if b == g.pol.required_bit() {
                notes.push(format!("guard c{} is always {b}: removed", g.index));
                if let Instruction::Apply { guards, .. } = &mut c.body[idx] {
                    guards.remove(k);
                }
                return Outcome::Rewritten(CP_ALWAYS_TRUE_SITE);
            }
            notes.push(format!("deleted: guard c{} is always {b}", g.index));
            return Outcome::Deleted(CP_NEVER_TRUE_SITE);
        }
    }

    // A control implied by another site on the same instruction is redundant.
    if rules.implied {
        for a in 0..controls.len() {
            for b in 0..controls.len() {
                if a == b {
                    continue;
                }
                let (ca, cb) = (controls[a], controls[b]);
                let fwd = table.query_implication(
                    (Site::Qubit(ca.index), ca.pol.required_bit()),
                    (cb.index, cb.pol.required_bit()),
                );
                if !fwd.holds || fwd.vacuous {
                    continue;
                }
                let rev = table.query_implication(
                    (Site::Qubit(cb.index), cb.pol.required_bit()),
                    (ca.index, ca.pol.required_bit()),
                );
                // On mutual implication keep the lower-indexed qubit.
                let drop = if rev.holds && !rev.vacuous {
                    if ca.index > cb.index {
                        a
                    } else {
                        b
                    }
                } else {
                    b
                };
                let dropped = controls[drop];
                notes.push(format!(
                    "control q{} follows from q{}: removed",
                    dropped.index,
                    controls[if drop == a { b } else { a }].index
                ));
                if let Instruction::Apply { controls, .. } = &mut c.body[idx] {
                    controls.remove(drop);
                }
                return Outcome::Rewritten(CP_IMPLIED_CONTROL);
            }
        }
        for g in &guards {
            for (k, ct) in controls.iter().enumerate() {
                let imp = table.query_implication(
                    (Site::Register(g.index), g.pol.required_bit()),
                    (ct.index, ct.pol.required_bit()),
                );
                if imp.holds && !imp.vacuous {
                    notes.push(format!(
                        "control q{} follows from guard c{}: removed",
                        ct.index, g.index
                    ));
                    if let Instruction::Apply { controls, .. } = &mut c.body[idx] {
                        controls.remove(k);
                    }
                    return Outcome::Rewritten(CP_IMPLIED_CONTROL);
                }
            }
        }
    }

    // A control on a qubit perfectly correlated with a register becomes a
    // guard on that register.
    if rules.correlate {
        for (k, ct) in controls.iter().enumerate() {
            let regs = table.group_of_qubit(ct.index).regs.clone();
            for r in regs {
                let Some((_, b1)) = table.query_correlation(ct.index, r) else { continue };
                // qubit = 1 exactly when register = b1; the control wants the
                // qubit equal to its required bit.
                let want = if ct.pol.required_bit() == 1 { b1 } else { 1 - b1 };
                let pol = Polarity::from_bit(want);
                match guards.iter().find(|g| g.index == r).map(|g| g.pol) {
                    Some(p) if p == pol => {
                        notes.push(format!(
                            "q{} ⇔ c{}: control subsumed by existing guard",
                            ct.index, r
                        ));
                        if let Instruction::Apply { controls, .. } = &mut c.body[idx] {
                            controls.remove(k);
                        }
                        return Outcome::Rewritten(CP_CONTROL_TO_GUARD);
                    }
                    // The opposite guard already reads this register; that
                    // contradiction is the unsatisfiability rule's job.
                    Some(_) => continue,
                    None => {
                        notes.push(format!(
                            "q{} ⇔ c{}: control replaced by guard",
                            ct.index, r
                        ));
                        if let Instruction::Apply { controls, guards, .. } = &mut c.body[idx] {
                            controls.remove(k);
                            guards.push(Ctrl { index: r, pol });
                        }
                        return Outcome::Rewritten(CP_CONTROL_TO_GUARD);
                    }
                }
            }
        }
    }

    // A guard-free diagonal gate whose every reachable branch picks up the
    // same factor only shifts the global phase.
    if rules.constant_phase && guards.is_empty() && gate.is_diagonal() {
        if let Ok(Some(theta)) = table.query_uniform_phase(&c.body[idx]) {
            if angle_is_zero(theta, PHASE_EPS) {
                notes.push("deleted: acts as the identity".into());
            } else {
                c.global_phase = normalize_angle(c.global_phase + theta);
                notes.push(format!("deleted: acts as the constant phase {theta:.6}"));
            }
            return Outcome::Deleted(CP_CONSTANT_PHASE);
        }
    }

    Outcome::Keep
}

fn describe_facts(instr: &Instruction, table: &UnionTable) -> Vec<String> {
    let mut notes = Vec::new();
    if let Instruction::Apply { controls, guards, .. } = instr {
        for ct in controls {
            if let Some(b) = table.query_qubit(ct.index) {
                notes.push(format!("q{}={b}", ct.index));
            }
        }
        for g in guards {
            if let Some(b) = table.query_register(g.index) {
                notes.push(format!("c{}={b}", g.index));
            }
        }
    }
    notes
}

/// Human-readable trace: the circuit listing annotated with the facts the
/// table proves at each instruction and the rewrites they justify.
pub fn explain(input: &Circuit, cfg: &CpConfig) -> String {
    let mut c = input.clone();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "circuit: {} qubit(s), {} register(s); budget: {} amplitudes, {} hybrid states",
        c.n, c.m, cfg.max_amplitudes, cfg.max_hybrid_states
    );
    let mut sweeps = 0usize;
    loop {
        sweeps += 1;
        if sweeps > cfg.max_sweeps {
            let _ = writeln!(out, "gave up: no fixed point within {} sweeps", cfg.max_sweeps);
            break;
        }
        let mut lines = Vec::new();
        let changed = cp_sweep(&mut c, cfg, RuleToggles::all(), &mut counts, Some(&mut lines));
        if changed || sweeps == 1 {
            let _ = writeln!(out, "sweep {sweeps}:");
            for line in lines {
                let _ = writeln!(out, "{line}");
            }
        }
        if !changed {
            if sweeps > 1 {
                let _ = writeln!(out, "sweep {sweeps}: no further rewrites");
            }
            break;
        }
    }
    let total: usize = counts.values().sum();
    let _ = writeln!(
        out,
        "result: {} instruction(s), {} rewrite(s), global phase {:+.6}",
        c.body.len(),
        total,
        c.global_phase
    );
    out
}
