//! The `verify` driver: run every abstraction check on an (MDP,
//! abstraction) pair and compare against pinned verdicts for the built-in
//! instances.

use crate::check::{
    self, builders, CheckConfig, CheckError, CheckReport,
};
use crate::mdp::{Abstraction, TabularMdp};
use std::fmt::Write as _;

/// What `verify` should analyze.
#[derive(Debug, Clone)]
pub enum VerifyTarget {
    /// The non-Markov counterexample whose inverse models still match.
    Fig3,
    /// The Markov-but-not-KI variant.
    Fig6,
    /// A random Block MDP instance, which satisfies every condition.
    Block(u64),
    /// An externally supplied pair; no pinned verdicts.
    Pair(Box<TabularMdp>, Box<Abstraction>),
}

impl VerifyTarget {
    /// Parse `fig3`, `fig6`, or `block:<seed>`.
    pub fn parse_builtin(name: &str) -> Option<Self> {
        match name {
            "fig3" => Some(Self::Fig3),
            "fig6" => Some(Self::Fig6),
            _ => name
                .strip_prefix("block:")
                .and_then(|seed| seed.parse().ok().map(Self::Block)),
        }
    }
}

/// Expected verdicts for a built-in instance, in report order:
/// markov, inverse, density ratio, strong density ratio, backward KI,
/// forward KI.
fn expectations(target: &VerifyTarget) -> Option<[bool; 6]> {
    match target {
        VerifyTarget::Fig3 => Some([false, true, false, false, false, false]),
        VerifyTarget::Fig6 => Some([true, true, true, false, true, false]),
        VerifyTarget::Block(_) => Some([true, true, true, true, true, true]),
        VerifyTarget::Pair(..) => None,
    }
}

/// One check's outcome within a verify run.
#[derive(Debug, Clone)]
pub struct VerifyLine {
    pub name: &'static str,
    pub report: CheckReport,
    /// Pinned verdict for built-ins; absent for file inputs.
    pub expected: Option<bool>,
}

impl VerifyLine {
    pub fn matches(&self) -> bool {
        self.expected.map_or(true, |e| e == self.report.holds)
    }

    pub fn render(&self) -> String {
        let mut line = String::new();
        write!(
            line,
            "{:<15} holds={:<5} max_violation={:.3e} tolerance={:.1e}",
            self.name, self.report.holds, self.report.max_violation, self.report.tolerance
        )
        .unwrap();
        if let Some(w) = &self.report.witness {
            write!(line, " witness[{}]", w).unwrap();
        }
        if self.report.skipped_histories > 0 {
            write!(line, " skipped_histories={}", self.report.skipped_histories).unwrap();
        }
        if let Some(expected) = self.expected {
            let status = if expected == self.report.holds { "ok" } else { "MISMATCH" };
            write!(line, " expected={} [{}]", expected, status).unwrap();
        }
        line
    }
}

/// The full verify result.
#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub lines: Vec<VerifyLine>,
    /// True when every check matched its pinned verdict (always true for
    /// file inputs).
    pub matches_expectations: bool,
}

impl VerifyOutcome {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            writeln!(out, "{}", line.render()).unwrap();
        }
        out
    }
}

/// Run all six checks with the standard configuration (20 random lifted
/// policies plus uniform, history length 3, six timesteps, tolerance 1e-9).
pub fn run_verify(target: &VerifyTarget) -> Result<VerifyOutcome, CheckError> {
    let (mdp, abstraction) = match target {
        VerifyTarget::Fig3 => builders::build_fig3_mdp(),
        VerifyTarget::Fig6 => builders::build_fig6_mdp(),
        VerifyTarget::Block(seed) => builders::build_block_mdp(*seed, 3, 2),
        VerifyTarget::Pair(mdp, abstraction) => ((**mdp).clone(), (**abstraction).clone()),
    };
    let config = CheckConfig::standard(&mdp, &abstraction, 0);
    run_verify_with(target, &mdp, &abstraction, &config)
}

/// [`run_verify`] against an explicit check configuration.
pub fn run_verify_with(
    target: &VerifyTarget,
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    config: &CheckConfig,
) -> Result<VerifyOutcome, CheckError> {
    let expected = expectations(target);
    let markov = check::check_markov_abstraction(mdp, abstraction, config)?;
    let inverse = check::check_inverse_condition(mdp, abstraction, config)?;
    let ratio = check::check_density_ratio_condition(mdp, abstraction, config)?;
    let strong = check::check_strong_density_ratio(mdp, abstraction, config)?;
    let (backward, forward) = check::check_kinematic_inseparability(mdp, abstraction, config)?;
    let reports = [
        ("markov", markov),
        ("inverse", inverse),
        ("density_ratio", ratio),
        ("strong_ratio", strong),
        ("backward_ki", backward),
        ("forward_ki", forward),
    ];
    let lines: Vec<VerifyLine> = reports
        .into_iter()
        .enumerate()
        .map(|(i, (name, report))| VerifyLine {
            name,
            report,
            expected: expected.map(|e| e[i]),
        })
        .collect();
    let matches_expectations = lines.iter().all(VerifyLine::matches);
    Ok(VerifyOutcome {
        lines,
        matches_expectations,
    })
}
