//! Experiment harness: runtime sweeps, closed-loop runs and one-shot
//! reconstruction, with CSV and SVG output.

pub mod bench;
pub mod report;

use std::io::Write;

use nalgebra::DVector;
use ssrcbf::eigenspace::eigen_decompose;
use ssrcbf::filter::{simulate, Method, Trajectory};
use ssrcbf::plant::{project_data, stack, IoWindow};
use ssrcbf::scenario::Scenario;
use ssrcbf::ssr::{brute_force_ssr, preprocess, ssr_combine, ssr_majority, threshold_vote, PlausibleSet};
use ssrcbf::{Error, Result};

/// Exit status for a run that hit an infeasible filter or data outside the
/// attack model.
pub const EXIT_ATTACK_MODEL: i32 = 2;

/// Errors caused by the data or the attack model rather than by bad input.
pub fn is_attack_model_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Infeasible
            | Error::NoPlausibleState
            | Error::EmptySubspace(_)
            | Error::AssumptionViolated { .. }
            | Error::IndexBelowBudget { .. }
            | Error::Budget { .. }
            | Error::EmptySet
    )
}

/// Runs each method over the scenario for `horizon` steps.
pub fn run_closedloop(sc: &Scenario, methods: &[Method], horizon: usize) -> Result<Vec<Trajectory>> {
    methods.iter().map(|m| simulate(sc, m, horizon)).collect()
}

/// Reconstruction methods of the `ssr` subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsrMethod {
    Brute,
    Decomp,
    Majority,
}

impl std::str::FromStr for SsrMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" => Ok(SsrMethod::Brute),
            "decomp-ssr" => Ok(SsrMethod::Decomp),
            "majority" => Ok(SsrMethod::Majority),
            other => Err(Error::InvalidParameter(format!("unknown reconstruction `{other}`"))),
        }
    }
}

/// Window-start plausible states for recorded data.
pub fn reconstruct(sc: &Scenario, win: &IoWindow, method: SsrMethod) -> Result<PlausibleSet> {
    let stacked = stack(&sc.sys, win)?;
    if method == SsrMethod::Brute {
        return brute_force_ssr(&stacked, sc.s);
    }
    let eig = eigen_decompose(sc.sys.a())?;
    let data = project_data(&stacked, &eig)?;
    let idx = preprocess(&data);
    match method {
        SsrMethod::Majority => Ok(ssr_majority(&idx, sc.s)?.set),
        _ => ssr_combine(&threshold_vote(&idx, sc.q, sc.s)?, sc.s),
    }
}

/// Plausible states as CSV, one row per state.
pub fn write_states<W: Write>(mut out: W, states: &[DVector<f64>]) -> Result<()> {
    writeln!(out, "# {}", report::SSR_SCHEMA)?;
    let n = states.first().map_or(0, |x| x.len());
    let header: Vec<String> = std::iter::once("index".to_string())
        .chain((0..n).map(|k| format!("x{k}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (i, x) in states.iter().enumerate() {
        let vals: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{i},{}", vals.join(","))?;
    }
    Ok(())
}
