//! Runtime scaling of subset enumeration against eigenspace decomposition.

use std::hint::black_box;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use ssrcbf::cbf::{upper_bound_m, CbfGains};
use ssrcbf::eigenspace::{binomial, eigen_decompose};
use ssrcbf::plant::{observability_matrices, stack, StackedData, SubspaceProjector};
use ssrcbf::scenario::{Scenario, ScenarioParams};
use ssrcbf::ssr::{brute_force_ssr, preprocess, ssr_combine, threshold_vote};
use ssrcbf::Result;

pub const METHODS: [&str; 3] = ["brute", "decomp-ssr", "upper-bound"];

/// Shared settings of both sweeps.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub s: usize,
    pub q: usize,
    pub runs: usize,
    pub seed: u64,
    /// Timed repetitions per run; the fastest counts.
    pub repeats: usize,
    /// Attacked sensors observe every eigenvalue and split into vote-passing
    /// groups, maximising the candidates per subspace.
    pub worst_case: bool,
}

impl BenchConfig {
    pub fn new(s: usize, q: usize, runs: usize, seed: u64) -> Self {
        BenchConfig {
            s,
            q,
            runs,
            seed,
            repeats: 3,
            worst_case: true,
        }
    }
}

/// One CSV row: a sweep point and a method.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    /// Value of the swept parameter (`p` or `r`).
    pub point: usize,
    pub method: &'static str,
    pub mean_s: f64,
    pub std_s: f64,
    pub runs: usize,
    /// Subsets (brute), scanned combinations (decomp-ssr) or candidates
    /// (upper-bound), averaged over runs.
    pub work: f64,
    /// Worst-case combination count `floor((q+1)/(q+1-s))^r`.
    pub bound: Option<u128>,
}

/// Pre-built inputs of one timed run; building the projector is offline work.
struct Prepared {
    stacked: StackedData,
    projector: Arc<SubspaceProjector>,
    gains: CbfGains,
    s: usize,
    q: usize,
}

fn prepare(sc: &Scenario) -> Result<Prepared> {
    let t = sc.window;
    let (win, _) = sc.record_window(t);
    let stacked = stack(&sc.sys, &win)?;
    let eig = eigen_decompose(sc.sys.a())?;
    let projector = Arc::new(SubspaceProjector::new(&observability_matrices(&sc.sys, t), &eig)?);
    let gains = CbfGains::new(&sc.sys, &sc.safety, sc.gamma, t)?;
    Ok(Prepared {
        stacked,
        projector,
        gains,
        s: sc.s,
        q: sc.q,
    })
}

fn fastest<R>(repeats: usize, mut f: impl FnMut() -> Result<R>) -> Result<(f64, R)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let out = black_box(f()?);
        best = best.min(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    Ok((best, last.expect("at least one repetition")))
}

/// Seconds and work count of each method on one prepared run.
fn time_methods(prep: &Prepared, repeats: usize) -> Result<[(f64, f64); 3]> {
    let (s, q) = (prep.s, prep.q);
    let (brute_t, _) = fastest(repeats, || brute_force_ssr(&prep.stacked, s))?;
    let brute_work = binomial(prep.stacked.p(), s) as f64;
    let (combine_t, combos) = fastest(repeats, || {
        let data = prep.projector.project(&prep.stacked)?;
        let idx = preprocess(&data);
        let votes = threshold_vote(&idx, q, s)?;
        ssr_combine(&votes, s)?;
        Ok(votes.combination_count())
    })?;
    let (upper_t, cands) = fastest(repeats, || {
        let data = prep.projector.project(&prep.stacked)?;
        let idx = preprocess(&data);
        let votes = threshold_vote(&idx, q, s)?;
        upper_bound_m(&votes, &prep.gains)?;
        Ok(votes.cluster_counts().iter().sum::<usize>())
    })?;
    Ok([
        (brute_t, brute_work),
        (combine_t, combos as f64),
        (upper_t, cands as f64),
    ])
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Seed of run `run` at sweep position `k`.
pub fn run_seed(base: u64, k: usize, run: usize) -> u64 {
    base.wrapping_add((k as u64) << 32).wrapping_add(run as u64)
}

fn sweep(
    cfg: &BenchConfig,
    points: &[usize],
    params: impl Fn(usize, u64) -> ScenarioParams + Sync,
    bound: impl Fn(usize) -> Option<u128>,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for (k, &point) in points.iter().enumerate() {
        let scenarios: Vec<Scenario> = (0..cfg.runs)
            .into_par_iter()
            .map(|run| Scenario::random(&params(point, run_seed(cfg.seed, k, run))))
            .collect::<Result<_>>()?;
        let prepared: Vec<Prepared> = scenarios.par_iter().map(prepare).collect::<Result<_>>()?;
        let mut times: [Vec<f64>; 3] = Default::default();
        let mut work = [0.0; 3];
        for prep in &prepared {
            for (m, (t, w)) in time_methods(prep, cfg.repeats)?.into_iter().enumerate() {
                times[m].push(t);
                work[m] += w / cfg.runs as f64;
            }
        }
        for (m, method) in METHODS.iter().enumerate() {
            let (mean_s, std_s) = mean_std(&times[m]);
            rows.push(BenchRow {
                point,
                method,
                mean_s,
                std_s,
                runs: cfg.runs,
                work: work[m],
                bound: bound(point),
            });
        }
    }
    Ok(rows)
}

/// Sweeps the sensor count `p` at fixed `n`, `s`, `q`.
pub fn bench_sensors(cfg: &BenchConfig, n: usize, ps: &[usize]) -> Result<Vec<BenchRow>> {
    sweep(
        cfg,
        ps,
        |p, seed| ScenarioParams::new(n, p, cfg.q, cfg.s, seed).worst_case(cfg.worst_case),
        |_| None,
    )
}

/// `floor((q+1)/(q+1-s))^r`.
pub fn combination_bound(q: usize, s: usize, r: usize) -> u128 {
    let per = ((q + 1) / (q + 1 - s)) as u128;
    per.saturating_pow(r as u32)
}

/// Sweeps the number of eigenspaces `r` (one per state) at fixed `p`, `s`, `q`.
pub fn bench_subspaces(cfg: &BenchConfig, p: usize, rs: &[usize]) -> Result<Vec<BenchRow>> {
    sweep(
        cfg,
        rs,
        |r, seed| ScenarioParams::new(r, p, cfg.q, cfg.s, seed).worst_case(cfg.worst_case),
        |r| Some(combination_bound(cfg.q, cfg.s, r)),
    )
}

/// Least-squares slope of `ln(mean_s)` against the sweep point.
pub fn log_slope(rows: &[BenchRow], method: &str) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.point as f64, r.mean_s.max(1e-12).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}
