//! Reproduction targets: each runs a fixed configuration and checks the
//! expected values at stated tolerances.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{
    averaged_rates, chain_lindblad_energies, lindblad_steady, rate_table, relative_energy, schedule_rates, NoiseSpec,
    RateMode,
};
use crate::error::{KelvinError, Result};
use crate::model::{coupling_coefficients, dispersion, ground_state_energy, CouplingScheme, ModelParams};
use crate::optimize::{
    objective_phase_averaged, objective_theta_specific, optimize, Mode, OptResult, ParamVector, Phase,
    DEFAULT_RESTARTS, OPT_G,
};
use crate::protocol::{
    make_schedule, run_trajectory, steady_report, Engine, FreqRule, InitialState, Protocol, Schedule,
    ScheduleDescriptor, SteadyReport,
};

pub const DEFAULT_SEED: u64 = 1;
/// Objective evaluations allowed per optimizer start.
pub const OPT_BUDGET: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig8,
    Fig10,
    FigSpecReopt,
    TableOptimalAvg,
    FigScalability,
}

impl TargetId {
    pub const ALL: [TargetId; 10] = [
        TargetId::Fig2,
        TargetId::Fig3,
        TargetId::Fig4,
        TargetId::Fig5,
        TargetId::Fig6,
        TargetId::Fig8,
        TargetId::Fig10,
        TargetId::FigSpecReopt,
        TargetId::TableOptimalAvg,
        TargetId::FigScalability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetId::Fig2 => "fig2",
            TargetId::Fig3 => "fig3",
            TargetId::Fig4 => "fig4",
            TargetId::Fig5 => "fig5",
            TargetId::Fig6 => "fig6",
            TargetId::Fig8 => "fig8",
            TargetId::Fig10 => "fig10",
            TargetId::FigSpecReopt => "fig_spec_reopt",
            TargetId::TableOptimalAvg => "table_optimal_avg",
            TargetId::FigScalability => "fig_scalability",
        }
    }
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetId {
    type Err = KelvinError;

    fn from_str(s: &str) -> Result<Self> {
        TargetId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| KelvinError::Validation(format!("unknown reproduction target '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: String,
    pub pass: bool,
}

impl Check {
    pub fn within_rel(name: impl Into<String>, observed: f64, target: f64, tol: f64) -> Check {
        Check {
            name: name.into(),
            observed,
            expected: format!("{target} ± {}%", tol * 100.0),
            pass: ((observed - target) / target).abs() <= tol,
        }
    }

    pub fn in_range(name: impl Into<String>, observed: f64, lo: f64, hi: f64) -> Check {
        Check { name: name.into(), observed, expected: format!("[{lo}, {hi}]"), pass: observed >= lo && observed <= hi }
    }

    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Check {
        Check { name: name.into(), observed, expected: format!("<= {bound}"), pass: observed <= bound }
    }

    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64) -> Check {
        Check { name: name.into(), observed, expected: format!(">= {bound}"), pass: observed >= bound }
    }

    /// Boolean property; `observed` is 1 when it holds.
    pub fn holds(name: impl Into<String>, ok: bool) -> Check {
        Check { name: name.into(), observed: if ok { 1.0 } else { 0.0 }, expected: "true".into(), pass: ok }
    }
}

/// One plotted quantity against a shared x axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub lines: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub target: TargetId,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub series: Vec<Series>,
}

impl Report {
    fn new(target: TargetId, seed: u64) -> Report {
        Report { target, seed, checks: Vec::new(), notes: Vec::new(), series: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn run_target(id: TargetId, seed: u64) -> Result<Report> {
    match id {
        TargetId::Fig2 => fig2(seed),
        TargetId::Fig3 => fig3(seed),
        TargetId::Fig4 => fig4(seed),
        TargetId::Fig5 => fig5(seed),
        TargetId::Fig6 => fig6(seed),
        TargetId::Fig8 => fig8(seed),
        TargetId::Fig10 => fig10(seed),
        TargetId::FigSpecReopt => fig_spec_reopt(seed),
        TargetId::TableOptimalAvg => table_optimal_avg(seed),
        TargetId::FigScalability => fig_scalability(seed),
    }
}

fn ks(params: &ModelParams) -> Vec<f64> {
    params.block_momenta().map(|k| k as f64).collect()
}

fn exact_steady(params: &ModelParams, scheme: &CouplingScheme, schedule: &Schedule, noise: NoiseSpec) -> Result<SteadyReport> {
    steady_report(&Protocol { params, scheme, schedule, noise, engine: Engine::Cm, dsp: false })
}

/// Per-mode (e_k, α_k) from averaged-Lindblad rates of the realized subcycles,
/// with depolarizing strength κ.
pub fn schedule_predictions(params: &ModelParams, scheme: &CouplingScheme, schedule: &Schedule, kappa: f64) -> Result<Vec<(f64, f64)>> {
    let pairs = schedule.pairs();
    let t_mean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    params
        .block_momenta()
        .map(|k| {
            let eps = dispersion(params, k as i64);
            let (a, b) = coupling_coefficients(scheme, params, k as i64);
            let (gc, gh) = schedule_rates(eps, &pairs, scheme.g, a.norm_sqr(), b.norm_sqr());
            let p = lindblad_steady(gc, gh, eps, kappa * t_mean)?;
            Ok((p.relative.unwrap_or(f64::NAN), gc + gh + 2.0 * kappa * t_mean))
        })
        .collect()
}

fn rel_e(r: &crate::protocol::ModeSteady) -> f64 {
    r.relative.unwrap_or(f64::NAN)
}

/// Baseline local coupling λ₀ = μ₀ = 1.
fn baseline(g: f64) -> CouplingScheme {
    CouplingScheme::local(1.0, 1.0, g)
}

pub fn fig2(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::Fig2, seed);
    let p = ModelParams::new(200, FRAC_PI_3)?;
    let (g, t) = (0.01, 10.0);
    let delta = dispersion(&p, 50);
    let scheme = baseline(g);
    let sched = make_schedule(&ScheduleDescriptor::Single { delta, t }, &p, seed)?;
    let proto = Protocol { params: &p, scheme: &scheme, schedule: &sched, noise: NoiseSpec::None, engine: Engine::Cm, dsp: false };
    let traj = run_trajectory(&proto, &InitialState::MostExcited, 1000, 10)?;
    let snap = |n: usize| traj.snapshots.iter().find(|s| s.cycle == n).expect("stride divides n");
    let gs: Vec<f64> = p.block_momenta().map(|k| -dispersion(&p, k as i64) * weight(&p, k)).collect();
    let rel_k = |s: &crate::protocol::Snapshot| -> Vec<f64> { s.mode_energies.iter().zip(&gs).map(|(e, g0)| (e - g0) / g0.abs()).collect() };
    let e1000 = rel_k(snap(1000));
    let near: f64 = (45..=55).map(|k| e1000[k]).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("max e_k for k in [45, 55] after 1000 cycles", near, 0.05));
    // interior local maxima of e_k in steady state and their detuning phase
    let ss = steady_report(&proto)?;
    let e_ss: Vec<f64> = ss.modes.iter().map(rel_e).collect();
    let peaks: Vec<usize> = (1..e_ss.len() - 1)
        .filter(|&k| e_ss[k] > e_ss[k - 1] && e_ss[k] >= e_ss[k + 1] && e_ss[k] > 0.5)
        .collect();
    let off = |k: usize| {
        let ph = (dispersion(&p, k as i64) - delta) * t / (2.0 * PI);
        (ph - ph.round()).abs() + if ph.round() == 0.0 { 1.0 } else { 0.0 }
    };
    let worst = peaks.iter().map(|&k| off(k)).fold(0.0, f64::max);
    rep.checks.push(Check::at_least("number of heating peaks with e_k > 0.5", peaks.len() as f64, 1.0));
    rep.checks.push(Check::at_most("peak distance from (ε_k−Δ)t = 2πr, r ≠ 0, in units of 2π", worst, 0.05));
    rep.notes.push(format!("heating peaks at k = {peaks:?}"));
    let mut lines = vec![("initial".to_string(), rel_k(snap(0)))];
    for n in [10, 100, 1000] {
        lines.push((format!("n={n}"), rel_k(snap(n))));
    }
    lines.push(("steady".into(), e_ss));
    rep.series.push(Series { name: "relative_energy".into(), x_label: "k".into(), y_label: "e_k".into(), x: ks(&p), lines });
    Ok(rep)
}

fn weight(p: &ModelParams, k: usize) -> f64 {
    if p.is_edge(k) {
        0.5
    } else {
        1.0
    }
}

pub fn fig3(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::Fig3, seed);
    let p = ModelParams::new(200, FRAC_PI_3)?;
    let (g, t) = (1e-4, 20.0);
    let delta = dispersion(&p, 50);
    let scheme = baseline(g);
    let sched = make_schedule(&ScheduleDescriptor::Randomized { delta, l: 100, t_mean: t }, &p, seed)?;
    let ss = exact_steady(&p, &scheme, &sched, NoiseSpec::None)?;
    let pred = schedule_predictions(&p, &scheme, &sched, 0.0)?;
    let exact: Vec<f64> = ss.modes.iter().map(rel_e).collect();
    let worst = exact.iter().zip(&pred).map(|(e, q)| (e / q.0 - 1.0).abs()).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("max_k |e_k/e_k(analytic) − 1|", worst, 0.05));
    let alpha = ss.modes[50].alpha / (g * g);
    rep.checks.push(Check::in_range("exact α_{N/4}/g²", alpha, 500.0, 700.0));
    let (a, b) = coupling_coefficients(&scheme, &p, 50);
    let (gc, gh) = averaged_rates(dispersion(&p, 50), delta, t, g, a.norm_sqr(), b.norm_sqr(), RateMode::Lorentzian);
    let alpha_an = (gc + gh) / (g * g);
    rep.checks.push(Check { expected: "533.8 ± 0.1".into(), pass: (alpha_an - 533.8).abs() <= 0.1, observed: alpha_an, name: "analytic α_{N/4}/g²".into() });
    let ens = rate_table(&p, &scheme, &[delta], t, RateMode::ExactIntegral)?;
    let ens_e: Vec<f64> = chain_lindblad_energies(&p, &ens, 0.0)?.iter().map(|m| m.relative.unwrap_or(f64::NAN)).collect();
    let ens_gap = exact.iter().zip(&ens_e).map(|(e, q)| (e / q - 1.0).abs()).fold(0.0, f64::max);
    rep.notes.push(format!("ensemble-averaged rates give max |e_k/e_k(analytic) − 1| = {ens_gap:.3}; the realized schedule is used for the check"));
    rep.notes.push(format!("total e = {:.5}, min_k e_k = {:.3e}", ss.relative, exact.iter().cloned().fold(f64::INFINITY, f64::min)));
    rep.series.push(Series {
        name: "relative_energy".into(),
        x_label: "k".into(),
        y_label: "e_k".into(),
        x: ks(&p),
        lines: vec![("exact".into(), exact), ("analytic".into(), pred.iter().map(|q| q.0).collect())],
    });
    rep.series.push(Series {
        name: "cooling_rate".into(),
        x_label: "k".into(),
        y_label: "alpha_k/g^2".into(),
        x: ks(&p),
        lines: vec![
            ("exact".into(), ss.modes.iter().map(|m| m.alpha / (g * g)).collect()),
            ("analytic".into(), pred.iter().map(|q| q.1 / (g * g)).collect()),
        ],
    });
    Ok(rep)
}

pub fn fig4(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::Fig4, seed);
    let (n, g, t) = (200, 1e-4, 20.0);
    let thetas: Vec<f64> = (1..50).map(|i| PI * i as f64 / 100.0).collect();
    let mut es = Vec::new();
    let mut alphas = Vec::new();
    for &th in &thetas {
        let p = ModelParams::new(n, th)?;
        let delta = dispersion(&p, (n / 4) as i64);
        let scheme = baseline(g);
        let sched = make_schedule(&ScheduleDescriptor::Randomized { delta, l: 100, t_mean: t }, &p, seed)?;
        let ss = exact_steady(&p, &scheme, &sched, NoiseSpec::None)?;
        es.push(ss.relative);
        alphas.push(ss.modes.iter().map(|m| m.alpha).fold(f64::INFINITY, f64::min) / (g * g));
    }
    let (imax, emax) = es.iter().enumerate().fold((0, f64::MIN), |a, (i, &e)| if e > a.1 { (i, e) } else { a });
    let amin = alphas.iter().cloned().fold(f64::INFINITY, f64::min);
    rep.checks.push(Check::in_range("θ/π of max e", thetas[imax] / PI, 0.25 - 1.0 / 40.0, 0.25 + 1.0 / 40.0));
    rep.checks.push(Check::within_rel("max e", emax, 0.065, 0.3));
    rep.checks.push(Check::within_rel("min over θ of min_k α_k/g²", amin, 1.0, 0.5));
    rep.series.push(Series {
        name: "theta_scan".into(),
        x_label: "theta/pi".into(),
        y_label: "e, alpha/g^2".into(),
        x: thetas.iter().map(|t| t / PI).collect(),
        lines: vec![("e".into(), es), ("alpha_min/g^2".into(), alphas)],
    });
    Ok(rep)
}

/// Exact vs averaged-Lindblad comparison for a multi-frequency schedule.
fn multifreq_run(p: &ModelParams, g: f64, t: f64, kr: &[usize], seed: u64) -> Result<(SteadyReport, Vec<(f64, f64)>, Vec<f64>)> {
    let scheme = baseline(g);
    let desc = ScheduleDescriptor::Multifreq {
        r: kr.len(),
        l: 100,
        t_mean: t,
        freq_rule: FreqRule::ModeEnergies { ks: kr.to_vec() },
    };
    let sched = make_schedule(&desc, p, seed)?;
    let ss = exact_steady(p, &scheme, &sched, NoiseSpec::None)?;
    let pred = schedule_predictions(p, &scheme, &sched, 0.0)?;
    let deltas: Vec<f64> = kr.iter().map(|&k| dispersion(p, k as i64)).collect();
    let lor = rate_table(p, &scheme, &deltas, t, RateMode::Lorentzian)?;
    Ok((ss, pred, lor.entries.iter().map(|e| e.alpha).collect()))
}

pub fn fig5(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::Fig5, seed);
    let p = ModelParams::new(200, FRAC_PI_3)?;
    let g = 1e-4;
    let kr = [25, 50, 75];
    let (ss, pred, lor) = multifreq_run(&p, g, 50.0, &kr, seed)?;
    let e: Vec<f64> = ss.modes.iter().map(rel_e).collect();
    let res = kr.iter().map(|&k| e[k]).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("max e_k at resonant modes", res, 0.01));
    let a: Vec<f64> = ss.modes.iter().map(|m| m.alpha).collect();
    let peaked = kr.iter().all(|&k| (k - 5..=k + 5).all(|j| a[j] <= a[k]));
    rep.checks.push(Check::holds("α_k peaks at each resonant mode (±5 modes)", peaked));
    let dev = ss.modes.iter().zip(&pred).map(|(m, q)| (rel_e(m) / q.0 - 1.0).abs()).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("max_k |e_k/e_k(analytic) − 1|", dev, 0.1));
    rep.series.push(Series {
        name: "modes".into(),
        x_label: "k".into(),
        y_label: "e_k, alpha_k/g^2".into(),
        x: ks(&p),
        lines: vec![
            ("e_exact".into(), e),
            ("e_analytic".into(), pred.iter().map(|q| q.0).collect()),
            ("alpha_exact/g^2".into(), a.iter().map(|x| x / (g * g)).collect()),
            ("alpha_lorentzian/g^2".into(), lor.iter().map(|x| x / (g * g)).collect()),
        ],
    });
    Ok(rep)
}

pub fn fig6(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::Fig6, seed);
    let p = ModelParams::new(200, FRAC_PI_3)?;
    let g = 1e-4;
    let kr: Vec<usize> = (1..=9).map(|i| i * 10).collect();
    let mut errs = Vec::new();
    for t in [50.0, 200.0] {
        let (ss, pred, lor) = multifreq_run(&p, g, t, &kr, seed)?;
        let e: Vec<f64> = ss.modes.iter().map(rel_e).collect();
        let a: Vec<f64> = ss.modes.iter().map(|m| m.alpha).collect();
        let mut rel: Vec<f64> = a.iter().zip(&lor).map(|(x, y)| (x / y - 1.0).abs()).collect();
        rel.sort_by(f64::total_cmp);
        errs.push(rel[rel.len() / 2]);
        if t == 50.0 {
            let frac = e.iter().filter(|&&x| x < 0.02).count() as f64 / e.len() as f64;
            rep.checks.push(Check::at_least("fraction of modes with e_k < 0.02 (t = 50)", frac, 0.8));
        }
        rep.series.push(Series {
            name: format!("modes_t{t}"),
            x_label: "k".into(),
            y_label: "e_k, alpha_k/g^2".into(),
            x: ks(&p),
            lines: vec![
                ("e_exact".into(), e),
                ("e_analytic".into(), pred.iter().map(|q| q.0).collect()),
                ("alpha_exact/g^2".into(), a.iter().map(|x| x / (g * g)).collect()),
                ("alpha_lorentzian/g^2".into(), lor.iter().map(|x| x / (g * g)).collect()),
            ],
        });
    }
    rep.checks.push(Check::holds(
        format!("median α mismatch vs Lorentzian rates shrinks from t = 50 ({:.3}) to t = 200 ({:.3})", errs[0], errs[1]),
        errs[1] < errs[0],
    ));
    Ok(rep)
}

pub fn fig8(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::Fig8, seed);
    let p = ModelParams::new(1000, FRAC_PI_3)?;
    let (g, t) = (1e-3, 50.0);
    let scheme = baseline(g);
    let egs = ground_state_energy(&p);
    let rs = [1usize, 10, 50, 250];
    let mut by_mode = Vec::new();
    for mode in [RateMode::Lorentzian, RateMode::ExactIntegral] {
        let mut es = Vec::new();
        for &r in &rs {
            let deltas = crate::protocol::frequencies(&FreqRule::MomentumSpaced, r, &p)?;
            let table = rate_table(&p, &scheme, &deltas, t, mode)?;
            let tot: f64 = chain_lindblad_energies(&p, &table, 0.0)?.iter().map(|m| m.energy).sum();
            es.push(relative_energy(tot, egs));
        }
        by_mode.push(es);
    }
    let e = &by_mode[0];
    rep.checks.push(Check::within_rel("e(R=1)", e[0], 0.025, 0.3));
    rep.checks.push(Check::within_rel("e(R=250)", e[3], 0.006, 0.3));
    rep.checks.push(Check::holds("e(R) non-increasing over R ∈ {1, 10, 50, 250}", e.windows(2).all(|w| w[1] <= w[0])));
    rep.notes.push(format!("Lorentzian rates: e = {:?}", e));
    rep.notes.push(format!("exact-integral rates: e = {:?}", by_mode[1]));
    rep.series.push(Series {
        name: "frequencies".into(),
        x_label: "R".into(),
        y_label: "e".into(),
        x: rs.iter().map(|&r| r as f64).collect(),
        lines: vec![("lorentzian".into(), by_mode[0].clone()), ("exact_integral".into(), by_mode[1].clone())],
    });
    Ok(rep)
}

pub const FIG10_RATIOS: [f64; 5] = [0.0, 0.03, 0.1, 0.3, 1.0];
pub const FIG10_EXPECTED: [f64; 4] = [0.052, 0.292, 0.479, 0.673];

pub fn fig10(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::Fig10, seed);
    let p = ModelParams::new(200, FRAC_PI_3)?;
    let (g, t) = (1e-4, 20.0);
    let delta = dispersion(&p, 50);
    let scheme = baseline(g);
    let sched = make_schedule(&ScheduleDescriptor::Randomized { delta, l: 100, t_mean: t }, &p, seed)?;
    let mut es = Vec::new();
    let mut lines = Vec::new();
    for &r in &FIG10_RATIOS {
        let ss = exact_steady(&p, &scheme, &sched, NoiseSpec::Depolarizing { kappa: r * g * g })?;
        es.push(ss.relative);
        lines.push((format!("kappa/g^2={r}"), ss.modes.iter().map(|m| m.energy).collect::<Vec<f64>>()));
    }
    rep.checks.push(Check::within_rel("e(κ = 0)", es[0], FIG10_EXPECTED[0], 0.15));
    rep.checks.push(Check::holds("e strictly increasing in κ", es.windows(2).all(|w| w[1] > w[0])));
    // five ratios for four values: drop either the largest or the smallest nonzero ratio
    let readings: [(&str, [usize; 4]); 2] = [("[0, 0.03, 0.1, 0.3]", [0, 1, 2, 3]), ("[0, 0.1, 0.3, 1]", [0, 2, 3, 4])];
    let mut best = (f64::INFINITY, "");
    for (label, idx) in readings {
        let worst = idx.iter().zip(FIG10_EXPECTED).map(|(&i, x)| ((es[i] - x) / x).abs()).fold(0.0, f64::max);
        rep.notes.push(format!("reading κ/g² = {label}: worst relative deviation {worst:.3}"));
        if worst < best.0 {
            best = (worst, label);
        }
    }
    rep.checks.push(Check::at_most(format!("quadruple {FIG10_EXPECTED:?}, best reading {}", best.1), best.0, 0.15));
    rep.notes.push(format!("open question: five κ/g² ratios are listed for four e-values; e over all ratios = {es:?}"));
    rep.series.push(Series { name: "mode_energies".into(), x_label: "k".into(), y_label: "E_k".into(), x: ks(&p), lines });
    Ok(rep)
}

pub const REOPT_RATIOS: [f64; 4] = [0.01, 0.03, 0.1, 0.3];
pub const REOPT_EXPECTED: [f64; 4] = [0.025, 0.066, 0.187, 0.413];

/// Noiseless θ-specific optimum used as the starting point for re-optimization.
fn local_start() -> ParamVector {
    ParamVector { scheme: CouplingScheme::local(1.0, 0.0, OPT_G), delta: 1.0, t: 3.0 }
}

pub fn fig_spec_reopt(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::FigSpecReopt, seed);
    let p = ModelParams::new(200, FRAC_PI_3)?;
    let g = OPT_G;
    let clean = optimize(|pv| objective_theta_specific(pv, &p, &NoiseSpec::None, Mode::Cooling), &local_start(), OPT_BUDGET, DEFAULT_RESTARTS, seed)?;
    let mut es = Vec::new();
    for (&r, &target) in REOPT_RATIOS.iter().zip(&REOPT_EXPECTED) {
        let noise = NoiseSpec::Depolarizing { kappa: r * g * g };
        let obj = |pv: &ParamVector| objective_theta_specific(pv, &p, &noise, Mode::Cooling);
        let res = optimize(obj, &clean.best, OPT_BUDGET, DEFAULT_RESTARTS, seed)?;
        let stale = obj(&clean.best);
        rep.checks.push(Check::at_most(format!("e at κ/g² = {r}"), res.objective, 1.2 * target));
        rep.checks.push(Check::holds(format!("re-optimized e ≤ noiseless-parameter e at κ/g² = {r}"), res.objective <= stale + 1e-15));
        let sched = make_schedule(&ScheduleDescriptor::Single { delta: res.best.delta, t: res.best.t }, &p, seed)?;
        let exact = exact_steady(&p, &res.best.scheme, &sched, noise)?;
        rep.notes.push(format!(
            "κ/g² = {r}: analytic e = {:.4}, exact e = {:.4} at λ₀ = {:.3}, μ₀ = {:.3}, Δ = {:.3}, t = {:.3}, g = {:.4}",
            res.objective,
            exact.relative,
            res.best.scheme.lambda(0),
            res.best.scheme.mu(0),
            res.best.delta,
            res.best.t,
            res.best.scheme.g
        ));
        es.push(res.objective);
    }
    rep.series.push(Series {
        name: "reoptimized".into(),
        x_label: "kappa/g^2".into(),
        y_label: "e".into(),
        x: REOPT_RATIOS.to_vec(),
        lines: vec![("optimized".into(), es), ("reference".into(), REOPT_EXPECTED.to_vec())],
    });
    Ok(rep)
}

/// Tabulated phase-averaged optimum at N = 20, couplings as printed.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub nn: f64,
    pub phase: Phase,
    pub pv: ParamVector,
}

fn row(nn: f64, phase: Phase, delta: f64, t: f64, lambda: &[(i32, f64)], mu: &[(i32, f64)]) -> TableRow {
    let scheme = CouplingScheme { nn, lambda: lambda.iter().copied().collect(), mu: mu.iter().copied().collect(), g: OPT_G };
    TableRow { nn, phase, pv: ParamVector { scheme, delta, t } }
}

/// Couplings attached to b_{n−j} instead of b_{n+j}; equivalent to flipping every μ_j.
pub fn mirrored(pv: &ParamVector) -> ParamVector {
    let mut out = pv.clone();
    out.scheme.mu.values_mut().for_each(|m| *m = -*m);
    out
}

pub fn table_rows() -> Vec<TableRow> {
    vec![
        row(0.0, Phase::Low, 0.925, 3.05, &[(0, 1.0)], &[(0, 1.0)]),
        row(0.0, Phase::High, 0.744, 3.33, &[(0, 1.0)], &[(0, 0.0)]),
        row(0.5, Phase::Low, 0.688, 3.67, &[(0, 1.0), (1, 1.0)], &[(0, 0.53), (1, -0.53)]),
        row(0.5, Phase::High, 0.793, 3.12, &[(0, 1.0), (1, 0.34)], &[(0, 0.03), (1, 0.14)]),
        row(1.0, Phase::Low, 0.693, 3.70, &[(0, 1.0), (1, 0.97), (-1, 0.01)], &[(0, 0.47), (1, -0.51), (-1, 0.05)]),
        row(1.0, Phase::High, 0.700, 3.71, &[(0, 1.0), (1, 0.27), (-1, 0.27)], &[(0, 0.0), (1, 0.15), (-1, -0.15)]),
    ]
}

/// Generic start for a coupling range: λ₀ = 1, μ₀ = ½, small neighbours.
pub fn generic_start(nn: f64) -> Result<ParamVector> {
    let js = crate::model::range_of(nn)?;
    let lambda = js.iter().map(|&j| (j, if j == 0 { 1.0 } else { 0.1 })).collect();
    let mu = js.iter().map(|&j| (j, if j == 0 { 0.5 } else { 0.1 })).collect();
    Ok(ParamVector { scheme: CouplingScheme { nn, lambda, mu, g: OPT_G }, delta: 0.8, t: 3.0 })
}

pub fn optimize_phase(nn: f64, phase: Phase, n: usize, seed: u64) -> Result<OptResult> {
    let obj = |pv: &ParamVector| objective_phase_averaged(pv, phase, n, &NoiseSpec::None, Mode::Cooling);
    optimize(obj, &generic_start(nn)?, OPT_BUDGET, DEFAULT_RESTARTS, seed)
}

fn phase_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Low => "θ ≤ π/4",
        Phase::High => "θ ≥ π/4",
    }
}

pub fn table_optimal_avg(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::TableOptimalAvg, seed);
    let n = 20;
    let mut x = Vec::new();
    let (mut tab, mut opt) = (Vec::new(), Vec::new());
    for (i, r) in table_rows().iter().enumerate() {
        let j_printed = objective_phase_averaged(&r.pv, r.phase, n, &NoiseSpec::None, Mode::Cooling);
        let j_mirror = objective_phase_averaged(&mirrored(&r.pv), r.phase, n, &NoiseSpec::None, Mode::Cooling);
        // the stricter of the two index readings is the reference
        let j_tab = j_printed.min(j_mirror);
        let res = optimize_phase(r.nn, r.phase, n, seed)?;
        rep.checks.push(Check::at_most(
            format!("nn = {}, {}: J(opt)/J(table)", r.nn, phase_name(r.phase)),
            res.objective / j_tab,
            1.05,
        ));
        rep.notes.push(format!(
            "nn = {}, {}: J(table) = {j_printed:.4e} with b_(n+j), {j_mirror:.4e} with b_(n−j); J(opt) = {:.4e}",
            r.nn,
            phase_name(r.phase),
            res.objective
        ));
        x.push(i as f64);
        tab.push(j_tab);
        opt.push(res.objective);
    }
    rep.series.push(Series {
        name: "phase_objective".into(),
        x_label: "row".into(),
        y_label: "J".into(),
        x,
        lines: vec![("table".into(), tab), ("optimized".into(), opt)],
    });
    Ok(rep)
}

pub fn fig_scalability(seed: u64) -> Result<Report> {
    let mut rep = Report::new(TargetId::FigScalability, seed);
    // no nn = 2 row is tabulated, so optimize it here at N = 20
    let low = optimize_phase(2.0, Phase::Low, 20, seed)?.best;
    let high = optimize_phase(2.0, Phase::High, 20, seed)?.best;
    let thetas: Vec<f64> = (0..=50).map(|i| PI / 2.0 * i as f64 / 50.0).filter(|t| (t / PI - 0.25).abs() > 0.03 + 1e-12).collect();
    let e_at = |n: usize, th: f64| -> Result<f64> {
        let p = ModelParams::new(n, th)?;
        let pv = if th < FRAC_PI_4 { &low } else { &high };
        Ok(objective_theta_specific(pv, &p, &NoiseSpec::None, Mode::Cooling))
    };
    let (mut e20, mut e200) = (Vec::new(), Vec::new());
    for &th in &thetas {
        e20.push(e_at(20, th)?);
        e200.push(e_at(200, th)?);
    }
    let worst = e20.iter().zip(&e200).map(|(a, b)| (a / b).max(b / a)).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("max over θ ∉ [0.22π, 0.28π] of e(N=20)/e(N=200) ratio (either way)", worst, 2.0));
    rep.series.push(Series {
        name: "size_scan".into(),
        x_label: "theta/pi".into(),
        y_label: "e".into(),
        x: thetas.iter().map(|t| t / PI).collect(),
        lines: vec![("N=20".into(), e20), ("N=200".into(), e200)],
    });
    Ok(rep)
}
