use std::path::Path;

use kelvin::analytic::{chain_lindblad_energies, rate_table, NoiseSpec};
use kelvin::experiments::{run_target, schedule_predictions, Series, TargetId, DEFAULT_SEED};
use kelvin::model::{
    bogoliubov_angle, dispersion, energy_density_limit, ground_state_energy, CouplingScheme, ModelParams,
};
use kelvin::optimize::{
    objective_phase_averaged, objective_theta_specific, optimize, theta_grid, Mode, ParamVector, PHASE_POINTS,
};
use kelvin::protocol::{
    make_schedule, run_trajectory, steady_report, Engine, Protocol, Schedule, ScheduleDescriptor,
};
use kelvin::KelvinError;
use serde_json::json;

use crate::config::{need, ExperimentConfig, ObjectiveKind, DEFAULT_STRIDE};
use crate::output::{header, OutDir};
use crate::svg::line_chart;
use crate::{CliError, VERSION};

type Res = Result<(), CliError>;

pub struct Ctx {
    cfg: ExperimentConfig,
    out: OutDir,
    hash: String,
}

fn series_files(out: &OutDir, s: &Series) -> std::io::Result<()> {
    let mut cols = vec![s.x_label.clone()];
    cols.extend(s.lines.iter().map(|l| l.0.clone()));
    let rows: Vec<Vec<f64>> = s
        .x
        .iter()
        .enumerate()
        .map(|(i, &x)| std::iter::once(x).chain(s.lines.iter().map(|l| l.1[i])).collect())
        .collect();
    out.csv(&format!("{}.csv", s.name), &cols, &rows)?;
    out.write(&format!("{}.svg", s.name), line_chart(&s.name, &s.x_label, &s.y_label, &s.x, &s.lines).as_bytes())
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig, dir: &Path) -> Result<Self, CliError> {
        let hash = cfg.hash();
        Ok(Self { cfg, out: OutDir::create(dir)?, hash })
    }

    fn params(&self) -> &ModelParams {
        &self.cfg.model
    }

    fn engine(&self) -> Engine {
        self.cfg.engine.unwrap_or(Engine::Cm)
    }

    /// Randomized schedules need an explicit seed.
    fn schedule(&self) -> Result<Schedule, KelvinError> {
        let d = need(&self.cfg.schedule, "schedule")?;
        let seed = match d {
            ScheduleDescriptor::Single { .. } => self.cfg.seed.unwrap_or(0),
            _ => *need(&self.cfg.seed, "seed")?,
        };
        make_schedule(d, self.params(), seed)
    }

    fn summary(&self, command: &str, mut body: serde_json::Value) -> std::io::Result<()> {
        body["command"] = json!(command);
        body["version"] = json!(VERSION);
        body["config_hash"] = json!(self.hash);
        body["seed"] = json!(self.cfg.seed);
        self.out.json("summary.json", &body)
    }

    fn protocol<'a>(&'a self, scheme: &'a CouplingScheme, schedule: &'a Schedule, noise: &NoiseSpec, engine: Engine) -> Protocol<'a> {
        Protocol {
            params: self.params(),
            scheme,
            schedule,
            noise: *noise,
            engine,
            dsp: self.cfg.dsp.unwrap_or(false),
        }
    }

    pub fn spectrum(&self) -> Res {
        let p = self.params();
        let rows: Vec<Vec<f64>> = p
            .block_momenta()
            .map(|k| {
                let w = if p.is_edge(k) { 0.5 } else { 1.0 };
                vec![k as f64, dispersion(p, k as i64), bogoliubov_angle(p, k as i64), w]
            })
            .collect();
        self.out.csv("spectrum.csv", &header(&["k", "epsilon_k", "phi_k", "weight"]), &rows)?;
        self.summary(
            "spectrum",
            json!({"E_GS": ground_state_energy(p), "E_GS_limit": -(p.n as f64) * energy_density_limit(p.theta)}),
        )?;
        Ok(())
    }

    pub fn steady(&self) -> Res {
        let scheme = need(&self.cfg.scheme, "scheme")?;
        let noise = need(&self.cfg.noise, "noise")?;
        let sched = self.schedule()?;
        let rep = steady_report(&self.protocol(scheme, &sched, noise, self.engine()))?;
        let pred = match noise {
            NoiseSpec::FiniteEnv(_) => None,
            n if !self.cfg.dsp.unwrap_or(false) => Some(schedule_predictions(self.params(), scheme, &sched, n.kappa())?),
            _ => None,
        };
        let nan = f64::NAN;
        let mut worst: f64 = 0.0;
        let rows: Vec<Vec<f64>> = rep
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let e = m.relative.unwrap_or(nan);
                let (ea, aa) = pred.as_ref().map_or((nan, nan), |p| p[i]);
                if (e - ea).is_finite() {
                    worst = worst.max((e - ea).abs());
                }
                vec![m.k as f64, m.epsilon, m.energy, e, m.alpha, ea, aa, e - ea]
            })
            .collect();
        let cols = ["k", "epsilon_k", "E_k", "e_k", "alpha_k", "e_k_analytic", "alpha_k_analytic", "delta_e_k"];
        self.out.csv("steady.csv", &header(&cols), &rows)?;
        let x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut lines = vec![("exact".to_string(), rows.iter().map(|r| r[3]).collect())];
        if pred.is_some() {
            lines.push(("analytic".to_string(), rows.iter().map(|r| r[5]).collect()));
        }
        self.out.write("steady.svg", line_chart("steady state", "k", "e_k", &x, &lines).as_bytes())?;
        let residual = rep.modes.iter().map(|m| m.residual).fold(0.0, f64::max);
        self.summary(
            "steady",
            json!({
                "E": rep.energy,
                "e": rep.relative,
                "fidelity": rep.fidelity,
                "engine": rep.engine,
                "max_residual": residual,
                "max_abs_delta_e_k": pred.as_ref().map(|_| worst),
            }),
        )?;
        Ok(())
    }

    pub fn trajectory(&self) -> Res {
        let scheme = need(&self.cfg.scheme, "scheme")?;
        let noise = need(&self.cfg.noise, "noise")?;
        let cycles = *need(&self.cfg.cycles, "cycles")?;
        let stride = self.cfg.snapshot_stride.unwrap_or(DEFAULT_STRIDE);
        let init = self.cfg.initial_state()?;
        let sched = self.schedule()?;
        let engine = self.engine();
        let traj = run_trajectory(&self.protocol(scheme, &sched, noise, engine), &init, cycles, stride)?;
        let mut cols = header(&["cycle", "E", "e", "F", "step_change"]);
        if self.cfg.wide {
            cols.extend(self.params().block_momenta().map(|k| format!("E_{k}")));
        }
        let rows: Vec<Vec<f64>> = traj
            .snapshots
            .iter()
            .map(|s| {
                let mut r = vec![s.cycle as f64, s.energy, s.relative, s.fidelity, s.step_change];
                if self.cfg.wide {
                    r.extend(&s.mode_energies);
                }
                r
            })
            .collect();
        self.out.csv("trajectory.csv", &cols, &rows)?;
        let x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let lines = vec![("e".to_string(), rows.iter().map(|r| r[2]).collect())];
        self.out.write("trajectory.svg", line_chart("relative energy", "cycle", "e", &x, &lines).as_bytes())?;
        let mut body = json!({
            "engine": engine,
            "snapshots": traj.snapshots.len(),
            "converged_at": traj.converged_at,
            "final": traj.snapshots.last().map(|s| json!({"cycle": s.cycle, "E": s.energy, "e": s.relative, "F": s.fidelity})),
        });
        if self.cfg.cross_check {
            let other = if engine == Engine::Fock { Engine::Cm } else { Engine::Fock };
            let t2 = run_trajectory(&self.protocol(scheme, &sched, noise, other), &init, cycles, stride)?;
            let gap = traj
                .snapshots
                .iter()
                .zip(&t2.snapshots)
                .flat_map(|(a, b)| a.mode_energies.iter().zip(&b.mode_energies).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            let cc = json!({"engines": [engine, other], "max_abs_delta_E_k": gap, "within_1e-9": gap <= 1e-9});
            self.out.json("crosscheck.json", &cc)?;
            body["cross_check"] = cc;
        }
        self.summary("trajectory", body)?;
        Ok(())
    }

    pub fn rates(&self) -> Res {
        let scheme = need(&self.cfg.scheme, "scheme")?;
        let noise = need(&self.cfg.noise, "noise")?;
        let mode = *need(&self.cfg.rate_mode, "rate_mode")?;
        let p = self.params();
        let sched = self.schedule()?;
        let (deltas, t) = match &sched.descriptor {
            ScheduleDescriptor::Single { t, .. } => (sched.frequencies(), *t),
            ScheduleDescriptor::Randomized { t_mean, .. } | ScheduleDescriptor::Multifreq { t_mean, .. } => {
                (sched.frequencies(), *t_mean)
            }
        };
        if matches!(noise, NoiseSpec::FiniteEnv(_)) {
            return Err(KelvinError::UnsupportedCombination("averaged rates do not model a finite environment".into()).into());
        }
        let table = rate_table(p, scheme, &deltas, t, mode)?;
        let preds = chain_lindblad_energies(p, &table, noise.kappa() * t)?;
        let rows: Vec<Vec<f64>> = table
            .entries
            .iter()
            .zip(&preds)
            .map(|(r, m)| {
                vec![r.k as f64, dispersion(p, r.k as i64), r.gamma_c, r.gamma_h, r.alpha, m.energy, m.relative.unwrap_or(f64::NAN)]
            })
            .collect();
        let cols = ["k", "epsilon_k", "gamma_c", "gamma_h", "alpha_k", "E_k", "e_k"];
        self.out.csv("rates.csv", &header(&cols), &rows)?;
        let total: f64 = preds.iter().map(|m| m.energy).sum();
        let x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let lines = vec![("gamma_c".to_string(), rows.iter().map(|r| r[2]).collect()), ("gamma_h".to_string(), rows.iter().map(|r| r[3]).collect())];
        self.out.write("rates.svg", line_chart("averaged rates", "k", "rate", &x, &lines).as_bytes())?;
        self.summary(
            "rates",
            json!({
                "rate_mode": mode,
                "frequencies": deltas,
                "t": t,
                "gamma0": table.gamma0,
                "E": total,
                "e": kelvin::analytic::relative_energy(total, ground_state_energy(p)),
            }),
        )?;
        Ok(())
    }

    /// Exact steady e for one parameter vector at one θ.
    fn exact_e(&self, pv: &ParamVector, params: &ModelParams, noise: &NoiseSpec, mode: Mode) -> Result<f64, KelvinError> {
        let sched = make_schedule(&ScheduleDescriptor::Single { delta: pv.delta, t: pv.t }, params, 0)?;
        let proto = Protocol {
            params,
            scheme: &pv.scheme,
            schedule: &sched,
            noise: *noise,
            engine: Engine::Cm,
            dsp: mode == Mode::Dsp,
        };
        Ok(steady_report(&proto)?.relative)
    }

    pub fn optimize(&self) -> Res {
        let sec = need(&self.cfg.optimize, "optimize")?;
        let noise = need(&self.cfg.noise, "noise")?;
        let p = *self.params();
        let seed = self.cfg.seed.unwrap_or(DEFAULT_SEED);
        let res = match sec.objective {
            ObjectiveKind::ThetaSpecific => optimize(
                |pv| objective_theta_specific(pv, &p, noise, sec.mode),
                &sec.init,
                sec.budget,
                sec.restarts,
                seed,
            )?,
            ObjectiveKind::PhaseAveraged => {
                let phase = *need(&sec.phase, "optimize.phase")?;
                optimize(|pv| objective_phase_averaged(pv, phase, p.n, noise, sec.mode), &sec.init, sec.budget, sec.restarts, seed)?
            }
        };
        self.out.json("optimum.json", &json!({"result": res, "config_hash": self.hash, "version": VERSION}))?;
        let validation = match sec.objective {
            ObjectiveKind::ThetaSpecific => {
                let exact = self.exact_e(&res.best, &p, noise, sec.mode)?;
                json!({"theta": p.theta, "analytic_e": res.objective, "exact_e": exact})
            }
            ObjectiveKind::PhaseAveraged => {
                let phase = sec.phase.expect("checked above");
                let mut pts = Vec::new();
                for th in theta_grid(phase, PHASE_POINTS) {
                    let q = ModelParams::new(p.n, th)?;
                    let a = objective_theta_specific(&res.best, &q, noise, sec.mode);
                    pts.push(json!({"theta": th, "analytic_e": a, "exact_e": self.exact_e(&res.best, &q, noise, sec.mode)?}));
                }
                json!({"phase": phase, "objective": res.objective, "nodes": pts})
            }
        };
        self.out.json("validation.json", &validation)?;
        let x: Vec<f64> = res.history.iter().map(|h| h.0 as f64).collect();
        let lines = vec![("best".to_string(), res.history.iter().map(|h| h.1).collect())];
        self.out.write("history.svg", line_chart("optimizer history", "evaluation", "objective", &x, &lines).as_bytes())?;
        self.summary("optimize", json!({"objective": res.objective, "evaluations": res.evaluations}))?;
        Ok(())
    }
}

pub fn reproduce(target: TargetId, seed: Option<u64>, dir: &Path) -> Res {
    let out = OutDir::create(dir)?;
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let rep = run_target(target, seed)?;
    for s in &rep.series {
        series_files(&out, s)?;
    }
    out.json(
        "report.json",
        &json!({
            "target": rep.target,
            "seed": rep.seed,
            "version": VERSION,
            "passed": rep.passed(),
            "checks": rep.checks,
            "notes": rep.notes,
        }),
    )?;
    for c in &rep.checks {
        println!("{} {}: observed {} expected {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.observed, c.expected);
    }
    if rep.passed() {
        Ok(())
    } else {
        Err(CliError::Checks(
            rep.checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{}: observed {} expected {}", c.name, c.observed, c.expected))
                .collect(),
        ))
    }
}
