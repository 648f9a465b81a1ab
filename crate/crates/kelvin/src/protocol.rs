//! Schedules of bath frequencies and cycle times, and their execution on
//! every momentum block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::NoiseSpec;
use crate::cm::{evolution_blocks, rest_cm, AffineCm, CorrelationMatrix};
use crate::error::{domain, KelvinError, Result};
use crate::fock::{
    block_energy, exact_cycle_map, fidelity, finite_environment_map, noisy_cycle_map, steady_state, trace_distance,
    DensityBlock, Superoperator,
};
use crate::linalg::{c, kron, trace_norm_hermitian, CMat};
use crate::model::{build_block, dispersion_at, ground_state_energy, CouplingScheme, ModeBlock, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum FreqRule {
    /// Δ_r = ε_m + δ(r − ½) across the band.
    Grid,
    /// Δ_r = ε_{k_r} for the listed momenta.
    ModeEnergies { ks: Vec<usize> },
    /// Δ_r = ε at k_r = (N/2)·r/(R + 1).
    MomentumSpaced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleDescriptor {
    Single { delta: f64, t: f64 },
    Randomized { delta: f64, l: usize, t_mean: f64 },
    Multifreq { r: usize, l: usize, t_mean: f64, freq_rule: FreqRule },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subcycle {
    pub delta: f64,
    pub t: f64,
}

/// Ordered subcycles making up one global cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub subcycles: Vec<Subcycle>,
    pub seed: u64,
    pub descriptor: ScheduleDescriptor,
}

impl Schedule {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.subcycles.iter().map(|s| (s.delta, s.t)).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for s in &self.subcycles {
            if !out.contains(&s.delta) {
                out.push(s.delta);
            }
        }
        out
    }
}

/// Uniform time on [0, 2·t_mean]; one counter-based stream per subcycle.
fn sample_time(seed: u64, index: u64, t_mean: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    2.0 * t_mean * rng.gen::<f64>()
}

pub fn frequencies(rule: &FreqRule, r: usize, params: &ModelParams) -> Result<Vec<f64>> {
    match rule {
        FreqRule::Grid => Ok(crate::analytic::band_grid(params, r)),
        FreqRule::ModeEnergies { ks } => {
            if ks.len() != r {
                return domain(format!("{} momenta given for R = {r}", ks.len()));
            }
            if let Some(k) = ks.iter().find(|&&k| k > params.n / 2) {
                return domain(format!("momentum {k} outside [0, N/2]"));
            }
            Ok(ks.iter().map(|&k| dispersion_at(params, k as f64)).collect())
        }
        FreqRule::MomentumSpaced => Ok((1..=r)
            .map(|i| dispersion_at(params, 0.5 * params.n as f64 * i as f64 / (r + 1) as f64))
            .collect()),
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must be finite and > 0, got {x}"))
    }
}

pub fn make_schedule(descriptor: &ScheduleDescriptor, params: &ModelParams, seed: u64) -> Result<Schedule> {
    params.validate()?;
    let subcycles = match descriptor {
        ScheduleDescriptor::Single { delta, t } => {
            positive("delta", *delta)?;
            if !(t.is_finite() && *t >= 0.0) {
                return domain(format!("cycle time must be >= 0, got {t}"));
            }
            vec![Subcycle { delta: *delta, t: *t }]
        }
        ScheduleDescriptor::Randomized { delta, l, t_mean } => {
            positive("delta", *delta)?;
            positive("t_mean", *t_mean)?;
            if *l < 1 {
                return domain("L must be >= 1");
            }
            (0..*l)
                .map(|m| Subcycle { delta: *delta, t: sample_time(seed, m as u64, *t_mean) })
                .collect()
        }
        ScheduleDescriptor::Multifreq { r, l, t_mean, freq_rule } => {
            positive("t_mean", *t_mean)?;
            if *r < 1 || *l < 1 {
                return domain("R and L must be >= 1");
            }
            let deltas = frequencies(freq_rule, *r, params)?;
            let mut out = Vec::with_capacity(r * l);
            for m in 0..*l {
                for (i, &d) in deltas.iter().enumerate() {
                    let idx = (m * r + i) as u64;
                    out.push(Subcycle { delta: d, t: sample_time(seed, idx, *t_mean) });
                }
            }
            out
        }
    };
    Ok(Schedule { subcycles, seed, descriptor: descriptor.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Fock,
    Cm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Bogoliubov vacuum, the ground state.
    Vacuum,
    MostExcited,
    MaximallyMixed,
    Custom(Vec<DensityBlock>),
}

/// Per-block state in whichever representation the engine uses.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeState {
    Fock(DensityBlock),
    Cm(CorrelationMatrix),
}

impl ModeState {
    pub fn density(&self, k: usize, edge: bool) -> DensityBlock {
        match self {
            ModeState::Fock(r) => r.clone(),
            ModeState::Cm(g) => g.to_density(k, edge),
        }
    }
}

fn block_dim(params: &ModelParams, k: usize) -> usize {
    if params.is_edge(k) {
        2
    } else {
        4
    }
}

pub fn initial_state(kind: &InitialState, params: &ModelParams) -> Result<Vec<DensityBlock>> {
    let ks: Vec<usize> = params.block_momenta().collect();
    match kind {
        InitialState::Vacuum => Ok(ks.iter().map(|&k| DensityBlock::vacuum(k, block_dim(params, k))).collect()),
        InitialState::MostExcited => Ok(ks.iter().map(|&k| DensityBlock::most_excited(k, block_dim(params, k))).collect()),
        InitialState::MaximallyMixed => {
            Ok(ks.iter().map(|&k| DensityBlock::maximally_mixed(k, block_dim(params, k))).collect())
        }
        InitialState::Custom(blocks) => {
            if blocks.len() != ks.len() {
                return Err(KelvinError::Validation(format!("expected {} blocks, got {}", ks.len(), blocks.len())));
            }
            for (b, &k) in blocks.iter().zip(&ks) {
                b.validate()?;
                if b.k != k || b.dim() != block_dim(params, k) {
                    return Err(KelvinError::Validation(format!("block for k = {k} has wrong label or size")));
                }
            }
            Ok(blocks.clone())
        }
    }
}

fn initial_cm(kind: &InitialState) -> Result<CorrelationMatrix> {
    match kind {
        InitialState::Vacuum => Ok(CorrelationMatrix::vacuum()),
        InitialState::MostExcited => Ok(CorrelationMatrix::most_excited()),
        InitialState::MaximallyMixed => Ok(CorrelationMatrix::maximally_mixed()),
        InitialState::Custom(_) => Err(KelvinError::UnsupportedCombination(
            "the correlation-matrix engine only propagates Gaussian product states".into(),
        )),
    }
}

/// Everything needed to evolve one momentum block through a schedule.
#[derive(Debug, Clone)]
pub struct Protocol<'a> {
    pub params: &'a ModelParams,
    pub scheme: &'a CouplingScheme,
    pub schedule: &'a Schedule,
    pub noise: NoiseSpec,
    pub engine: Engine,
    /// Switch the system Hamiltonian off during cycles.
    pub dsp: bool,
}

/// Map of one global cycle on a single block.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeMap {
    Fock(Superoperator),
    Cm(AffineCm),
}

impl ModeMap {
    pub fn apply(&self, s: &ModeState) -> ModeState {
        match (self, s) {
            (ModeMap::Fock(m), ModeState::Fock(r)) => ModeState::Fock(DensityBlock { matrix: m.apply(&r.matrix), k: r.k }),
            (ModeMap::Cm(m), ModeState::Cm(g)) => ModeState::Cm(CorrelationMatrix { matrix: m.apply(&g.matrix) }),
            _ => unreachable!("state and map come from the same engine"),
        }
    }
}

impl Protocol<'_> {
    pub fn block(&self, delta: f64, k: usize) -> ModeBlock {
        let env = match &self.noise {
            NoiseSpec::FiniteEnv(e) => Some(e),
            _ => None,
        };
        let b = build_block(self.params, self.scheme, delta, env, k);
        if self.dsp {
            b.without_system_hamiltonian()
        } else {
            b
        }
    }

    /// Energy bookkeeping always uses the full system Hamiltonian.
    pub fn energy_block(&self, k: usize) -> ModeBlock {
        build_block(self.params, self.scheme, 1.0, None, k)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.scheme.validate()?;
        self.noise.validate()?;
        if self.schedule.subcycles.is_empty() {
            return domain("schedule has no subcycles");
        }
        Ok(())
    }

    pub fn mode_map(&self, k: usize) -> Result<ModeMap> {
        match self.engine {
            Engine::Fock => {
                let mut total = Superoperator::identity(block_dim(self.params, k));
                for s in &self.schedule.subcycles {
                    let b = self.block(s.delta, k);
                    let m = match &self.noise {
                        NoiseSpec::None => exact_cycle_map(&b, s.t, 0.0)?,
                        NoiseSpec::Depolarizing { kappa } => noisy_cycle_map(&b, s.t, *kappa)?,
                        NoiseSpec::FiniteEnv(e) => finite_environment_map(&b, s.t, e.p_e)?,
                    };
                    total = m.after(&total);
                }
                Ok(ModeMap::Fock(total))
            }
            Engine::Cm => {
                let mut total = AffineCm::identity();
                for s in &self.schedule.subcycles {
                    let b = self.block(s.delta, k);
                    let blocks = evolution_blocks(&b, s.t);
                    let (rest, damping) = match &self.noise {
                        NoiseSpec::None => (rest_cm(2, 0.0), 1.0),
                        NoiseSpec::Depolarizing { kappa } => (rest_cm(2, 0.0), (-2.0 * kappa * s.t).exp()),
                        NoiseSpec::FiniteEnv(e) => (rest_cm(4, e.p_e), 1.0),
                    };
                    total = total.then(&AffineCm::from_cycle(&blocks, &rest, damping));
                }
                Ok(ModeMap::Cm(total))
            }
        }
    }

    fn start(&self, kind: &InitialState) -> Result<Vec<ModeState>> {
        match self.engine {
            Engine::Fock => Ok(initial_state(kind, self.params)?.into_iter().map(ModeState::Fock).collect()),
            Engine::Cm => {
                let g = initial_cm(kind)?;
                Ok(self.params.block_momenta().map(|_| ModeState::Cm(g.clone())).collect())
            }
        }
    }

    fn mode_metrics(&self, k: usize, s: &ModeState) -> (f64, f64) {
        match s {
            ModeState::Fock(r) => (block_energy(r, self.energy_block(k).epsilon).0, fidelity(r)),
            ModeState::Cm(g) => {
                let b = self.energy_block(k);
                (g.energy(&b), g.fidelity(b.is_edge()))
            }
        }
    }
}

/// Runs `f` over the block momenta, in parallel when the feature is on.
pub fn map_modes<T, F>(params: &ModelParams, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let ks: Vec<usize> = params.block_momenta().collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ks.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ks.into_iter().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    pub energy: f64,
    pub relative: f64,
    pub fidelity: f64,
}

/// Totals over blocks k = 0..=N/2; block energies already carry the edge weights.
pub fn global_metrics(states: &[DensityBlock], params: &ModelParams) -> Result<GlobalMetrics> {
    let ks: Vec<usize> = params.block_momenta().collect();
    if states.len() != ks.len() || states.iter().zip(&ks).any(|(s, &k)| s.k != k) {
        return Err(KelvinError::Validation("state set must hold every block k = 0..=N/2 in order".into()));
    }
    let mut e = 0.0;
    let mut f = 1.0;
    for s in states {
        e += block_energy(s, dispersion_at(params, s.k as f64)).0;
        f *= fidelity(s);
    }
    Ok(totals(e, f, params))
}

fn totals(energy: f64, fidelity: f64, params: &ModelParams) -> GlobalMetrics {
    let gs = ground_state_energy(params);
    GlobalMetrics { energy, relative: crate::analytic::relative_energy(energy, gs), fidelity }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub cycle: usize,
    pub mode_energies: Vec<f64>,
    pub energy: f64,
    pub relative: f64,
    pub fidelity: f64,
    /// Largest per-block trace-norm change since the previous snapshot.
    pub step_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub converged_at: Option<usize>,
}

pub const STEADY_STEP_TOL: f64 = 1e-10;

/// Applies `n_global_cycles` global cycles, recording a snapshot every `stride` cycles and at the end.
pub fn run_trajectory(proto: &Protocol, init: &InitialState, n_global_cycles: usize, stride: usize) -> Result<Trajectory> {
    proto.validate()?;
    if stride == 0 {
        return domain("snapshot stride must be >= 1");
    }
    let start = proto.start(init)?;
    let maps: Vec<ModeMap> = map_modes(proto.params, |k| proto.mode_map(k)).into_iter().collect::<Result<_>>()?;
    let mut record: Vec<usize> = (0..=n_global_cycles).step_by(stride).collect();
    if *record.last().unwrap() != n_global_cycles {
        record.push(n_global_cycles);
    }

    // evolve each block independently, keeping the states at the recorded cycles
    let per_mode: Vec<Vec<(f64, f64, DensityBlock)>> = map_modes(proto.params, |k| {
        let edge = proto.params.is_edge(k);
        let mut s = start[k].clone();
        let mut out = Vec::with_capacity(record.len());
        let mut n = 0;
        for &target in &record {
            while n < target {
                s = maps[k].apply(&s);
                n += 1;
            }
            let (e, f) = proto.mode_metrics(k, &s);
            out.push((e, f, s.density(k, edge)));
        }
        out
    });

    let mut snapshots = Vec::with_capacity(record.len());
    let mut converged_at = None;
    let mut quiet = 0;
    for (j, &cycle) in record.iter().enumerate() {
        let mode_energies: Vec<f64> = per_mode.iter().map(|m| m[j].0).collect();
        let fid: f64 = per_mode.iter().map(|m| m[j].1).product();
        let step_change = if j == 0 {
            f64::INFINITY
        } else {
            per_mode
                .iter()
                .map(|m| trace_distance(&m[j].2.matrix, &m[j - 1].2.matrix))
                .fold(0.0, f64::max)
        };
        if step_change < STEADY_STEP_TOL {
            quiet += 1;
            if quiet >= 3 && converged_at.is_none() {
                converged_at = Some(cycle);
            }
        } else {
            quiet = 0;
        }
        let g = totals(mode_energies.iter().sum(), fid, proto.params);
        snapshots.push(Snapshot {
            cycle,
            mode_energies,
            energy: g.energy,
            relative: g.relative,
            fidelity: g.fidelity,
            step_change,
        });
    }
    Ok(Trajectory { snapshots, converged_at })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSteady {
    pub k: usize,
    pub epsilon: f64,
    pub energy: f64,
    pub relative: Option<f64>,
    pub fidelity: f64,
    /// −log|λ₂| per elementary cycle.
    pub alpha: f64,
    pub lambda2_multiplicity: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyReport {
    pub modes: Vec<ModeSteady>,
    pub energy: f64,
    pub relative: f64,
    pub fidelity: f64,
    pub engine: Engine,
}

/// Fixed point of one block's global-cycle map.
pub fn mode_steady(proto: &Protocol, k: usize) -> Result<ModeSteady> {
    let per_cycle = proto.schedule.subcycles.len() as f64;
    let b = proto.energy_block(k);
    let eps = b.epsilon;
    let edge = b.is_edge();
    match proto.mode_map(k)? {
        ModeMap::Fock(m) => {
            let ss = steady_state(&m, k)?;
            let (e, rel) = block_energy(&ss.rho, eps);
            Ok(ModeSteady {
                k,
                epsilon: eps,
                energy: e,
                relative: rel,
                fidelity: fidelity(&ss.rho),
                alpha: ss.alpha / per_cycle,
                lambda2_multiplicity: ss.lambda2_multiplicity,
                residual: ss.residual,
            })
        }
        ModeMap::Cm(m) => {
            let g = if edge { m.edge_fixed_point()? } else { m.fixed_point()? };
            let e = g.energy(&b);
            let eff = if edge { 0.5 * eps } else { eps };
            Ok(ModeSteady {
                k,
                epsilon: eps,
                energy: e,
                relative: (eff > 0.0).then(|| (e + eff) / eff),
                fidelity: g.fidelity(edge),
                alpha: if edge { m.edge_alpha() } else { m.alpha() } / per_cycle,
                lambda2_multiplicity: 1,
                residual: m.residual(&g),
            })
        }
    }
}

pub fn steady_report(proto: &Protocol) -> Result<SteadyReport> {
    proto.validate()?;
    let modes: Vec<ModeSteady> = map_modes(proto.params, |k| mode_steady(proto, k)).into_iter().collect::<Result<_>>()?;
    let g = totals(modes.iter().map(|m| m.energy).sum(), modes.iter().map(|m| m.fidelity).product(), proto.params);
    Ok(SteadyReport { modes, energy: g.energy, relative: g.relative, fidelity: g.fidelity, engine: proto.engine })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha: f64,
    /// RMS deviation of log-distances from the fitted line.
    pub residual: f64,
}

pub const FIT_RESIDUAL_MAX: f64 = 0.05;

/// Least-squares slope of log d against cycle index.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().filter(|p| p.1 > 0.0).map(|&(n, d)| (n, d.ln())).collect();
    if pts.len() < 3 {
        return Err(KelvinError::FitQuality { residual: f64::INFINITY });
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let residual = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / m).sqrt();
    let rising = series.windows(2).any(|w| w[1].1 > w[0].1 * (1.0 + 1e-9));
    if rising || residual > FIT_RESIDUAL_MAX || !(slope < 0.0) {
        return Err(KelvinError::FitQuality { residual });
    }
    Ok(DecayFit { alpha: -slope, residual })
}

/// Where a cooling rate is read from.
pub enum RateSource<'a> {
    Map(&'a ModeMap),
    Series(&'a [(f64, f64)]),
}

/// −log|λ₂| of a map, or the fitted slope of a distance series.
pub fn measure_cooling_rate(src: RateSource) -> Result<f64> {
    match src {
        RateSource::Map(ModeMap::Fock(m)) => Ok(steady_state(m, 0)?.alpha),
        RateSource::Map(ModeMap::Cm(m)) => Ok(m.alpha()),
        RateSource::Series(s) => Ok(fit_decay_rate(s)?.alpha),
    }
}

/// Trace distances ‖Sⁿρ₀ − ρ_ss‖₁ for n = 0..=n_max.
pub fn distance_series(map: &Superoperator, rho0: &CMat, steady: &CMat, n_max: usize) -> Vec<(f64, f64)> {
    let mut r = rho0.clone();
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        out.push((n as f64, trace_distance(&r, steady)));
        r = map.apply(&r);
    }
    out
}

/// Global trace distance is bounded by the sum of per-block distances.
pub fn kaleidoscope_check(per_mode: &[f64], global: f64) -> bool {
    global <= per_mode.iter().sum::<f64>() + 1e-9
}

/// ‖⊗ρ_k − ⊗σ_k‖₁ by brute force; only for a handful of blocks.
pub fn product_trace_distance(a: &[CMat], b: &[CMat]) -> f64 {
    let prod = |ms: &[CMat]| ms.iter().skip(1).fold(ms[0].clone(), |acc, m| kron(&acc, m));
    let d = prod(a) - prod(b);
    trace_norm_hermitian(&((&d + d.adjoint()) * c(0.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dispersion, CouplingScheme};
    use std::f64::consts::FRAC_PI_3;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(n, FRAC_PI_3).unwrap()
    }

    #[test]
    fn schedules() {
        let p = params(20);
        let s = make_schedule(&ScheduleDescriptor::Single { delta: 1.0, t: 10.0 }, &p, 0).unwrap();
        assert_eq!(s.subcycles, vec![Subcycle { delta: 1.0, t: 10.0 }]);
        let d = ScheduleDescriptor::Randomized { delta: 1.0, l: 100, t_mean: 20.0 };
        assert_eq!(make_schedule(&d, &p, 7).unwrap(), make_schedule(&d, &p, 7).unwrap());
        assert_ne!(make_schedule(&d, &p, 7).unwrap(), make_schedule(&d, &p, 8).unwrap());
        let d = ScheduleDescriptor::Randomized { delta: 1.0, l: 100_000, t_mean: 3.0 };
        let s = make_schedule(&d, &p, 1).unwrap();
        let mean = s.subcycles.iter().map(|x| x.t).sum::<f64>() / 1e5;
        assert!((mean / 3.0 - 1.0).abs() < 0.01);
        assert!(s.subcycles.iter().all(|x| x.t >= 0.0 && x.t <= 6.0));
        let bad = ScheduleDescriptor::Multifreq { r: 0, l: 1, t_mean: 1.0, freq_rule: FreqRule::Grid };
        assert!(make_schedule(&bad, &p, 0).is_err());
        let bad = ScheduleDescriptor::Randomized { delta: 1.0, l: 0, t_mean: 1.0 };
        assert!(make_schedule(&bad, &p, 0).is_err());
    }

    #[test]
    fn multifreq_round_robin() {
        let p = params(200);
        let d = ScheduleDescriptor::Multifreq {
            r: 3,
            l: 4,
            t_mean: 50.0,
            freq_rule: FreqRule::ModeEnergies { ks: vec![25, 50, 75] },
        };
        let s = make_schedule(&d, &p, 3).unwrap();
        assert_eq!(s.subcycles.len(), 12);
        for (i, sc) in s.subcycles.iter().enumerate() {
            let k = [25, 50, 75][i % 3];
            assert!((sc.delta - dispersion(&p, k)).abs() < 1e-15);
        }
        let f = frequencies(&FreqRule::MomentumSpaced, 1, &p).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_metrics() {
        let p = params(12);
        let gs = global_metrics(&initial_state(&InitialState::Vacuum, &p).unwrap(), &p).unwrap();
        assert!((gs.energy - ground_state_energy(&p)).abs() < 1e-12 && gs.relative < 1e-12 && (gs.fidelity - 1.0).abs() < 1e-15);
        let ex = global_metrics(&initial_state(&InitialState::MostExcited, &p).unwrap(), &p).unwrap();
        assert!((ex.relative - 2.0).abs() < 1e-12);
        let mm = global_metrics(&initial_state(&InitialState::MaximallyMixed, &p).unwrap(), &p).unwrap();
        assert!((mm.relative - 1.0).abs() < 1e-12);
        // 5 generic blocks at 1/4 and 2 edge blocks at 1/2
        assert!((mm.fidelity - 0.25f64.powi(5) * 0.25).abs() < 1e-15);
        let mut short = initial_state(&InitialState::Vacuum, &p).unwrap();
        short.pop();
        assert!(global_metrics(&short, &p).is_err());
        let bad = InitialState::Custom(vec![DensityBlock::vacuum(0, 4)]);
        assert!(initial_state(&bad, &p).is_err());
    }

    fn proto<'a>(p: &'a ModelParams, s: &'a CouplingScheme, sch: &'a Schedule, noise: NoiseSpec, engine: Engine) -> Protocol<'a> {
        Protocol { params: p, scheme: s, schedule: sch, noise, engine, dsp: false }
    }

    #[test]
    fn engines_agree_on_trajectories() {
        let p = ModelParams::new(10, 0.9).unwrap();
        let s = CouplingScheme::local(1.0, 0.6, 0.2);
        let sch = make_schedule(&ScheduleDescriptor::Randomized { delta: 1.1, l: 3, t_mean: 2.0 }, &p, 5).unwrap();
        for noise in [NoiseSpec::None, NoiseSpec::Depolarizing { kappa: 0.01 }] {
            let a = run_trajectory(&proto(&p, &s, &sch, noise, Engine::Fock), &InitialState::MostExcited, 100, 10).unwrap();
            let b = run_trajectory(&proto(&p, &s, &sch, noise, Engine::Cm), &InitialState::MostExcited, 100, 10).unwrap();
            for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
                for (u, v) in x.mode_energies.iter().zip(&y.mode_energies) {
                    assert!((u - v).abs() < 1e-9);
                }
                assert!((x.fidelity - y.fidelity).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trajectory_edges() {
        let p = params(8);
        let s = CouplingScheme::local(1.0, 1.0, 0.3);
        let sch = make_schedule(&ScheduleDescriptor::Single { delta: 1.0, t: 2.0 }, &p, 0).unwrap();
        let pr = proto(&p, &s, &sch, NoiseSpec::None, Engine::Fock);
        let tr = run_trajectory(&pr, &InitialState::MaximallyMixed, 0, 10).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert!((tr.snapshots[0].relative - 1.0).abs() < 1e-12);
        let tr = run_trajectory(&pr, &InitialState::MostExcited, 25, 10).unwrap();
        let cyc: Vec<usize> = tr.snapshots.iter().map(|s| s.cycle).collect();
        assert_eq!(cyc, vec![0, 10, 20, 25]);
        let custom = InitialState::Custom(initial_state(&InitialState::MostExcited, &p).unwrap());
        let pc = proto(&p, &s, &sch, NoiseSpec::None, Engine::Cm);
        assert!(matches!(run_trajectory(&pc, &custom, 5, 1), Err(KelvinError::UnsupportedCombination(_))));
        let again = run_trajectory(&pr, &InitialState::MostExcited, 25, 10).unwrap();
        assert_eq!(tr, again);
    }

    #[test]
    fn resonant_mode_cools_monotonically() {
        let p = params(40);
        let s = CouplingScheme::local(1.0, 1.0, 0.05);
        let sch = make_schedule(&ScheduleDescriptor::Single { delta: 1.0, t: 5.0 }, &p, 0).unwrap();
        let pr = proto(&p, &s, &sch, NoiseSpec::None, Engine::Cm);
        let tr = run_trajectory(&pr, &InitialState::MostExcited, 400, 1).unwrap();
        let e: Vec<f64> = tr.snapshots.iter().map(|s| s.mode_energies[10]).collect();
        for w in e[10..].windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn steady_report_engines_agree() {
        let p = params(16);
        let s = CouplingScheme::local(1.0, 1.0, 0.1);
        let sch = make_schedule(&ScheduleDescriptor::Randomized { delta: 1.0, l: 4, t_mean: 3.0 }, &p, 2).unwrap();
        let a = steady_report(&proto(&p, &s, &sch, NoiseSpec::Depolarizing { kappa: 1e-3 }, Engine::Fock)).unwrap();
        let b = steady_report(&proto(&p, &s, &sch, NoiseSpec::Depolarizing { kappa: 1e-3 }, Engine::Cm)).unwrap();
        assert!((a.relative - b.relative).abs() < 1e-9);
        for (x, y) in a.modes.iter().zip(&b.modes) {
            assert!((x.energy - y.energy).abs() < 1e-9);
            assert!((x.alpha - y.alpha).abs() < 1e-8 * x.alpha.max(1.0));
        }
        // g = 0 noiseless: identity-like map has no unique fixed point
        let s0 = CouplingScheme::local(1.0, 1.0, 0.0);
        let err = steady_report(&proto(&p, &s0, &sch, NoiseSpec::None, Engine::Fock)).unwrap_err();
        assert!(matches!(err, KelvinError::NonUniqueFixedPoint { .. }));
    }

    #[test]
    fn fitted_rate_and_kaleidoscope() {
        let p = params(6);
        let s = CouplingScheme::local(1.0, 0.5, 0.15);
        let sch = make_schedule(&ScheduleDescriptor::Single { delta: 1.0, t: 3.0 }, &p, 0).unwrap();
        let pr = proto(&p, &s, &sch, NoiseSpec::None, Engine::Fock);
        let k = 1;
        let ModeMap::Fock(m) = pr.mode_map(k).unwrap() else { unreachable!() };
        let ss = steady_state(&m, k).unwrap();
        let rho0 = DensityBlock::most_excited(k, 4).matrix;
        let series = distance_series(&m, &rho0, &ss.rho.matrix, 400);
        let tail: Vec<(f64, f64)> = series.iter().copied().filter(|&(n, d)| n >= 40.0 && d > 1e-11).collect();
        let fit = fit_decay_rate(&tail).unwrap();
        assert!((fit.alpha / ss.alpha - 1.0).abs() < 0.01, "{} vs {}", fit.alpha, ss.alpha);
        assert!(fit_decay_rate(&[(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)]).is_err());

        // whole chain of four blocks at a few cycles
        let states0 = initial_state(&InitialState::MostExcited, &p).unwrap();
        let maps: Vec<Superoperator> = p
            .block_momenta()
            .map(|k| match pr.mode_map(k).unwrap() {
                ModeMap::Fock(m) => m,
                _ => unreachable!(),
            })
            .collect();
        let steady: Vec<CMat> = maps.iter().enumerate().map(|(k, m)| steady_state(m, k).unwrap().rho.matrix).collect();
        let mut cur: Vec<CMat> = states0.iter().map(|s| s.matrix.clone()).collect();
        for _ in 0..5 {
            let per: Vec<f64> = cur.iter().zip(&steady).map(|(a, b)| trace_distance(a, b)).collect();
            assert!(kaleidoscope_check(&per, product_trace_distance(&cur, &steady)));
            cur = cur.iter().zip(&maps).map(|(r, m)| m.apply(r)).collect();
        }
        // one block away from steady: equality
        let mut one = steady.clone();
        one[1] = cur[1].clone();
        let g = product_trace_distance(&one, &steady);
        assert!((g - trace_distance(&cur[1], &steady[1])).abs() < 1e-12);
    }
}
