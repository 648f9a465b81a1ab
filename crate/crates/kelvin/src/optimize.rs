//! Coupling, frequency and cycle-time optimization on the analytic steady state.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{chain_dsp_energies, chain_energies, relative_energy, NoiseSpec};
use crate::error::{KelvinError, Result};
use crate::model::{ground_state_energy, CouplingScheme, ModelParams};

pub const DELTA_BOUNDS: (f64, f64) = (1e-3, 3.0);
pub const TIME_BOUNDS: (f64, f64) = (1e-3, 50.0);
pub const DEFAULT_RESTARTS: usize = 8;
pub const PHASE_POINTS: usize = 21;
pub const CRITICAL_INSET: f64 = PI / 80.0;
/// Coupling strength used for optimization runs.
pub const OPT_G: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamVector {
    pub scheme: CouplingScheme,
    pub delta: f64,
    pub t: f64,
}

impl ParamVector {
    fn keys(&self) -> Vec<i32> {
        self.scheme.range()
    }

    /// [λ_j…, μ_j…, Δ, t] over the coupling range.
    pub fn to_vec(&self) -> Vec<f64> {
        let keys = self.keys();
        let mut v: Vec<f64> = keys.iter().map(|&j| self.scheme.lambda(j)).collect();
        v.extend(keys.iter().map(|&j| self.scheme.mu(j)));
        v.push(self.delta);
        v.push(self.t);
        v
    }

    pub fn with_vec(&self, v: &[f64]) -> ParamVector {
        let keys = self.keys();
        let n = keys.len();
        let mut out = self.clone();
        for (i, &j) in keys.iter().enumerate() {
            out.scheme.lambda.insert(j, v[i]);
            out.scheme.mu.insert(j, v[n + i]);
        }
        out.delta = v[2 * n];
        out.t = v[2 * n + 1];
        out
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let n = self.keys().len();
        let mut b = vec![(-1.0, 1.0); 2 * n];
        b.push(DELTA_BOUNDS);
        b.push(TIME_BOUNDS);
        b
    }

    /// Largest |coupling| set to 1, with g rescaled to compensate.
    pub fn normalized(&self) -> ParamVector {
        let m = self.scheme.max_abs_coupling();
        if !(m > 0.0) {
            return self.clone();
        }
        let mut out = self.clone();
        for v in out.scheme.lambda.values_mut().chain(out.scheme.mu.values_mut()) {
            *v /= m;
        }
        out.scheme.g *= m;
        out
    }

    pub fn within_bounds(&self) -> bool {
        self.to_vec().iter().zip(self.bounds()).all(|(x, (lo, hi))| *x >= lo && *x <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Cooling,
    Dsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// θ ∈ [0, π/4].
    Low,
    /// θ ∈ [π/4, π/2].
    High,
}

/// Total relative energy of the analytic steady state at one θ; +∞ when undefined.
pub fn objective_theta_specific(pv: &ParamVector, params: &ModelParams, noise: &NoiseSpec, mode: Mode) -> f64 {
    let energies = match mode {
        Mode::Cooling => chain_energies(params, &pv.scheme, pv.delta, pv.t, noise),
        Mode::Dsp => chain_dsp_energies(params, &pv.scheme),
    };
    match energies {
        Ok(e) => {
            let r = relative_energy(e.iter().sum(), ground_state_energy(params));
            if r.is_finite() {
                r
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// θ nodes of a phase, inset by π/80 from the critical point.
pub fn theta_grid(phase: Phase, points: usize) -> Vec<f64> {
    let (a, b) = match phase {
        Phase::Low => (0.0, FRAC_PI_4 - CRITICAL_INSET),
        Phase::High => (FRAC_PI_4 + CRITICAL_INSET, FRAC_PI_2),
    };
    (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect()
}

/// Composite trapezoid rule of `f` over the phase grid.
pub fn phase_average(phase: Phase, points: usize, f: impl Fn(f64) -> f64) -> f64 {
    let th = theta_grid(phase, points);
    let vals: Vec<f64> = th.iter().map(|&x| f(x)).collect();
    th.windows(2).zip(vals.windows(2)).map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1])).sum()
}

pub fn objective_phase_averaged(pv: &ParamVector, phase: Phase, n: usize, noise: &NoiseSpec, mode: Mode) -> f64 {
    phase_average(phase, PHASE_POINTS, |th| match ModelParams::new(n, th) {
        Ok(p) => objective_theta_specific(pv, &p, noise, mode),
        Err(_) => f64::INFINITY,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best: ParamVector,
    pub objective: f64,
    pub evaluations: usize,
    pub restarts_used: usize,
    /// (cumulative evaluation index, running best objective).
    pub history: Vec<(usize, f64)>,
}

struct Run {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    trace: Vec<(usize, f64)>,
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Projected BFGS with central finite differences, one start.
fn bfgs(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], bounds: &[(f64, f64)], budget: usize) -> Run {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut fx = eval(&x, &mut evals);
    let mut trace = vec![(evals, fx)];
    if !fx.is_finite() {
        return Run { x, f: fx, evals, trace };
    }
    let grad = |x: &[f64], evals: &mut usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let h = 1e-6 * x[i].abs().max(1.0);
                let (lo, hi) = bounds[i];
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] = (x[i] + h).min(hi);
                b[i] = (x[i] - h).max(lo);
                *evals += 2;
                let (fa, fb) = (f(&a), f(&b));
                if fa.is_finite() && fb.is_finite() && a[i] > b[i] {
                    (fa - fb) / (a[i] - b[i])
                } else {
                    0.0
                }
            })
            .collect()
    };
    let mut g = grad(&x, &mut evals);
    let mut hinv = vec![vec![0.0; n]; n];
    let reset = |h: &mut Vec<Vec<f64>>| {
        for (i, row) in h.iter_mut().enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            row[i] = 1.0;
        }
    };
    reset(&mut hinv);
    let mut stall = 0;
    while evals + 2 * n + 2 <= budget {
        // variables pinned at a bound with the gradient pushing outward stay fixed
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= bounds[i].0 && g[i] > 0.0) || (x[i] >= bounds[i].1 && g[i] < 0.0)))
            .collect();
        let pg: f64 = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < 1e-10 {
            break;
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| if free[i] { -(0..n).filter(|&j| free[j]).map(|j| hinv[i][j] * g[j]).sum::<f64>() } else { 0.0 })
            .collect();
        if d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            reset(&mut hinv);
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            if evals >= budget {
                break;
            }
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut xn, bounds);
            let fn_ = eval(&xn, &mut evals);
            let dec: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fn_.is_finite() && fn_ <= fx + 1e-4 * dec.min(0.0) && fn_ <= fx {
                accepted = Some((xn, fn_));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            if hinv.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, v)| *v == if i == j { 1.0 } else { 0.0 })) {
                break;
            }
            reset(&mut hinv);
            continue;
        };
        let gn = grad(&xn, &mut evals);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-14 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (1.0 + yhy / sy) * s[i] * s[j] / sy - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let gain = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        trace.push((evals, fx));
        if gain <= 1e-15 * (1.0 + fx.abs()) {
            stall += 1;
            if stall >= 3 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    Run { x, f: fx, evals, trace }
}

fn start_point(init: &[f64], bounds: &[(f64, f64)], seed: u64, restart: usize, restarts: usize) -> Vec<f64> {
    if restart == 0 {
        return init.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let scale = restart as f64 / (restarts.max(2) - 1) as f64;
    let n = init.len();
    let mut x: Vec<f64> = init
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i + 2 < n {
                v + scale * rng.gen_range(-1.0..1.0)
            } else {
                v * (scale * rng.gen_range(-0.7..0.7f64)).exp()
            }
        })
        .collect();
    project(&mut x, bounds);
    x
}

/// Multistart projected quasi-Newton; `budget` bounds the evaluations per start.
pub fn optimize<F>(objective: F, init: &ParamVector, budget: usize, restarts: usize, seed: u64) -> Result<OptResult>
where
    F: Fn(&ParamVector) -> f64 + Sync,
{
    if budget < 1 {
        return Err(KelvinError::Domain("budget must be >= 1".into()));
    }
    let restarts = restarts.max(1);
    let bounds = init.bounds();
    let x0 = init.to_vec();
    let f = |v: &[f64]| objective(&init.with_vec(v));
    let one = |r: usize| bfgs(&f, &start_point(&x0, &bounds, seed, r, restarts), &bounds, budget);
    #[cfg(feature = "parallel")]
    let runs: Vec<Run> = {
        use rayon::prelude::*;
        (0..restarts).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Run> = (0..restarts).map(one).collect();

    let mut history = Vec::new();
    let mut offset = 0;
    let mut best_f = f64::INFINITY;
    let mut best: Option<&Run> = None;
    for run in &runs {
        for &(e, v) in &run.trace {
            if v < best_f {
                best_f = v;
            }
            history.push((offset + e, best_f));
        }
        offset += run.evals;
        if run.f.is_finite() && best.is_none_or(|b| run.f < b.f) {
            best = Some(run);
        }
    }
    let Some(best) = best else {
        return Err(KelvinError::OptimizationFailed("objective is not finite at any start".into()));
    };
    let pv = init.with_vec(&best.x).normalized();
    let objective_value = objective(&pv);
    Ok(OptResult {
        best: pv,
        objective: objective_value,
        evaluations: offset,
        restarts_used: restarts,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_3;

    fn local(l0: f64, m0: f64, delta: f64, t: f64) -> ParamVector {
        ParamVector { scheme: CouplingScheme::local(l0, m0, OPT_G), delta, t }
    }

    #[test]
    fn quadrature_sanity() {
        let v = phase_average(Phase::Low, 21, |_| 0.3);
        assert!((v - 0.3 * (FRAC_PI_4 - CRITICAL_INSET)).abs() < 1e-15);
        let pv = local(1.0, 0.0, 0.744, 3.33);
        let a = phase_average(Phase::High, 21, |th| objective_theta_specific(&pv, &ModelParams::new(20, th).unwrap(), &NoiseSpec::None, Mode::Cooling));
        let b = phase_average(Phase::High, 41, |th| objective_theta_specific(&pv, &ModelParams::new(20, th).unwrap(), &NoiseSpec::None, Mode::Cooling));
        assert!((a / b - 1.0).abs() < 0.01, "{a} {b}");
    }

    #[test]
    fn objective_invariances() {
        let p = ModelParams::new(20, 1.0).unwrap();
        let mut pv = local(0.5, 0.25, 0.8, 3.0);
        pv.scheme.lambda.insert(1, 0.2);
        pv.scheme.mu.insert(1, -0.1);
        pv.scheme.lambda.insert(-1, 0.0);
        pv.scheme.mu.insert(-1, 0.0);
        pv.scheme.nn = 1.0;
        for noise in [NoiseSpec::None, NoiseSpec::Depolarizing { kappa: 1e-4 }] {
            let a = objective_theta_specific(&pv, &p, &noise, Mode::Cooling);
            let b = objective_theta_specific(&pv.normalized(), &p, &noise, Mode::Cooling);
            assert!((a - b).abs() < 1e-12);
        }
        let d0 = objective_theta_specific(&pv, &p, &NoiseSpec::None, Mode::Dsp);
        for (delta, t) in [(0.1, 1.0), (2.0, 7.0), (0.5, 40.0), (2.9, 0.2), (1.3, 13.0)] {
            let q = ParamVector { delta, t, ..pv.clone() };
            assert!((objective_theta_specific(&q, &p, &NoiseSpec::None, Mode::Dsp) - d0).abs() < 1e-14);
        }
        let mut last = 0.0;
        for kappa in [0.0, 1e-5, 1e-4, 1e-3, 1e-2] {
            let e = objective_theta_specific(&pv, &p, &NoiseSpec::Depolarizing { kappa }, Mode::Cooling);
            assert!(e >= last);
            last = e;
        }
        // product-state optimum of DSP at θ = π/2
        let p2 = ModelParams::new(20, FRAC_PI_2).unwrap();
        let e = objective_theta_specific(&local(1.0, 0.0, 1.0, 1.0), &p2, &NoiseSpec::None, Mode::Dsp);
        assert!(e < 1e-12);
        let e = objective_theta_specific(&local(1.0, 0.0, 0.744, 3.33), &ModelParams::new(20, 1.0).unwrap(), &NoiseSpec::None, Mode::Cooling);
        assert!(e.is_finite() && e > 0.0);
    }

    #[test]
    fn theta_specific_optimum_is_lambda_only() {
        let p = ModelParams::new(20, FRAC_PI_3).unwrap();
        let obj = |pv: &ParamVector| objective_theta_specific(pv, &p, &NoiseSpec::None, Mode::Cooling);
        let r = optimize(obj, &local(1.0, 0.5, 1.0, 3.0), 2000, DEFAULT_RESTARTS, 11).unwrap();
        assert!(r.best.within_bounds());
        assert!((r.best.scheme.max_abs_coupling() - 1.0).abs() < 1e-12);
        let l0 = r.best.scheme.lambda(0).abs();
        let m0 = r.best.scheme.mu(0).abs();
        assert!((l0 - 1.0).abs() < 1e-9 && m0 <= 0.02, "λ0 {l0} μ0 {m0}");
        assert!((obj(&r.best) - r.objective).abs() < 1e-12);
        assert!(r.history.windows(2).all(|w| w[1].1 <= w[0].1));
        let again = optimize(obj, &local(1.0, 0.5, 1.0, 3.0), 2000, DEFAULT_RESTARTS, 11).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn failure_when_nowhere_finite() {
        let r = optimize(|_: &ParamVector| f64::NAN, &local(1.0, 0.0, 1.0, 1.0), 50, 3, 0);
        assert!(matches!(r, Err(KelvinError::OptimizationFailed(_))));
    }
}
