//! Weak-coupling predictions: overlap integrals, jump operators, averaged
//! rates and closed-form steady states.

use serde::{Deserialize, Serialize};

use crate::error::{KelvinError, Result};
use crate::linalg::{c, C64};
use crate::model::{coupling_coefficients, dispersion, CouplingScheme, EnvSpec, ModelParams};

const SERIES_CUTOFF: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    ExactIntegral,
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    Depolarizing { kappa: f64 },
    FiniteEnv(EnvSpec),
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Depolarizing { kappa } => {
                if kappa.is_finite() && *kappa >= 0.0 {
                    Ok(())
                } else {
                    Err(KelvinError::Validation(format!("kappa must be >= 0, got {kappa}")))
                }
            }
            NoiseSpec::FiniteEnv(e) => e.validate(),
        }
    }

    pub fn kappa(&self) -> f64 {
        match self {
            NoiseSpec::Depolarizing { kappa } => *kappa,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub k: usize,
    pub gamma_c: f64,
    pub gamma_h: f64,
    pub alpha: f64,
}

/// Per-mode cooling and heating rates per elementary cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub entries: Vec<RateEntry>,
    pub gamma0: f64,
}

/// g∫₀ᵗ e^{iωs} ds, written as g·t·e^{iωt/2}·sinc(ωt/2) so that ω → 0 is exact.
pub fn overlap(omega: f64, t: f64, g: f64) -> C64 {
    let h = 0.5 * omega * t;
    let sinc = if h.abs() < SERIES_CUTOFF {
        1.0 - h * h / 6.0 + h.powi(4) / 120.0
    } else {
        h.sin() / h
    };
    C64::from_polar(g * t * sinc, h)
}

/// (x, y) with detunings Δ − ε and Δ + ε.
pub fn overlap_coeffs(epsilon: f64, delta: f64, t: f64, g: f64) -> (C64, C64) {
    (overlap(delta - epsilon, t, g), overlap(delta + epsilon, t, g))
}

/// Coefficients of l = u·(first operator) + v·(second operator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOp {
    pub u: C64,
    pub v: C64,
}

/// l₁ = A*x â_k + B*y â_{−k}† and l₂ = Ax â_{−k} − By â_k†.
pub fn single_cycle_jump_ops(a: C64, b: C64, x: C64, y: C64) -> (JumpOp, JumpOp) {
    (JumpOp { u: a.conj() * x, v: b.conj() * y }, JumpOp { u: a * x, v: -b * y })
}

/// ⟨|x/g|²⟩ for t' uniform on [0, 2t]: 2/ω² − sin(2ωt)/(ω³t).
fn averaged_overlap_sq(omega: f64, t: f64) -> f64 {
    let u = omega * t;
    if u.abs() < SERIES_CUTOFF {
        t * t * (4.0 / 3.0 - 4.0 * u * u / 15.0 + 8.0 * u.powi(4) / 315.0)
    } else {
        2.0 / (omega * omega) - (2.0 * u).sin() / (omega.powi(3) * t)
    }
}

pub fn gamma0_sq(t: f64) -> f64 {
    1.5 / (t * t)
}

/// Rates averaged over cycle times uniform on [0, 2t].
pub fn averaged_rates(epsilon: f64, delta: f64, t: f64, g: f64, a2: f64, b2: f64, mode: RateMode) -> (f64, f64) {
    let (dc, dh) = (delta - epsilon, delta + epsilon);
    match mode {
        RateMode::ExactIntegral => (g * g * a2 * averaged_overlap_sq(dc, t), g * g * b2 * averaged_overlap_sq(dh, t)),
        RateMode::Lorentzian => {
            let g0 = gamma0_sq(t);
            (2.0 * g * g * a2 / (dc * dc + g0), 2.0 * g * g * b2 / (dh * dh + g0))
        }
    }
}

/// Mean of the single-frequency rates over the bath frequencies.
pub fn multifreq_rates(epsilon: f64, deltas: &[f64], t: f64, g: f64, a2: f64, b2: f64, mode: RateMode) -> Result<(f64, f64)> {
    if deltas.is_empty() {
        return Err(KelvinError::Domain("empty frequency list".into()));
    }
    let (mut gc, mut gh) = (0.0, 0.0);
    for &d in deltas {
        let (c_, h_) = averaged_rates(epsilon, d, t, g, a2, b2, mode);
        gc += c_;
        gh += h_;
    }
    let r = deltas.len() as f64;
    Ok((gc / r, gh / r))
}

/// Rates for a fixed sequence of (Δ, t) subcycles: mean of g²|A x|² and g²|B y|².
pub fn schedule_rates(epsilon: f64, subcycles: &[(f64, f64)], g: f64, a2: f64, b2: f64) -> (f64, f64) {
    let (mut gc, mut gh) = (0.0, 0.0);
    for &(d, t) in subcycles {
        let (x, y) = overlap_coeffs(epsilon, d, t, g);
        gc += a2 * x.norm_sqr();
        gh += b2 * y.norm_sqr();
    }
    let n = subcycles.len().max(1) as f64;
    (gc / n, gh / n)
}

/// Frequencies Δ_r = ε_m + δ(r − ½), δ = (ε_M − ε_m)/R.
pub fn band_grid(params: &ModelParams, r: usize) -> Vec<f64> {
    let (lo, hi) = (params.eps_min(), params.eps_max());
    let d = (hi - lo) / r as f64;
    (1..=r).map(|i| lo + d * (i as f64 - 0.5)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumRates {
    pub gamma_c: f64,
    pub gamma_h: f64,
    pub beta: f64,
}

/// R → ∞ limit of the band grid with nn = 0 couplings.
pub fn continuum_rates(epsilon: f64, theta: f64, t: f64, g: f64) -> Result<ContinuumRates> {
    let s = (2.0 * theta).sin();
    let (em, e_m) = ((1.0 + s).max(0.0).sqrt(), (1.0 - s).max(0.0).sqrt());
    let band = em - e_m;
    if band.abs() < 1e-12 {
        return Err(KelvinError::DegenerateBand);
    }
    let w = (2.0f64 / 3.0).sqrt();
    let z = |x: f64| (x - epsilon) * t * w;
    let beta = w * (z(em).atan() - z(e_m).atan());
    Ok(ContinuumRates {
        gamma_c: 2.0 * g * g * t * beta / band,
        gamma_h: 2.0 * g * g / ((em + epsilon) * (e_m + epsilon)),
        beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePrediction {
    pub energy: f64,
    /// `None` when ε = 0.
    pub relative: Option<f64>,
    pub m: f64,
    pub fidelity: f64,
}

/// Steady state of the averaged Lindbladian, with κt added to both channels.
pub fn lindblad_steady(gamma_c: f64, gamma_h: f64, epsilon: f64, noise_kappa_t: f64) -> Result<ModePrediction> {
    let gc = gamma_c + noise_kappa_t;
    let gh = gamma_h + noise_kappa_t;
    let s = gc + gh;
    if !(s > 0.0) {
        return Err(KelvinError::UndefinedSteadyState);
    }
    let m = gc / s;
    Ok(ModePrediction {
        energy: epsilon * (gh - gc) / s,
        relative: (epsilon > 0.0).then(|| 2.0 * gh / s),
        m,
        fidelity: m * m,
    })
}

/// E_k = ε(−|Ax|² + |By|²)/(|Ax|² + |By|²).
pub fn general_ss_energy(epsilon: f64, a: C64, b: C64, x: C64, y: C64) -> Result<f64> {
    let (p, q) = ((a * x).norm_sqr(), (b * y).norm_sqr());
    if !(p + q > 0.0) {
        return Err(KelvinError::UndefinedSteadyState);
    }
    Ok(epsilon * (q - p) / (p + q))
}

/// Depolarizing noise adds 2κt to the denominator.
pub fn noisy_ss_energy(epsilon: f64, a: C64, b: C64, x: C64, y: C64, kappa: f64, t: f64) -> Result<f64> {
    let (p, q) = ((a * x).norm_sqr(), (b * y).norm_sqr());
    let den = p + q + 2.0 * kappa * t;
    if !(den > 0.0) {
        return Err(KelvinError::UndefinedSteadyState);
    }
    Ok(epsilon * (q - p) / den)
}

/// DSP steady state; independent of Δ and t.
pub fn dsp_ss_energy(epsilon: f64, a: C64, b: C64) -> Result<f64> {
    let (p, q) = (a.norm_sqr(), b.norm_sqr());
    if !(p + q > 0.0) {
        return Err(KelvinError::UndefinedSteadyState);
    }
    Ok(epsilon * (q - p) / (p + q))
}

/// One reservoir seen by a mode: coupling coefficients, overlaps and the
/// polarization p of its initial state (1 for the bath ground state).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub a: C64,
    pub b: C64,
    pub x: C64,
    pub y: C64,
    pub p: f64,
}

impl Channel {
    fn loss(&self) -> f64 {
        (self.a * self.x).norm_sqr()
    }

    fn gain(&self) -> f64 {
        (self.b * self.y).norm_sqr()
    }
}

/// Environment E1 with λ₀ = 1, μ₀ = 0 couplings of strength κ'.
pub fn env_channel(epsilon: f64, phi: f64, env: &EnvSpec, t: f64) -> Channel {
    let (x, y) = overlap_coeffs(epsilon, env.delta_e, t, env.kappa_prime);
    let (s, co) = phi.sin_cos();
    Channel { a: c(co), b: c(-s), x, y, p: env.p_e }
}

/// E_k = ε Σᵢ pᵢ(−|Aᵢxᵢ|² + |Bᵢyᵢ|²) / Σᵢ(|Aᵢxᵢ|² + |Bᵢyᵢ|²).
pub fn finite_env_ss_energy(epsilon: f64, channels: &[Channel]) -> Result<f64> {
    let num: f64 = channels.iter().map(|ch| ch.p * (ch.gain() - ch.loss())).sum();
    let den: f64 = channels.iter().map(|ch| ch.gain() + ch.loss()).sum();
    if !(den > 0.0) {
        return Err(KelvinError::UndefinedSteadyState);
    }
    Ok(epsilon * num / den)
}

/// (n_c for the state, n_c for the energy): α⁻¹log(N/ε) and α⁻¹log(1/ε).
pub fn cycle_estimates(alpha: f64, n: f64, target_eps: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(KelvinError::NoConvergenceRate(alpha));
    }
    Ok(((n / target_eps).ln() / alpha, (1.0 / target_eps).ln() / alpha))
}

pub const PLAN_C1: f64 = 0.2;
pub const PLAN_C2: f64 = 0.1;
pub const PLAN_C3: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsPlan {
    pub r: usize,
    pub t: f64,
    pub g: f64,
    pub n_c: f64,
    pub total_time: f64,
}

/// R = N/5 frequencies, (ε_M − ε_m)t = N/10, g = 0.1/(Rt) and n_c = ε_M t/(gt)².
pub fn gs_cooling_plan(params: &ModelParams) -> Result<GsPlan> {
    params.validate()?;
    let band = params.eps_max() - params.eps_min();
    if band < 1e-12 {
        return Err(KelvinError::DegenerateBand);
    }
    let n = params.n as f64;
    let r = ((PLAN_C1 * n).round() as usize).max(1);
    let t = PLAN_C2 * n / band;
    let g = PLAN_C3 / (r as f64 * t);
    let n_c = params.eps_max() * t / (g * t).powi(2);
    Ok(GsPlan { r, t, g, n_c, total_time: n_c * t })
}

/// Weight A_k B_k*/(ε² − Δ²) of the first-cycle cross terms.
pub fn cross_term_weight(a: C64, b: C64, epsilon: f64, delta: f64) -> Result<C64> {
    let den = epsilon * epsilon - delta * delta;
    if den.abs() < 1e-9 {
        return Err(KelvinError::ResonantDenominator(den.abs()));
    }
    Ok(a * b.conj() / den)
}

/// Per-pair prefactor: ½ for the self-conjugate momenta.
fn weight(params: &ModelParams, k: usize) -> f64 {
    if params.is_edge(k) {
        0.5
    } else {
        1.0
    }
}

/// Averaged rates for every block k = 0..=N/2 under a list of bath frequencies.
pub fn rate_table(params: &ModelParams, scheme: &CouplingScheme, deltas: &[f64], t: f64, mode: RateMode) -> Result<RateTable> {
    let mut entries = Vec::new();
    for k in params.block_momenta() {
        let eps = dispersion(params, k as i64);
        let (a, b) = coupling_coefficients(scheme, params, k as i64);
        let (gc, gh) = multifreq_rates(eps, deltas, t, scheme.g, a.norm_sqr(), b.norm_sqr(), mode)?;
        entries.push(RateEntry { k, gamma_c: gc, gamma_h: gh, alpha: gc + gh });
    }
    Ok(RateTable { entries, gamma0: gamma0_sq(t).sqrt() })
}

/// Relative energy e = |(E − E_GS)/E_GS| from per-block energies (edges already weighted).
pub fn relative_energy(total: f64, e_gs: f64) -> f64 {
    ((total - e_gs) / e_gs).abs()
}

/// Per-block steady energies of a single-frequency fixed-time cycle
/// (depolarizing or finite-environment noise allowed).
pub fn chain_energies(params: &ModelParams, scheme: &CouplingScheme, delta: f64, t: f64, noise: &NoiseSpec) -> Result<Vec<f64>> {
    params
        .block_momenta()
        .map(|k| {
            let eps = dispersion(params, k as i64);
            let (a, b) = coupling_coefficients(scheme, params, k as i64);
            let (x, y) = overlap_coeffs(eps, delta, t, scheme.g);
            let e = match noise {
                NoiseSpec::None => general_ss_energy(eps, a, b, x, y),
                NoiseSpec::Depolarizing { kappa } => noisy_ss_energy(eps, a, b, x, y, *kappa, t),
                NoiseSpec::FiniteEnv(env) => {
                    let phi = crate::model::bogoliubov_angle(params, k as i64);
                    let bath = Channel { a, b, x, y, p: 1.0 };
                    finite_env_ss_energy(eps, &[bath, env_channel(eps, phi, env, t)])
                }
            }?;
            Ok(weight(params, k) * e)
        })
        .collect()
}

/// Per-block DSP steady energies.
pub fn chain_dsp_energies(params: &ModelParams, scheme: &CouplingScheme) -> Result<Vec<f64>> {
    params
        .block_momenta()
        .map(|k| {
            let eps = dispersion(params, k as i64);
            let (a, b) = coupling_coefficients(scheme, params, k as i64);
            Ok(weight(params, k) * dsp_ss_energy(eps, a, b)?)
        })
        .collect()
}

/// Per-block energies from the averaged Lindbladian with rates in `table`.
pub fn chain_lindblad_energies(params: &ModelParams, table: &RateTable, kappa_t: f64) -> Result<Vec<ModePrediction>> {
    table
        .entries
        .iter()
        .map(|r| {
            let eps = dispersion(params, r.k as i64);
            let mut p = lindblad_steady(r.gamma_c, r.gamma_h, eps, kappa_t)?;
            p.energy *= weight(params, r.k);
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::I;
    use crate::fock::{annihilators, exact_cycle_map, Superoperator};
    use crate::linalg::{kron, CMat};
    use crate::model::{bogoliubov_angle, block_hamiltonian, BathSpec};
    use std::f64::consts::{FRAC_PI_3, PI};

    /// Applies a jump operator given by its coefficients on two Fock operators.
    fn combine(j: &JumpOp, first: &crate::linalg::CMat, second: &crate::linalg::CMat) -> crate::linalg::CMat {
        first * j.u + second * j.v
    }

    #[test]
    fn overlap_limits() {
        let (x, _) = overlap_coeffs(0.7, 0.7, 3.0, 0.2);
        assert!((x - c(0.6)).norm() < 1e-15);
        let t = 5.0;
        let (x, _) = overlap_coeffs(1.0, 1.0 + 2.0 * PI / t, t, 1.0);
        assert!(x.norm() < 1e-14);
        let (_, y) = overlap_coeffs(0.4, 2.0 * PI / t - 0.4, t, 1.0);
        assert!(y.norm() < 1e-14);
        // direct form away from resonance
        let (w, t, g) = (0.37, 2.5, 0.3);
        let direct = ((I * w * t).exp() - c(1.0)) * g / (I * w);
        assert!((overlap(w, t, g) - direct).norm() < 1e-14);
    }

    #[test]
    fn jump_ops_local_coupling() {
        let params = ModelParams::new(12, 1.0).unwrap();
        let scheme = CouplingScheme::local(1.0, 1.0, 0.1);
        let (a, b) = coupling_coefficients(&scheme, &params, 2);
        let phi = bogoliubov_angle(&params, 2);
        let (x, y) = (C64::new(0.3, -0.2), C64::new(-0.1, 0.05));
        let (l1, _) = single_cycle_jump_ops(a, b, x, y);
        // e^{−iφ}(x, −i y) up to a global phase
        let target = [(-I * phi).exp() * x, (-I * phi).exp() * (-I) * y];
        let ph = l1.u / target[0];
        assert!((ph.norm() - 1.0).abs() < 1e-12);
        assert!((l1.v - ph * target[1]).norm() < 1e-12);
        let (l1, l2) = single_cycle_jump_ops(a, b, x, c(0.0));
        assert_eq!(l1.v, c(0.0));
        assert_eq!(l2.v, c(0.0));
    }

    fn dissipator(l: &CMat) -> CMat {
        let d = l.nrows();
        let id = CMat::identity(d, d);
        let ld = l.adjoint();
        let ldl = &ld * l;
        kron(l, &l.map(|z| z.conj())) - kron(&ldl, &id) * c(0.5) - kron(&id, &ldl.transpose()) * c(0.5)
    }

    fn lindblad_error(g: f64) -> f64 {
        let params = ModelParams::new(16, 1.1).unwrap();
        let mut scheme = CouplingScheme::local(1.0, 0.4, g);
        scheme.lambda.insert(1, 0.3);
        scheme.mu.insert(1, -0.2);
        scheme.nn = 1.0;
        scheme.lambda.insert(-1, 0.0);
        scheme.mu.insert(-1, 0.0);
        let bath = BathSpec::new(0.8, 2.0).unwrap();
        let k = 3;
        let block = block_hamiltonian(&params, &scheme, &bath, k);
        let t = 2.0;
        let exact = exact_cycle_map(&block, t, 0.0).unwrap();
        let (x, y) = overlap_coeffs(block.epsilon, bath.delta, t, g);
        let (l1, l2) = single_cycle_jump_ops(block.a_coeff, block.b_coeff, x, y);
        let ops = annihilators(2);
        let (ak, amk) = (&ops[0], &ops[1]);
        let j1 = combine(&l1, ak, &amk.adjoint());
        let j2 = combine(&l2, amk, &ak.adjoint());
        let hs = (ak.adjoint() * ak + amk.adjoint() * amk) * c(block.epsilon);
        let u = crate::linalg::unitary(&hs, t);
        let conj_u = kron(&u, &u.map(|z| z.conj()));
        let id = CMat::identity(16, 16);
        let approx = &conj_u * (id + dissipator(&j1) + dissipator(&j2));
        exact.distance(&Superoperator { matrix: approx, dim: 4 })
    }

    #[test]
    fn jump_op_map_matches_exact_cycle() {
        let e1 = lindblad_error(0.04);
        let e2 = lindblad_error(0.02);
        assert!(e1 < 0.05, "{e1}");
        assert!(e1 / e2 >= 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn averaged_rate_limits() {
        let (g, t) = (1e-3, 20.0);
        let (gc, _) = averaged_rates(1.0, 1.0, t, g, 1.0, 1.0, RateMode::ExactIntegral);
        assert!((gc / (g * g * t * t) - 4.0 / 3.0).abs() < 1e-12);
        let (gl, _) = averaged_rates(1.0, 1.0, t, g, 1.0, 1.0, RateMode::Lorentzian);
        assert!((gl / (g * g * t * t) - 4.0 / 3.0).abs() < 1e-12);
        // continuity across the series cutoff
        let w = SERIES_CUTOFF / t;
        let (a, _) = averaged_rates(1.0, 1.0 + w * 0.999, t, g, 1.0, 1.0, RateMode::ExactIntegral);
        let (b, _) = averaged_rates(1.0, 1.0 + w * 1.001, t, g, 1.0, 1.0, RateMode::ExactIntegral);
        assert!((a - b).abs() / a < 1e-5);
        // far off resonance → 2g²/(Δ − ε)²
        let (gc, _) = averaged_rates(1.0, 2.0, 2000.0, g, 1.0, 1.0, RateMode::ExactIntegral);
        assert!((gc / (2.0 * g * g) - 1.0).abs() < 1e-3);
        // quadrature oracle of the time average
        let (eps, d, t) = (0.9, 1.3, 7.0);
        let n = 20000;
        let h = 2.0 * t / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * overlap(d - eps, i as f64 * h, 1.0).norm_sqr();
        }
        acc *= h / (2.0 * t);
        let (gc, _) = averaged_rates(eps, d, t, 1.0, 1.0, 1.0, RateMode::ExactIntegral);
        assert!((gc - acc).abs() < 1e-6 * gc);
    }

    #[test]
    fn rate_modes_agree_within_envelope() {
        let t = 20.0;
        // |Δ − ε|t = 1 sits on the Lorentzian shoulder where the two differ by 36%
        for (dt, tol) in [(0.0, 0.25), (1.0, 0.4), (10.0, 0.25)] {
            let eps = 1.0;
            let d = eps + dt / t;
            let (a, _) = averaged_rates(eps, d, t, 1.0, 1.0, 1.0, RateMode::ExactIntegral);
            let (b, _) = averaged_rates(eps, d, t, 1.0, 1.0, 1.0, RateMode::Lorentzian);
            assert!((a / b - 1.0).abs() < tol, "{dt}: {a} {b}");
        }
    }

    #[test]
    fn multifreq_basics() {
        let (gc, gh) = averaged_rates(0.8, 1.1, 9.0, 0.1, 0.7, 0.3, RateMode::Lorentzian);
        let s = multifreq_rates(0.8, &[1.1], 9.0, 0.1, 0.7, 0.3, RateMode::Lorentzian).unwrap();
        assert_eq!(s, (gc, gh));
        let s = multifreq_rates(0.8, &[1.1; 4], 9.0, 0.1, 0.7, 0.3, RateMode::Lorentzian).unwrap();
        assert!((s.0 - gc).abs() < 1e-18 && (s.1 - gh).abs() < 1e-18);
        assert!(multifreq_rates(0.8, &[], 9.0, 0.1, 0.7, 0.3, RateMode::Lorentzian).is_err());
    }

    #[test]
    fn multifreq_converges_to_continuum() {
        let params = ModelParams::new(200, FRAC_PI_3).unwrap();
        let (t, g) = (50.0, 1e-3);
        for k in [20, 50, 80] {
            let eps = dispersion(&params, k);
            let cont = continuum_rates(eps, FRAC_PI_3, t, g).unwrap();
            let (gc, gh) = multifreq_rates(eps, &band_grid(&params, 100), t, g, 1.0, 1.0, RateMode::Lorentzian).unwrap();
            assert!((gc / cont.gamma_c - 1.0).abs() < 0.02, "k={k}");
            assert!((gh / cont.gamma_h - 1.0).abs() < 0.02, "k={k}");
        }
        // Riemann-sum gap shrinks like 1/R
        let t = 5.0;
        let eps = dispersion(&params, 30);
        let cont = continuum_rates(eps, FRAC_PI_3, t, g).unwrap();
        for r in [25usize, 50, 100] {
            let (gc, gh) = multifreq_rates(eps, &band_grid(&params, r), t, g, 1.0, 1.0, RateMode::Lorentzian).unwrap();
            let gap = ((gc + gh) / (cont.gamma_c + cont.gamma_h) - 1.0).abs();
            assert!(gap <= 1.0 / r as f64, "R={r} gap {gap}");
        }
    }

    #[test]
    fn continuum_regimes() {
        assert_eq!(continuum_rates(1.0, 0.0, 10.0, 0.1), Err(KelvinError::DegenerateBand));
        let th = FRAC_PI_3;
        let params = ModelParams::new(400, th).unwrap();
        let eps = dispersion(&params, 100);
        let cr = continuum_rates(eps, th, 200.0, 1e-3).unwrap();
        let b = cr.beta * 1.5f64.sqrt();
        assert!((PI / 2.0..=PI).contains(&b));
        let band = params.eps_max() - params.eps_min();
        let t = 1e-3;
        let cr = continuum_rates(eps, th, t, 1e-3).unwrap();
        assert!((cr.beta / (2.0 / 3.0 * t * band) - 1.0).abs() < 1e-3);
        // e_k from the rate ratio against the closed form
        let t = 30.0;
        let cr = continuum_rates(eps, th, t, 1e-3).unwrap();
        let p = lindblad_steady(cr.gamma_c, cr.gamma_h, eps, 0.0).unwrap();
        let (hi, lo) = (params.eps_max(), params.eps_min());
        let closed = 2.0 * band / ((hi + eps) * (lo + eps) * t * cr.beta);
        let e = p.relative.unwrap();
        assert!((e / (closed / (1.0 + closed / 2.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lindblad_steady_limits() {
        let p = lindblad_steady(1.0, 0.0, 0.8, 0.0).unwrap();
        assert_eq!((p.energy, p.relative, p.fidelity), (-0.8, Some(0.0), 1.0));
        let p = lindblad_steady(0.3, 0.3, 0.8, 0.0).unwrap();
        assert!(p.energy.abs() < 1e-15 && (p.relative.unwrap() - 1.0).abs() < 1e-15);
        let p = lindblad_steady(1e-6, 1e-9, 0.8, 10.0).unwrap();
        assert!((p.relative.unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(lindblad_steady(0.0, 0.0, 1.0, 0.0), Err(KelvinError::UndefinedSteadyState));
    }

    #[test]
    fn closed_form_energies() {
        let params = ModelParams::new(20, 0.9).unwrap();
        let local = CouplingScheme::local(1.0, 1.0, 0.1);
        for k in 0..=10 {
            let eps = dispersion(&params, k);
            let (a, b) = coupling_coefficients(&local, &params, k);
            let (x, y) = overlap_coeffs(eps, 1.0, 3.0, 0.1);
            let e = general_ss_energy(eps, a, b, x, y).unwrap();
            let nn0 = eps * (y.norm_sqr() - x.norm_sqr()) / (x.norm_sqr() + y.norm_sqr());
            assert!((e - nn0).abs() < 1e-12);
            assert_eq!(noisy_ss_energy(eps, a, b, x, y, 0.0, 3.0).unwrap(), e);
            assert!(dsp_ss_energy(eps, a, b).unwrap().abs() < 1e-12);
            let ch = Channel { a, b, x, y, p: 1.0 };
            assert!((finite_env_ss_energy(eps, &[ch]).unwrap() - e).abs() < 1e-15);
            let phi = bogoliubov_angle(&params, k);
            let (a, b) = coupling_coefficients(&CouplingScheme::local(1.0, 0.0, 1.0), &params, k);
            assert!((dsp_ss_energy(eps, a, b).unwrap() + eps * (2.0 * phi).cos()).abs() < 1e-12);
        }
        let (a, b) = (c(1.0), c(0.01));
        let e = general_ss_energy(1.3, a, b, c(1.0), c(1.0)).unwrap();
        assert!((e + 1.3).abs() < 1e-3);
        let e = noisy_ss_energy(1.3, a, b, c(1e-3), c(1e-3), 1.0, 10.0).unwrap();
        assert!(e.abs() < 1e-6);
        assert!(general_ss_energy(1.0, a, b, c(0.0), c(0.0)).is_err());
    }

    #[test]
    fn environment_polarization_flips_sign() {
        let (eps, phi) = (1.0, 0.3);
        let bath = Channel { a: c(1.0), b: c(0.2), x: c(1e-4), y: c(1e-4), p: 1.0 };
        let env = |p_e| EnvSpec { kappa_prime: 0.5, delta_e: 1.0, p_e };
        let up = finite_env_ss_energy(eps, &[bath, env_channel(eps, phi, &env(1.0), 3.0)]).unwrap();
        let down = finite_env_ss_energy(eps, &[bath, env_channel(eps, phi, &env(-1.0), 3.0)]).unwrap();
        assert!(up < 0.0 && down > 0.0);
        assert!((up + down).abs() < 1e-3 * up.abs());
    }

    #[test]
    fn cycle_estimates_scaling() {
        let (s, _) = cycle_estimates(1.0, std::f64::consts::E, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        let (a, _) = cycle_estimates(0.3, 100.0, 1e-2).unwrap();
        let (b, _) = cycle_estimates(0.3, 200.0, 1e-2).unwrap();
        assert!((b - a - 2f64.ln() / 0.3).abs() < 1e-12);
        assert!(matches!(cycle_estimates(0.0, 10.0, 0.1), Err(KelvinError::NoConvergenceRate(_))));
    }

    #[test]
    fn ground_state_plan_scaling() {
        let th = 1.2;
        let p = |n| gs_cooling_plan(&ModelParams::new(n, th).unwrap()).unwrap();
        let (a, b) = (p(50), p(100));
        assert!((b.total_time / a.total_time - 16.0).abs() < 1e-9);
        for plan in [a, b, p(200)] {
            assert!((plan.g * plan.r as f64 * plan.t).powi(2) <= 0.01 + 1e-15);
        }
        // worst per-mode infidelity times N stays bounded
        let scaled: Vec<f64> = [50usize, 100, 200]
            .iter()
            .map(|&n| {
                let params = ModelParams::new(n, th).unwrap();
                let plan = gs_cooling_plan(&params).unwrap();
                let grid = band_grid(&params, plan.r);
                let worst = params
                    .block_momenta()
                    .map(|k| {
                        let eps = dispersion(&params, k as i64);
                        let (gc, gh) = multifreq_rates(eps, &grid, plan.t, plan.g, 1.0, 1.0, RateMode::Lorentzian).unwrap();
                        1.0 - lindblad_steady(gc, gh, eps, 0.0).unwrap().fidelity
                    })
                    .fold(0.0, f64::max);
                worst * n as f64
            })
            .collect();
        for w in scaled.windows(2) {
            assert!(w[1] / w[0] < 1.5 && w[0] / w[1] < 1.5, "{scaled:?}");
        }
    }

    #[test]
    fn cross_terms_are_small() {
        assert_eq!(cross_term_weight(c(1.0), c(0.0), 0.5, 1.0).unwrap(), c(0.0));
        let (a, b) = (C64::new(0.3, 0.4), C64::new(-0.2, 0.7));
        let w = cross_term_weight(a, b, 0.6, 1.1).unwrap();
        let w2 = cross_term_weight(b, a, 0.6, 1.1).unwrap();
        assert!((w - w2.conj()).norm() < 1e-15);
        assert!(cross_term_weight(a, b, 1.0, 1.0).is_err());
        let params = ModelParams::new(200, FRAC_PI_3).unwrap();
        let (g, t, l) = (1e-4, 20.0, 100.0);
        let delta = dispersion(&params, 50);
        let scheme = CouplingScheme::local(1.0, 1.0, g);
        for k in (0..=100).filter(|k| !(45..=55).contains(k)) {
            let eps = dispersion(&params, k);
            let (a, b) = coupling_coefficients(&scheme, &params, k);
            let w = cross_term_weight(a, b, eps, delta).unwrap();
            let (gc, _) = averaged_rates(eps, delta, t, g, 1.0, 1.0, RateMode::ExactIntegral);
            assert!(g * g * w.norm() < 0.1 * l * gc, "k={k}");
        }
    }
}
