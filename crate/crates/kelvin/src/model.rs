//! Dispersion, Bogoliubov frame, coupling coefficients and per-mode block
//! Hamiltonians of the chain.
//!
//! Each momentum pair (k, −k) is described in the operator basis
//! (â_k, â_{−k}†, b_k, b_{−k}†). For the self-conjugate momenta k = 0 and
//! k = N/2 the block carries weight ½.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{domain, KelvinError, Result};
use crate::linalg::{c, CMat, C64, I};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n: usize,
    pub theta: f64,
}

impl ModelParams {
    pub fn new(n: usize, theta: f64) -> Result<Self> {
        let p = Self { n, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return domain(format!("N must be even and >= 2, got {}", self.n));
        }
        if !self.theta.is_finite() {
            return domain("theta must be finite");
        }
        Ok(())
    }

    /// Momenta labelling the independent blocks, 0..=N/2.
    pub fn block_momenta(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.n / 2
    }

    pub fn is_edge(&self, k: usize) -> bool {
        k == 0 || 2 * k == self.n
    }

    /// Largest mode energy √(1 + |sin 2θ|), reached at k = 0 for θ ∈ [0, π/2].
    pub fn eps_max(&self) -> f64 {
        (1.0 + (2.0 * self.theta).sin().abs()).sqrt()
    }

    /// Smallest mode energy √(1 − |sin 2θ|).
    pub fn eps_min(&self) -> f64 {
        (1.0 - (2.0 * self.theta).sin().abs()).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingScheme {
    pub nn: f64,
    pub lambda: BTreeMap<i32, f64>,
    pub mu: BTreeMap<i32, f64>,
    pub g: f64,
}

impl CouplingScheme {
    pub fn new(
        nn: f64,
        lambda: BTreeMap<i32, f64>,
        mu: BTreeMap<i32, f64>,
        g: f64,
    ) -> Result<Self> {
        let s = Self { nn, lambda, mu, g };
        s.validate()?;
        Ok(s)
    }

    /// On-site coupling only (nn = 0).
    pub fn local(lambda0: f64, mu0: f64, g: f64) -> Self {
        Self {
            nn: 0.0,
            lambda: BTreeMap::from([(0, lambda0)]),
            mu: BTreeMap::from([(0, mu0)]),
            g,
        }
    }

    /// Build from coupling lists aligned with [`Self::range`].
    pub fn from_lists(nn: f64, lambda: &[f64], mu: &[f64], g: f64) -> Result<Self> {
        let js = range_of(nn)?;
        if lambda.len() != js.len() || mu.len() != js.len() {
            return Err(KelvinError::Validation(format!(
                "expected {} couplings for nn = {nn}",
                js.len()
            )));
        }
        Self::new(
            nn,
            js.iter().copied().zip(lambda.iter().copied()).collect(),
            js.iter().copied().zip(mu.iter().copied()).collect(),
            g,
        )
    }

    pub fn range(&self) -> Vec<i32> {
        range_of(self.nn).unwrap_or_default()
    }

    pub fn lambda(&self, j: i32) -> f64 {
        self.lambda.get(&j).copied().unwrap_or(0.0)
    }

    pub fn mu(&self, j: i32) -> f64 {
        self.mu.get(&j).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coupling(&self) -> f64 {
        self.lambda
            .values()
            .chain(self.mu.values())
            .fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let js = range_of(self.nn)?;
        for (name, map) in [("lambda", &self.lambda), ("mu", &self.mu)] {
            for (j, v) in map {
                if !js.contains(j) {
                    return Err(KelvinError::Validation(format!(
                        "{name}_{j} outside coupling range for nn = {}",
                        self.nn
                    )));
                }
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(KelvinError::Validation(format!(
                        "{name}_{j} = {v} must lie in [-1, 1]"
                    )));
                }
            }
        }
        if !self.g.is_finite() || self.g < 0.0 {
            return Err(KelvinError::Validation(format!("g = {} must be >= 0", self.g)));
        }
        Ok(())
    }
}

/// Allowed coupling offsets j ∈ {−⌊nn⌋, …, ⌈nn⌉}.
pub fn range_of(nn: f64) -> Result<Vec<i32>> {
    if !nn.is_finite() || nn < 0.0 || (2.0 * nn).fract() != 0.0 {
        return Err(KelvinError::Validation(format!(
            "nn = {nn} must be a non-negative integer or half-integer"
        )));
    }
    let lo = -(nn.floor() as i32);
    let hi = nn.ceil() as i32;
    Ok((lo..=hi).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub delta: f64,
    pub cycle_time_mean: f64,
}

impl BathSpec {
    pub fn new(delta: f64, cycle_time_mean: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return domain(format!("bath splitting must be > 0, got {delta}"));
        }
        if !(cycle_time_mean.is_finite() && cycle_time_mean > 0.0) {
            return domain(format!("cycle time must be > 0, got {cycle_time_mean}"));
        }
        Ok(Self { delta, cycle_time_mean })
    }
}

/// Finite environments attached to system (E1) and bath (E2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kappa_prime: f64,
    pub delta_e: f64,
    pub p_e: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_prime.is_finite() && self.kappa_prime >= 0.0) {
            return domain(format!("kappa' must be >= 0, got {}", self.kappa_prime));
        }
        if !self.delta_e.is_finite() {
            return domain("environment splitting must be finite");
        }
        if !(-1.0..=1.0).contains(&self.p_e) {
            return domain(format!("p_E must lie in [-1, 1], got {}", self.p_e));
        }
        Ok(())
    }
}

/// How block momenta are relabelled by [`canonicalize_theta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relabel {
    Identity,
    /// k → N/2 − k
    Reflect,
}

impl Relabel {
    pub fn apply(self, n: usize, k: usize) -> usize {
        match self {
            Relabel::Identity => k,
            Relabel::Reflect => n / 2 - k,
        }
    }
}

/// Elementary symmetries of the chain, each paired with its coupling transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// θ → −θ: λ_j, μ_j → (−1)^j μ_j, (−1)^j λ_j; k → N/2 − k.
    Negate,
    /// θ → θ + π: λ_j ↔ μ_j.
    ShiftPi,
    /// θ → π − θ: λ_j, μ_j → (−1)^j λ_j, (−1)^j μ_j; k → N/2 − k.
    Mirror,
}

fn alternate(map: &BTreeMap<i32, f64>) -> BTreeMap<i32, f64> {
    map.iter()
        .map(|(&j, &v)| (j, if j.rem_euclid(2) == 1 { -v } else { v }))
        .collect()
}

pub fn apply_symmetry(sym: Symmetry, theta: f64, scheme: &CouplingScheme) -> (f64, CouplingScheme, Relabel) {
    let mut s = scheme.clone();
    match sym {
        Symmetry::Negate => {
            s.lambda = alternate(&scheme.mu);
            s.mu = alternate(&scheme.lambda);
            (-theta, s, Relabel::Reflect)
        }
        Symmetry::ShiftPi => {
            s.lambda = scheme.mu.clone();
            s.mu = scheme.lambda.clone();
            (theta + PI, s, Relabel::Identity)
        }
        Symmetry::Mirror => {
            s.lambda = alternate(&scheme.lambda);
            s.mu = alternate(&scheme.mu);
            (PI - theta, s, Relabel::Reflect)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Canonical {
    pub theta: f64,
    pub scheme: CouplingScheme,
    /// Block k of the canonical system corresponds to block `relabel.apply(N, k)` of the original.
    pub relabel: Relabel,
}

/// Map θ ∈ [−π/2, 3π/2] into [0, π/2] with the matching coupling transform.
pub fn canonicalize_theta(theta_raw: f64, scheme: &CouplingScheme) -> Result<Canonical> {
    if !theta_raw.is_finite() || !(-FRAC_PI_2..=1.5 * PI).contains(&theta_raw) {
        return domain(format!("theta = {theta_raw} outside [-π/2, 3π/2]"));
    }
    let (theta, scheme, relabel) = if theta_raw < 0.0 {
        apply_symmetry(Symmetry::Negate, theta_raw, scheme)
    } else if theta_raw <= FRAC_PI_2 {
        (theta_raw, scheme.clone(), Relabel::Identity)
    } else if theta_raw <= PI {
        apply_symmetry(Symmetry::Mirror, theta_raw, scheme)
    } else {
        let (t, s, r) = apply_symmetry(Symmetry::ShiftPi, theta_raw, scheme);
        (t - 2.0 * PI, s, r)
    };
    Ok(Canonical { theta: theta.clamp(0.0, FRAC_PI_2), scheme, relabel })
}

fn momentum_angle(n: usize, k: f64) -> f64 {
    2.0 * PI * k / n as f64
}

/// ε_k = √(1 + sin 2θ cos(2πk/N)).
pub fn dispersion(params: &ModelParams, k: i64) -> f64 {
    dispersion_at(params, k as f64)
}

/// Dispersion at a real-valued momentum label.
pub fn dispersion_at(params: &ModelParams, k: f64) -> f64 {
    let x = momentum_angle(params.n, k);
    (1.0 + (2.0 * params.theta).sin() * x.cos()).max(0.0).sqrt()
}

/// (w_k, r_k): entries of the 2×2 Nambu matrix [[w, r], [r, −w]].
pub fn nambu_entries(params: &ModelParams, k: i64) -> (f64, f64) {
    let n = params.n as i64;
    let x = momentum_angle(params.n, k as f64);
    let (s, co) = params.theta.sin_cos();
    let w = s + co * x.cos();
    let r = if (2 * k).rem_euclid(n) == 0 { 0.0 } else { co * x.sin() };
    (w, r)
}

/// Bogoliubov angle φ_k diagonalising the Nambu matrix with +ε_k first.
pub fn bogoliubov_angle(params: &ModelParams, k: i64) -> f64 {
    let (w, r) = nambu_entries(params, k);
    if r == 0.0 {
        return if w >= 0.0 { 0.0 } else { FRAC_PI_2 };
    }
    let e = dispersion(params, k);
    if w >= 0.0 {
        // tan φ = (ε − w)/r = r/(ε + w) avoids cancellation when w ≈ ε
        r.abs().atan2(r.signum() * (e + w))
    } else {
        (e - w).atan2(r)
    }
}

/// max |Uᵀ H̃ U − diag(ε, −ε)| for the rotation U = [[cos φ, −sin φ], [sin φ, cos φ]].
pub fn diagonalization_residual(params: &ModelParams, k: i64) -> f64 {
    let (w, r) = nambu_entries(params, k);
    let e = dispersion(params, k);
    let (s, co) = bogoliubov_angle(params, k).sin_cos();
    let d00 = w * (co * co - s * s) + 2.0 * r * co * s;
    let d11 = -d00;
    let d01 = r * (co * co - s * s) - 2.0 * w * co * s;
    (d00 - e).abs().max((d11 + e).abs()).max(d01.abs())
}

/// E_GS = −½ Σ_{k=−N/2+1}^{N/2} ε_k.
pub fn ground_state_energy(params: &ModelParams) -> f64 {
    let h = (params.n / 2) as i64;
    -0.5 * (-h + 1..=h).map(|k| dispersion(params, k)).sum::<f64>()
}

/// f(θ) = (1/2π) ∫₀^π √(1 + sin 2θ cos x) dx.
pub fn energy_density_limit(theta: f64) -> f64 {
    let s = (2.0 * theta).sin();
    let f = |x: f64| (1.0 + s * x.cos()).max(0.0).sqrt();
    adaptive_simpson(&f, 0.0, PI, 1e-13, 50) / (2.0 * PI)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)
}

/// (A_k, B_k) = Σ_j (cos φ λ_j + i sin φ μ_j, −sin φ λ_j + i cos φ μ_j) e^{−2πijk/N}.
pub fn coupling_coefficients(scheme: &CouplingScheme, params: &ModelParams, k: i64) -> (C64, C64) {
    let (s, co) = bogoliubov_angle(params, k).sin_cos();
    coefficients_with_angle(scheme, params.n, k as f64, co, s)
}

fn coefficients_with_angle(scheme: &CouplingScheme, n: usize, k: f64, co: f64, s: f64) -> (C64, C64) {
    let mut a = C64::new(0.0, 0.0);
    let mut b = C64::new(0.0, 0.0);
    for j in scheme.range() {
        let (l, m) = (scheme.lambda(j), scheme.mu(j));
        if l == 0.0 && m == 0.0 {
            continue;
        }
        let ph = C64::from_polar(1.0, -momentum_angle(n, j as f64 * k));
        a += (c(co * l) + I * (s * m)) * ph;
        b += (c(-s * l) + I * (co * m)) * ph;
    }
    (a, b)
}

/// Per-mode single-particle block.
///
/// `h_sb` is 2·sites square and already multiplied by `weight`. Sites are
/// ordered system, bath and, when attached, the environments E1 and E2.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBlock {
    pub k: usize,
    pub epsilon: f64,
    pub phi: f64,
    pub h_sb: CMat,
    pub weight: f64,
    pub a_coeff: C64,
    pub b_coeff: C64,
    pub delta: f64,
}

impl ModeBlock {
    pub fn is_edge(&self) -> bool {
        self.weight < 1.0
    }

    pub fn sites(&self) -> usize {
        self.h_sb.nrows() / 2
    }

    /// ±1 relating the second basis element of an edge block to â†.
    pub fn nambu_sign(&self) -> f64 {
        let (s, co) = self.phi.sin_cos();
        if co - s >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Single-particle generator of the Heisenberg evolution α(t) = e^{−iGt} α.
    ///
    /// Generic blocks: G = h. Edge blocks use the Nambu basis (â, â†, b, b†, …)
    /// where H = α†hα double counts, so G = 2h after fixing the sign of â†.
    pub fn generator(&self) -> CMat {
        if !self.is_edge() {
            return self.h_sb.clone();
        }
        let mut g = self.h_sb.clone() * c(2.0);
        let s = self.nambu_sign();
        if s < 0.0 {
            for j in 0..g.ncols() {
                g[(1, j)] = -g[(1, j)];
            }
            for i in 0..g.nrows() {
                g[(i, 1)] = -g[(i, 1)];
            }
        }
        g
    }

    /// The same block with the system Hamiltonian switched off during the
    /// evolution (dissipative state preparation). Energies still use ε_k.
    pub fn without_system_hamiltonian(&self) -> ModeBlock {
        let mut b = self.clone();
        b.h_sb[(0, 0)] = c(0.0);
        b.h_sb[(1, 1)] = c(0.0);
        b
    }

    /// System part of the weighted block.
    pub fn h_s(&self) -> CMat {
        self.h_sb.view((0, 0), (2, 2)).into_owned()
    }
}

fn pair_block(diag: f64) -> [[C64; 2]; 2] {
    [[c(diag), c(0.0)], [c(0.0), c(-diag)]]
}

fn coupling_entries(g: f64, a: C64, b: C64) -> [[C64; 2]; 2] {
    [[a * g, b * g], [b * g, -a * g]]
}

fn place(h: &mut CMat, si: usize, sj: usize, m: [[C64; 2]; 2]) {
    for i in 0..2 {
        for j in 0..2 {
            h[(2 * si + i, 2 * sj + j)] = m[i][j];
            if si != sj {
                h[(2 * sj + j, 2 * si + i)] = m[i][j].conj();
            }
        }
    }
}

/// 4×4 block [[ε,0,gA,gB],[0,−ε,gB,−gA],[gA*,gB*,Δ,0],[gB*,−gA*,0,−Δ]] × weight.
pub fn block_hamiltonian(
    params: &ModelParams,
    scheme: &CouplingScheme,
    bath: &BathSpec,
    k: usize,
) -> ModeBlock {
    build_block(params, scheme, bath.delta, None, k)
}

/// 8×8 block with environments E1 (coupled to the system) and E2 (coupled to the bath).
pub fn block_hamiltonian_env(
    params: &ModelParams,
    scheme: &CouplingScheme,
    bath: &BathSpec,
    env: &EnvSpec,
    k: usize,
) -> ModeBlock {
    build_block(params, scheme, bath.delta, Some(env), k)
}

pub(crate) fn build_block(
    params: &ModelParams,
    scheme: &CouplingScheme,
    delta: f64,
    env: Option<&EnvSpec>,
    k: usize,
) -> ModeBlock {
    let ki = k as i64;
    let epsilon = dispersion(params, ki);
    let phi = bogoliubov_angle(params, ki);
    let (a, b) = coupling_coefficients(scheme, params, ki);
    let weight = if params.is_edge(k) { 0.5 } else { 1.0 };
    let sites = if env.is_some() { 4 } else { 2 };
    let mut h = CMat::zeros(2 * sites, 2 * sites);
    place(&mut h, 0, 0, pair_block(epsilon));
    place(&mut h, 1, 1, pair_block(delta));
    place(&mut h, 0, 1, coupling_entries(scheme.g, a, b));
    if let Some(e) = env {
        let (s, co) = phi.sin_cos();
        place(&mut h, 2, 2, pair_block(e.delta_e));
        place(&mut h, 3, 3, pair_block(e.delta_e));
        place(&mut h, 0, 2, coupling_entries(e.kappa_prime, c(co), c(-s)));
        place(&mut h, 1, 3, coupling_entries(e.kappa_prime, c(1.0), c(0.0)));
    }
    ModeBlock {
        k,
        epsilon,
        phi,
        h_sb: h * c(weight),
        weight,
        a_coeff: a,
        b_coeff: b,
        delta,
    }
}

/// All blocks k = 0..=N/2.
pub fn all_blocks(params: &ModelParams, scheme: &CouplingScheme, bath: &BathSpec) -> Vec<ModeBlock> {
    params
        .block_momenta()
        .map(|k| block_hamiltonian(params, scheme, bath, k))
        .collect()
}
