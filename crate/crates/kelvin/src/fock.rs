//! Exact per-block engine on the Fock space of one momentum block.
//!
//! Mode order inside a block is system first, then bath, then environments.
//! Generic blocks carry two Fock modes per site (k and −k), edge blocks one.

use nalgebra::DVector;

use crate::error::{domain, KelvinError, Result};
use crate::linalg::{c, eigenvalues, eigh, hermitize, kron, trace_norm_hermitian, unitary, unvec_row, vec_row, CMat, C64};
use crate::model::ModeBlock;

pub const TRACE_TOL: f64 = 1e-10;
pub const CP_TOL: f64 = 1e-9;
pub const UNIT_EIG_TOL: f64 = 1e-9;

/// Jordan–Wigner annihilation operators c_0 … c_{n−1}; mode 0 is the most significant bit.
pub fn annihilators(n: usize) -> Vec<CMat> {
    let dim = 1usize << n;
    (0..n)
        .map(|m| {
            let bit = n - 1 - m;
            let mut op = CMat::zeros(dim, dim);
            for s in 0..dim {
                if s >> bit & 1 == 1 {
                    let before = (s >> (bit + 1)).count_ones();
                    let sign = if before % 2 == 0 { 1.0 } else { -1.0 };
                    op[(s & !(1 << bit), s)] = c(sign);
                }
            }
            op
        })
        .collect()
}

pub fn number_op(n: usize, m: usize) -> CMat {
    let a = &annihilators(n)[m];
    a.adjoint() * a
}

/// (−1)^N on n modes.
pub fn parity_op(n: usize) -> CMat {
    let dim = 1usize << n;
    CMat::from_fn(dim, dim, |i, j| {
        if i != j {
            c(0.0)
        } else if i.count_ones() % 2 == 0 {
            c(1.0)
        } else {
            c(-1.0)
        }
    })
}

#[derive(Debug, Clone)]
pub struct FockBlock {
    pub n_modes: usize,
    pub n_system: usize,
    pub hamiltonian: CMat,
    pub mode_labels: Vec<String>,
}

impl FockBlock {
    pub fn parity_residual(&self) -> f64 {
        let p = parity_op(self.n_modes);
        (&p * &self.hamiltonian - &self.hamiltonian * &p).camax()
    }
}

/// H = Σ α_i† h_ij α_j with α = (c_0, c_1†, c_2, c_3†, …) for generic blocks
/// and α = (c_0, c_0†, c_1, c_1†, …) for edge blocks.
pub fn second_quantize(block: &ModeBlock) -> FockBlock {
    let sites = block.sites();
    let names = ["a", "b", "e1", "e2"];
    let (n_modes, h, labels, alpha): (usize, CMat, Vec<String>, Vec<CMat>) = if block.is_edge() {
        let ops = annihilators(sites);
        let alpha = ops.iter().flat_map(|o| [o.clone(), o.adjoint()]).collect();
        let labels = names[..sites].iter().map(|s| format!("{s}_{}", block.k)).collect();
        (sites, block.generator() * c(0.5), labels, alpha)
    } else {
        let ops = annihilators(2 * sites);
        let alpha = (0..2 * sites)
            .map(|i| if i % 2 == 0 { ops[i].clone() } else { ops[i].adjoint() })
            .collect();
        let labels = names[..sites]
            .iter()
            .flat_map(|s| [format!("{s}_{}", block.k), format!("{s}_-{}", block.k)])
            .collect();
        (2 * sites, block.h_sb.clone(), labels, alpha)
    };
    let dim = 1usize << n_modes;
    let mut ham = CMat::zeros(dim, dim);
    let daggers: Vec<CMat> = alpha.iter().map(|a| a.adjoint()).collect();
    for i in 0..alpha.len() {
        for j in 0..alpha.len() {
            if h[(i, j)] != c(0.0) {
                ham += &daggers[i] * &alpha[j] * h[(i, j)];
            }
        }
    }
    let n_system = if block.is_edge() { 1 } else { 2 };
    FockBlock { n_modes, n_system, hamiltonian: hermitize(&ham), mode_labels: labels }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityBlock {
    pub matrix: CMat,
    pub k: usize,
}

impl DensityBlock {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn vacuum(k: usize, dim: usize) -> Self {
        let mut m = CMat::zeros(dim, dim);
        m[(0, 0)] = c(1.0);
        Self { matrix: m, k }
    }

    pub fn most_excited(k: usize, dim: usize) -> Self {
        let mut m = CMat::zeros(dim, dim);
        m[(dim - 1, dim - 1)] = c(1.0);
        Self { matrix: m, k }
    }

    pub fn maximally_mixed(k: usize, dim: usize) -> Self {
        Self { matrix: CMat::identity(dim, dim) * c(1.0 / dim as f64), k }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d != 2 && d != 4 {
            return Err(KelvinError::Validation(format!("density block must be 2x2 or 4x4, got {d}")));
        }
        if crate::linalg::hermiticity_residual(&self.matrix) > 1e-12 {
            return Err(KelvinError::Validation("density block not hermitian".into()));
        }
        if (self.matrix.trace() - c(1.0)).norm() > TRACE_TOL {
            return Err(KelvinError::Validation("density block trace != 1".into()));
        }
        let (ev, _) = eigh(&self.matrix);
        if ev.iter().any(|&x| x < -1e-10) {
            return Err(KelvinError::Validation("density block not positive".into()));
        }
        if parity_coherence(&self.matrix) > 1e-12 {
            return Err(KelvinError::Validation("density block mixes parity sectors".into()));
        }
        Ok(())
    }
}

/// Largest matrix element connecting different parity sectors.
pub fn parity_coherence(m: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if (i.count_ones() + j.count_ones()) % 2 == 1 {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// Linear map on row-major vectorized density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub matrix: CMat,
    pub dim: usize,
}

impl Superoperator {
    pub fn identity(dim: usize) -> Self {
        Self { matrix: CMat::identity(dim * dim, dim * dim), dim }
    }

    pub fn from_kraus(ops: &[CMat]) -> Self {
        let d = ops[0].nrows();
        let mut m = CMat::zeros(d * d, d * d);
        for k in ops {
            m += kron(k, &k.map(|z| z.conj()));
        }
        Self { matrix: m, dim: d }
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        unvec_row(&(&self.matrix * vec_row(rho)), self.dim)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &Superoperator) -> Superoperator {
        Superoperator { matrix: &self.matrix * &first.matrix, dim: self.dim }
    }

    /// max over basis inputs |tr S(|i⟩⟨j|) − δ_ij|.
    pub fn trace_error(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            let mut tr = C64::new(0.0, 0.0);
            for a in 0..d {
                tr += self.matrix[(a * d + a, col)];
            }
            let want = if col / d == col % d { 1.0 } else { 0.0 };
            worst = worst.max((tr - c(want)).norm());
        }
        worst
    }

    pub fn choi(&self) -> CMat {
        let d = self.dim;
        CMat::from_fn(d * d, d * d, |r, s| {
            let (i, a) = (r / d, r % d);
            let (j, b) = (s / d, s % d);
            self.matrix[(a * d + b, i * d + j)]
        })
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        let (ev, _) = eigh(&hermitize(&self.choi()));
        ev.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Diamond-norm surrogate: max over basis inputs |i⟩⟨j| of the trace norm
    /// of the difference. Inputs coupling different parity sectors are
    /// skipped; they are not physical states.
    pub fn distance(&self, other: &Superoperator) -> f64 {
        let d = self.dim;
        let diff = &self.matrix - &other.matrix;
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            if ((col / d).count_ones() + (col % d).count_ones()) % 2 == 1 {
                continue;
            }
            let m = unvec_row(&diff.column(col).into_owned(), d);
            let sv = m.singular_values();
            worst = worst.max(sv.iter().sum());
        }
        worst
    }

    /// Restriction to the parity-preserving operator subspace, plus the kept indices.
    pub fn parity_sector(&self) -> (CMat, Vec<usize>) {
        let d = self.dim;
        let idx: Vec<usize> = (0..d * d)
            .filter(|&v| ((v / d).count_ones() + (v % d).count_ones()) % 2 == 0)
            .collect();
        let m = CMat::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])]);
        (m, idx)
    }
}

/// Diagonal product state of the non-system modes with given excitation probabilities.
fn environment_weights(excitations: &[f64]) -> Vec<f64> {
    let n = excitations.len();
    (0..1usize << n)
        .map(|s| {
            (0..n)
                .map(|m| {
                    let p = excitations[m];
                    if s >> (n - 1 - m) & 1 == 1 {
                        p
                    } else {
                        1.0 - p
                    }
                })
                .product()
        })
        .collect()
}

/// S(ρ) = Tr_rest[U (ρ ⊗ ρ_rest) U†] with ρ_rest diagonal.
pub fn unitary_channel(fock: &FockBlock, t: f64, excitations: &[f64]) -> Superoperator {
    // eigendecomposition loses ~1e-11 on the heavily degenerate 256-dim spectra
    let u = if fock.hamiltonian.nrows() <= 16 {
        unitary(&fock.hamiltonian, t)
    } else {
        (&fock.hamiltonian * (crate::linalg::I * -t)).exp()
    };
    let ds = 1usize << fock.n_system;
    let nr = fock.n_modes - fock.n_system;
    let dr = 1usize << nr;
    assert_eq!(excitations.len(), nr);
    let w = environment_weights(excitations);
    let mut kraus = Vec::new();
    for (b, &pb) in w.iter().enumerate() {
        if pb <= 0.0 {
            continue;
        }
        let sq = pb.sqrt();
        for bp in 0..dr {
            let k = CMat::from_fn(ds, ds, |i, j| u[(i * dr + bp, j * dr + b)] * sq);
            if k.camax() > 0.0 {
                kraus.push(k);
            }
        }
    }
    Superoperator::from_kraus(&kraus)
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return domain(format!("cycle time must be finite and >= 0, got {t}"));
    }
    Ok(())
}

/// One cooling cycle with every bath mode prepared with excitation `bath_excitation`.
pub fn exact_cycle_map(block: &ModeBlock, t: f64, bath_excitation: f64) -> Result<Superoperator> {
    check_time(t)?;
    if !(0.0..=1.0).contains(&bath_excitation) {
        return domain(format!("bath excitation {bath_excitation} outside [0, 1]"));
    }
    if block.sites() != 2 {
        return domain("exact_cycle_map expects a system+bath block");
    }
    let fock = second_quantize(block);
    let nr = fock.n_modes - fock.n_system;
    Ok(unitary_channel(&fock, t, &vec![bath_excitation; nr]))
}

/// Per-mode gain/loss noise e^{L_E t} on the system modes alone.
pub fn system_noise_channel(n_system: usize, kappa: f64, t: f64) -> Superoperator {
    let ops = annihilators(n_system);
    let d = 1usize << n_system;
    let mut jumps = Vec::new();
    for a in &ops {
        jumps.push(a.clone());
        jumps.push(a.adjoint());
    }
    let lv = lindbladian(&CMat::zeros(d, d), &jumps, kappa);
    Superoperator { matrix: (lv * c(t)).exp(), dim: d }
}

/// Row-major Liouvillian of −i[H, ·] + κ Σ (LρL† − ½{L†L, ρ}).
pub fn lindbladian(h: &CMat, jumps: &[CMat], kappa: f64) -> CMat {
    let d = h.nrows();
    let id = CMat::identity(d, d);
    let i = crate::linalg::I;
    let mut l = (kron(h, &id) - kron(&id, &h.transpose())) * (-i);
    for j in jumps {
        let jd = j.adjoint();
        let jdj = &jd * j;
        l += (kron(j, &j.map(|z| z.conj())) - kron(&jdj, &id) * c(0.5) - kron(&id, &jdj.transpose()) * c(0.5)) * c(kappa);
    }
    l
}

/// Noisy cycle: system noise for time t, then the exact cycle with bath excitation (1 − e^{−2κt})/2.
pub fn noisy_cycle_map(block: &ModeBlock, t: f64, kappa: f64) -> Result<Superoperator> {
    check_time(t)?;
    if !kappa.is_finite() || kappa < 0.0 {
        return domain(format!("kappa must be >= 0, got {kappa}"));
    }
    let p = 0.5 * (1.0 - (-2.0 * kappa * t).exp());
    let cyc = exact_cycle_map(block, t, p)?;
    if kappa == 0.0 {
        return Ok(cyc);
    }
    let n_system = if block.is_edge() { 1 } else { 2 };
    Ok(cyc.after(&system_noise_channel(n_system, kappa, t)))
}

/// Unitary cycle with a pure bath, then system noise for time t. Equal to
/// [`noisy_cycle_map`] because the noise commutes with the quadratic
/// evolution and bath noise after the cycle is traced away.
pub fn noisy_cycle_map_unitary_first(block: &ModeBlock, t: f64, kappa: f64) -> Result<Superoperator> {
    let cyc = exact_cycle_map(block, t, 0.0)?;
    let n_system = if block.is_edge() { 1 } else { 2 };
    Ok(system_noise_channel(n_system, kappa, t).after(&cyc))
}

/// Brute-force reference: propagate the joint system+bath state under
/// −i[H, ·] plus gain/loss noise on every mode, then trace out the bath.
pub fn joint_liouvillian_cycle(block: &ModeBlock, t: f64, kappa: f64) -> Result<Superoperator> {
    check_time(t)?;
    let fock = second_quantize(block);
    let n = fock.n_modes;
    let ops = annihilators(n);
    let mut jumps = Vec::new();
    for a in &ops {
        jumps.push(a.clone());
        jumps.push(a.adjoint());
    }
    let prop = (lindbladian(&fock.hamiltonian, &jumps, kappa) * c(t)).exp();
    let ds = 1usize << fock.n_system;
    let dr = 1usize << (n - fock.n_system);
    let dim = ds * dr;
    let mut s = CMat::zeros(ds * ds, ds * ds);
    for i in 0..ds {
        for j in 0..ds {
            let mut v = DVector::zeros(dim * dim);
            v[(i * dr) * dim + j * dr] = c(1.0);
            let out = unvec_row(&(&prop * v), dim);
            for a in 0..ds {
                for b in 0..ds {
                    let mut acc = C64::new(0.0, 0.0);
                    for r in 0..dr {
                        acc += out[(a * dr + r, b * dr + r)];
                    }
                    s[(a * ds + b, i * ds + j)] = acc;
                }
            }
        }
    }
    Ok(Superoperator { matrix: s, dim: ds })
}

/// Cycle with finite environments E1, E2 (block from `block_hamiltonian_env`).
pub fn finite_environment_map(block: &ModeBlock, t: f64, p_e: f64) -> Result<Superoperator> {
    check_time(t)?;
    if !(-1.0..=1.0).contains(&p_e) {
        return domain(format!("p_E must lie in [-1, 1], got {p_e}"));
    }
    if block.sites() != 4 {
        return domain("finite_environment_map expects a block with environments");
    }
    let fock = second_quantize(block);
    let q = 0.5 * (1.0 - p_e);
    let per_site = if block.is_edge() { 1 } else { 2 };
    let mut exc = vec![0.0; per_site];
    exc.extend(std::iter::repeat_n(q, 2 * per_site));
    Ok(unitary_channel(&fock, t, &exc))
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityBlock,
    pub alpha: f64,
    /// |λ₂| and how many eigenvalues share it.
    pub lambda2: f64,
    pub lambda2_multiplicity: usize,
    pub residual: f64,
}

/// Unique fixed point and mixing rate α = −log|λ₂| on the parity-preserving sector.
pub fn steady_state(s: &Superoperator, k: usize) -> Result<SteadyState> {
    let d = s.dim;
    let (sector, idx) = s.parity_sector();
    let mut ev: Vec<f64> = eigenvalues(&sector).into_iter().map(|z| (z - c(1.0)).norm()).collect();
    let units = ev.iter().filter(|&&x| x < UNIT_EIG_TOL).count();
    if units != 1 {
        return Err(KelvinError::NonUniqueFixedPoint { dim: units });
    }
    let mut mags: Vec<f64> = eigenvalues(&sector).into_iter().map(|z| z.norm()).collect();
    let pos = ev
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    mags.remove(pos);
    ev.clear();
    mags.sort_by(|a, b| b.total_cmp(a));
    let lambda2 = mags.first().copied().unwrap_or(0.0);
    let multiplicity = mags.iter().filter(|&&m| (m - lambda2).abs() <= 1e-9 * lambda2.max(1e-300)).count();

    // (S − I) v = 0 with the first row replaced by the trace functional
    let n = idx.len();
    let mut m = sector.clone() - CMat::identity(n, n);
    let mut rhs = DVector::zeros(n);
    for j in 0..n {
        let (a, b) = (idx[j] / d, idx[j] % d);
        m[(0, j)] = if a == b { c(1.0) } else { c(0.0) };
    }
    rhs[0] = c(1.0);
    let v = m.lu().solve(&rhs).ok_or(KelvinError::NonUniqueFixedPoint { dim: 2 })?;
    let mut full = DVector::zeros(d * d);
    for (j, &i) in idx.iter().enumerate() {
        full[i] = v[j];
    }
    let mut rho = hermitize(&unvec_row(&full, d));
    let tr = rho.trace();
    rho /= tr;
    let residual = trace_norm_hermitian(&hermitize(&(s.apply(&rho) - &rho)));
    let alpha = if lambda2 > 0.0 { -lambda2.ln() } else { f64::INFINITY };
    Ok(SteadyState {
        rho: DensityBlock { matrix: rho, k },
        alpha,
        lambda2,
        lambda2_multiplicity: multiplicity,
        residual,
    })
}

/// Occupation of Fock mode m in a block density matrix.
pub fn occupation(rho: &CMat, m: usize) -> f64 {
    let n = rho.nrows().trailing_zeros() as usize;
    (number_op(n, m) * rho).trace().re
}

/// E_k = ε(n_k + n_{−k} − 1) for generic blocks and (ε/2)(2n − 1) at the edges.
/// e_k = (E_k + ε_eff)/ε_eff with ε_eff = ε or ε/2; `None` when ε = 0.
pub fn block_energy(rho: &DensityBlock, epsilon: f64) -> (f64, Option<f64>) {
    let (e, eff) = if rho.dim() == 2 {
        let n = occupation(&rho.matrix, 0);
        (0.5 * epsilon * (2.0 * n - 1.0), 0.5 * epsilon)
    } else {
        let n = occupation(&rho.matrix, 0) + occupation(&rho.matrix, 1);
        (epsilon * (n - 1.0), epsilon)
    };
    let rel = if eff > 0.0 { Some((e + eff) / eff) } else { None };
    (e, rel)
}

/// Overlap with the block ground state (Bogoliubov vacuum).
pub fn fidelity(rho: &DensityBlock) -> f64 {
    rho.matrix[(0, 0)].re
}

/// Trace distance ‖ρ − σ‖₁.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    trace_norm_hermitian(&hermitize(&(a - b)))
}
