//! Correlation-matrix engine for Gaussian block states.
//!
//! γ_ij = ½⟨[α_i, α_j†]⟩ in the block basis (â_k, â_{−k}†) for generic
//! blocks and (â, â†) at the edges. A cycle acts affinely on the 2×2 system
//! CM: γ → d·(A_S γ A_S† + A_SB γ_rest A_SB†), with d = e^{−2κt} under
//! gain/loss noise.

use nalgebra::DVector;

use crate::error::{KelvinError, Result};
use crate::fock::{DensityBlock, UNIT_EIG_TOL};
use crate::linalg::{c, eigenvalues, eigh, hermiticity_residual, kron, unitary, unvec_row, vec_row, CMat, C64, I};
use crate::model::ModeBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub matrix: CMat,
}

fn diag2(a: f64, b: f64) -> CMat {
    CMat::from_row_slice(2, 2, &[c(a), c(0.0), c(0.0), c(b)])
}

impl CorrelationMatrix {
    /// Bogoliubov vacuum (also the bath reset state).
    pub fn vacuum() -> Self {
        Self { matrix: diag2(0.5, -0.5) }
    }

    pub fn most_excited() -> Self {
        Self { matrix: diag2(-0.5, 0.5) }
    }

    pub fn maximally_mixed() -> Self {
        Self { matrix: CMat::zeros(2, 2) }
    }

    /// Single-site product state with excitation q per mode: (1 − 2q)·vacuum.
    pub fn thermal(q: f64) -> Self {
        Self { matrix: diag2(0.5 - q, q - 0.5) }
    }

    pub fn validate(&self) -> Result<()> {
        if hermiticity_residual(&self.matrix) > 1e-12 {
            return Err(KelvinError::Validation("correlation matrix not hermitian".into()));
        }
        let (ev, _) = eigh(&self.matrix);
        if ev.iter().any(|x| x.abs() > 0.5 + 1e-10) {
            return Err(KelvinError::Validation("correlation matrix spectrum outside [-1/2, 1/2]".into()));
        }
        Ok(())
    }

    /// (n_k, n_{−k}, ⟨â_k â_{−k}⟩); at the edges n_{−k} repeats n_k and the pairing is 0.
    pub fn occupations(&self, edge: bool) -> (f64, f64, C64) {
        let g = &self.matrix;
        let nk = 0.5 - g[(0, 0)].re;
        if edge {
            (nk, nk, c(0.0))
        } else {
            (nk, 0.5 + g[(1, 1)].re, g[(0, 1)])
        }
    }

    /// E_k = −tr(h_S γ) with the weighted system block.
    pub fn energy(&self, block: &ModeBlock) -> f64 {
        -(block.h_s() * &self.matrix).trace().re
    }

    pub fn fidelity(&self, edge: bool) -> f64 {
        let (a, b, p) = self.occupations(edge);
        if edge {
            1.0 - a
        } else {
            1.0 - a - b + a * b + p.norm_sqr()
        }
    }

    /// Density matrix in the Fock basis |n_k n_{−k}⟩ (generic) or |n⟩ (edge).
    pub fn to_density(&self, k: usize, edge: bool) -> DensityBlock {
        let (a, b, p) = self.occupations(edge);
        if edge {
            return DensityBlock { matrix: diag2(1.0 - a, a), k };
        }
        let p11 = a * b + p.norm_sqr();
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = c(1.0 - a - b + p11);
        m[(1, 1)] = c(b - p11);
        m[(2, 2)] = c(a - p11);
        m[(3, 3)] = c(p11);
        m[(3, 0)] = -p;
        m[(0, 3)] = -p.conj();
        DensityBlock { matrix: m, k }
    }

    /// Gaussian part of a block density matrix.
    pub fn from_density(rho: &DensityBlock) -> Self {
        let m = &rho.matrix;
        if rho.dim() == 2 {
            let n = m[(1, 1)].re;
            return Self { matrix: diag2(0.5 - n, n - 0.5) };
        }
        let nk = (m[(2, 2)] + m[(3, 3)]).re;
        let nm = (m[(1, 1)] + m[(3, 3)]).re;
        let p = -m[(3, 0)];
        Self {
            matrix: CMat::from_row_slice(2, 2, &[c(0.5 - nk), p, p.conj(), c(nm - 0.5)]),
        }
    }
}

/// Block-diagonal CM of everything that is not the system: bath, then environments.
pub fn rest_cm(sites: usize, p_e: f64) -> CMat {
    let n = 2 * (sites - 1);
    let mut m = CMat::zeros(n, n);
    for s in 0..sites - 1 {
        let scale = if s == 0 { 1.0 } else { p_e };
        m[(2 * s, 2 * s)] = c(0.5 * scale);
        m[(2 * s + 1, 2 * s + 1)] = c(-0.5 * scale);
    }
    m
}

/// System/rest partition of e^{−iGt}.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionBlocks {
    pub a_s: CMat,
    pub a_sb: CMat,
    pub a_bs: CMat,
    pub a_b: CMat,
}

impl EvolutionBlocks {
    pub fn from_unitary(u: &CMat) -> Self {
        let n = u.nrows();
        Self {
            a_s: u.view((0, 0), (2, 2)).into_owned(),
            a_sb: u.view((0, 2), (2, n - 2)).into_owned(),
            a_bs: u.view((2, 0), (n - 2, 2)).into_owned(),
            a_b: u.view((2, 2), (n - 2, n - 2)).into_owned(),
        }
    }

    pub fn assemble(&self) -> CMat {
        let n = 2 + self.a_b.nrows();
        let mut u = CMat::zeros(n, n);
        u.view_mut((0, 0), (2, 2)).copy_from(&self.a_s);
        u.view_mut((0, 2), (2, n - 2)).copy_from(&self.a_sb);
        u.view_mut((2, 0), (n - 2, 2)).copy_from(&self.a_bs);
        u.view_mut((2, 2), (n - 2, n - 2)).copy_from(&self.a_b);
        u
    }

    pub fn unitarity_residual(&self) -> f64 {
        let u = self.assemble();
        let n = u.nrows();
        (&u * u.adjoint() - CMat::identity(n, n)).camax()
    }

    /// Columns of A_SB belonging to non-system site `s` (1 = bath, 2 = E1, 3 = E2).
    pub fn coupling_to(&self, s: usize) -> CMat {
        self.a_sb.view((0, 2 * (s - 1)), (2, 2)).into_owned()
    }
}

pub fn evolution_blocks(block: &ModeBlock, t: f64) -> EvolutionBlocks {
    EvolutionBlocks::from_unitary(&unitary(&block.generator(), t))
}

/// γ(t) = e^{−iGt} γ e^{iGt} for the single-particle generator G of the block.
pub fn evolve_cm(gamma: &CMat, generator: &CMat, t: f64) -> CMat {
    let u = unitary(generator, t);
    &u * gamma * u.adjoint()
}

/// A_S γ_S A_S† + A_SB γ_rest A_SB†.
pub fn cycle_map_cm(gamma_s: &CorrelationMatrix, blocks: &EvolutionBlocks, gamma_rest: &CMat) -> CorrelationMatrix {
    let m = &blocks.a_s * &gamma_s.matrix * blocks.a_s.adjoint() + &blocks.a_sb * gamma_rest * blocks.a_sb.adjoint();
    CorrelationMatrix { matrix: m }
}

/// Affine action vec(γ) → lin·vec(γ) + off on row-major vectorized 2×2 CMs.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCm {
    pub lin: CMat,
    pub off: DVector<C64>,
    /// 1 − lin[0,0] and 1 − lin[3,3], carried separately. At weak coupling
    /// these are O(g²) and would lose most digits if formed by subtraction.
    pub slack: [C64; 2],
}

impl AffineCm {
    pub fn identity() -> Self {
        Self::new(CMat::identity(4, 4), DVector::zeros(4))
    }

    /// Slack taken directly from `lin`.
    pub fn new(lin: CMat, off: DVector<C64>) -> Self {
        let slack = [c(1.0) - lin[(0, 0)], c(1.0) - lin[(3, 3)]];
        Self { lin, off, slack }
    }

    pub fn from_cycle(blocks: &EvolutionBlocks, gamma_rest: &CMat, damping: f64) -> Self {
        let a = &blocks.a_s;
        let inj = &blocks.a_sb * gamma_rest * blocks.a_sb.adjoint();
        let mut m = Self::new(kron(a, &a.map(|z| z.conj())) * c(damping), vec_row(&inj) * c(damping));
        // For a unitary propagator 1 − |A_ii|² is the weight of the rest of row i.
        let undamped = if damping < 1.0 { -damping.ln().exp_m1() } else { 1.0 - damping };
        for i in 0..2 {
            let rest = a[(i, 1 - i)].norm_sqr() + blocks.a_sb.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>();
            if (a[(i, i)].norm_sqr() + rest - 1.0).abs() < 1e-12 {
                m.slack[i] = c(undamped + damping * rest);
            }
        }
        m
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &AffineCm) -> AffineCm {
        let lin = &next.lin * &self.lin;
        let mut slack = [c(0.0); 2];
        for (s, i) in [0usize, 3].into_iter().enumerate() {
            // 1 − Σ_m n[i,m]·p[m,i] = (1 − n_ii) + n_ii(1 − p_ii) − Σ_{m≠i} n[i,m]·p[m,i]
            let cross: C64 = (0..4).filter(|&m| m != i).map(|m| next.lin[(i, m)] * self.lin[(m, i)]).sum();
            slack[s] = next.slack[s] + next.lin[(i, i)] * self.slack[s] - cross;
        }
        AffineCm { lin, off: &next.lin * &self.off + &next.off, slack }
    }

    /// I − lin with the carried diagonal slack.
    fn gap_matrix(&self) -> CMat {
        let mut m = CMat::identity(4, 4) - &self.lin;
        m[(0, 0)] = self.slack[0];
        m[(3, 3)] = self.slack[1];
        m
    }

    pub fn apply(&self, gamma: &CMat) -> CMat {
        unvec_row(&(&self.lin * vec_row(gamma) + &self.off), 2)
    }

    /// Largest |eigenvalue| of the linear part; the Fock-space |λ₂| of the same map.
    pub fn contraction(&self) -> f64 {
        eigenvalues(&self.lin).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn alpha(&self) -> f64 {
        -self.contraction().ln()
    }

    pub fn fixed_point(&self) -> Result<CorrelationMatrix> {
        let units = eigenvalues(&self.lin)
            .iter()
            .filter(|z| (**z - c(1.0)).norm() < UNIT_EIG_TOL)
            .count();
        if units > 0 {
            return Err(KelvinError::NonUniqueFixedPoint { dim: units + 1 });
        }
        let m = self.gap_matrix();
        let lu = m.clone().lu();
        let mut v = lu.solve(&self.off).ok_or(KelvinError::NonUniqueFixedPoint { dim: 2 })?;
        // one step of iterative refinement
        let r = &self.off - &m * &v;
        if let Some(dv) = lu.solve(&r) {
            v += dv;
        }
        let g = unvec_row(&v, 2);
        Ok(CorrelationMatrix { matrix: (&g + g.adjoint()) * c(0.5) })
    }

    /// Edge blocks have a single physical parameter, γ = a·diag(1, −1); the
    /// map acts on it as a ↦ c·a + o. The remaining directions are unphysical
    /// and may be exactly conserved (ε = 0).
    pub fn edge_action(&self) -> (f64, f64) {
        let img = &self.lin * vec_row(&diag2(1.0, -1.0));
        (0.5 * (img[0] - img[3]).re, 0.5 * (self.off[0] - self.off[3]).re)
    }

    /// 1 − c of the edge action, built from the carried slack.
    fn edge_gap(&self) -> f64 {
        0.5 * (self.slack[0] + self.slack[1] + self.lin[(0, 3)] + self.lin[(3, 0)]).re
    }

    pub fn edge_fixed_point(&self) -> Result<CorrelationMatrix> {
        let (_, o) = self.edge_action();
        let gap = self.edge_gap();
        if gap.abs() < UNIT_EIG_TOL {
            return Err(KelvinError::NonUniqueFixedPoint { dim: 2 });
        }
        let a = o / gap;
        Ok(CorrelationMatrix { matrix: diag2(a, -a) })
    }

    pub fn edge_alpha(&self) -> f64 {
        let gap = self.edge_gap();
        if gap < 1.0 {
            -(-gap).ln_1p()
        } else {
            -self.edge_action().0.abs().ln()
        }
    }

    pub fn residual(&self, gamma: &CorrelationMatrix) -> f64 {
        (self.apply(&gamma.matrix) - &gamma.matrix).camax()
    }
}

/// Fixed point of γ = d(A_S γ A_S† + A_SB γ_B0 A_SB†).
pub fn steady_state_cm(blocks: &EvolutionBlocks, gamma_b0: &CMat, damping: f64) -> Result<CorrelationMatrix> {
    AffineCm::from_cycle(blocks, gamma_b0, damping).fixed_point()
}

/// Fixed point with bath and environment injections summed; environments start in p_E·γ_B0.
pub fn finite_env_steady_cm(blocks: &EvolutionBlocks, p_e: f64) -> Result<CorrelationMatrix> {
    let sites = 1 + blocks.a_b.nrows() / 2;
    AffineCm::from_cycle(blocks, &rest_cm(sites, p_e), 1.0).fixed_point()
}

/// Dyson-expansion pieces of the system block of the propagator in the
/// rotated (Ω) basis, with T = 2t.
#[derive(Debug, Clone)]
pub struct PerturbativeBlocks {
    pub a_s0: CMat,
    pub a_sb1: CMat,
    pub a_s2: CMat,
    pub q: f64,
    pub x1: C64,
    pub x2: C64,
}

/// Rotated-basis single-particle matrix i[[0,−ε,0,gf],[ε,0,gp,0],[0,−gp*,0,−Δ],[−gf*,0,Δ,0]].
pub fn omega_hamiltonian(epsilon: f64, delta: f64, g: f64, f: C64, p: C64) -> CMat {
    let z = c(0.0);
    let m = CMat::from_row_slice(
        4,
        4,
        &[
            z, c(-epsilon), z, f * g,
            c(epsilon), z, p * g, z,
            z, -p.conj() * g, z, c(-delta),
            -f.conj() * g, z, c(delta), z,
        ],
    );
    m * I
}

/// (f_k, p_k) for the rotated basis.
pub fn omega_couplings(scheme: &crate::model::CouplingScheme, params: &crate::model::ModelParams, k: i64) -> (C64, C64) {
    let phi = crate::model::bogoliubov_angle(params, k);
    let mut sp = c(0.0);
    let mut sm = c(0.0);
    for j in scheme.range() {
        let ph = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / params.n as f64);
        sp += ph * (scheme.lambda(j) + scheme.mu(j));
        sm += ph * (scheme.lambda(j) - scheme.mu(j));
    }
    (-C64::from_polar(1.0, phi) * sp, C64::from_polar(1.0, -phi) * sm)
}

/// Closed-form A_S⁽⁰⁾, A_SB⁽¹⁾, A_S⁽²⁾ and Q.
///
/// They expand e^{+ihT} of [`omega_hamiltonian`]; A_SB⁽¹⁾ carries an overall
/// sign that cancels in A_SB γ A_SB†.
pub fn perturbative_blocks(epsilon: f64, delta: f64, t: f64, f: C64, p: C64) -> Result<PerturbativeBlocks> {
    let den = epsilon * epsilon - delta * delta;
    if den.abs() < 1e-9 {
        return Err(KelvinError::ResonantDenominator(den));
    }
    let tt = 2.0 * t;
    let x1 = (p * epsilon - f * delta) / den;
    let x2 = -I * (f * epsilon - p * delta) / den;
    let (sd, cd) = (delta * tt).sin_cos();
    let (se, ce) = (epsilon * tt).sin_cos();
    let a_s0 = CMat::from_row_slice(2, 2, &[c(ce), c(se), c(-se), c(ce)]);
    let a_sb1 = CMat::from_row_slice(
        2,
        2,
        &[x1 * (cd - ce), x1 * sd + I * x2 * se, x1 * se + I * x2 * sd, -I * x2 * (cd - ce)],
    );
    let n1 = x1.norm_sqr();
    let n2 = x2.norm_sqr();
    let im = (I * x1 * x2.conj()).im;
    let mix = I * f * x2.conj() - p * x1.conj();
    let diag_t = mix * (0.5 * tt * se);
    let a11 = c(n1 * (cd - ce)) + diag_t;
    let a22 = c(n2 * (cd - ce)) + diag_t;
    let a12 = I * x1 * x2.conj() * sd - c(0.5 * se * (n1 + n2)) - I * (delta / epsilon * se * im) - mix * (0.5 * tt * ce);
    let a21 = I * x2 * x1.conj() * sd + c(0.5 * se * (n1 + n2)) - I * (delta / epsilon * se * im) + mix * (0.5 * tt * ce);
    let a_s2 = CMat::from_row_slice(2, 2, &[a11, a12, a21, a22]);
    let q = 2.0 * (n1 + n2) * (1.0 - cd * ce) + 4.0 * sd * se * (x1 * x2.conj()).im;
    Ok(PerturbativeBlocks { a_s0, a_sb1, a_s2, q, x1, x2 })
}

/// Result of propagating a CM through the Majorana covariance equation
/// dΓ/dt = XΓ + ΓXᵀ + Y with gain/loss noise on every mode.
#[derive(Debug, Clone)]
pub struct MajoranaCheck {
    pub gamma: CorrelationMatrix,
    /// max |Y|; zero for balanced gain and loss.
    pub y_norm: f64,
    /// max |M − (κ/4)·1|.
    pub m_deviation: f64,
}

/// Propagate a number-conserving block (operators d_i = α_i, H = d†Gd) with noise
/// κ(D[d_i] + D[d_i†]) in the Majorana picture and map back to the CM.
pub fn majorana_damping_check(generator: &CMat, kappa: f64, t: f64, gamma0: &CMat) -> MajoranaCheck {
    let n = generator.nrows();
    // c_{2i} = d_i + d_i†, c_{2i+1} = i(d_i − d_i†); ψ = (d, d†)
    let mut v = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        v[(2 * i, i)] = c(1.0);
        v[(2 * i, n + i)] = c(1.0);
        v[(2 * i + 1, i)] = I;
        v[(2 * i + 1, n + i)] = -I;
    }
    let mut k = CMat::zeros(2 * n, 2 * n);
    k.view_mut((0, 0), (n, n)).copy_from(&(generator * c(0.5)));
    k.view_mut((n, n), (n, n)).copy_from(&(generator.transpose() * c(-0.5)));
    let hm = (&v * &k * v.adjoint()).map(|z| z.im);

    let mut m = CMat::zeros(2 * n, 2 * n);
    let amp = (kappa / 2.0).sqrt() * 0.5;
    for i in 0..n {
        for sign in [-1.0, 1.0] {
            let mut l = DVector::<C64>::zeros(2 * n);
            l[2 * i] = c(amp);
            l[2 * i + 1] = I * (sign * amp);
            m += &l * l.adjoint().map(|z| z);
        }
    }
    let m = m.transpose();
    let mdev = (&m - CMat::identity(2 * n, 2 * n) * c(kappa / 4.0)).camax();
    // with H = (i/4) cᵀ H_M c, Heisenberg rotation of Γ is e^{H_M t}
    let x = hm.map(c) - (&m + m.map(|z| z.conj())) * c(2.0);
    let y = (m.map(|z| z.conj()) - &m) * (I * 4.0);

    let mut g2 = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let dl = if i == j { 0.5 } else { 0.0 };
            g2[(i, j)] = c(dl) + gamma0[(i, j)];
            g2[(n + i, n + j)] = c(dl) - gamma0[(j, i)];
        }
    }
    let big_gamma = (&v * &g2 * v.adjoint() - CMat::identity(2 * n, 2 * n)) * I;
    let e = (&x * c(t)).exp();
    let evolved = &e * big_gamma * e.transpose();
    let g2t = v.adjoint() * (CMat::identity(2 * n, 2 * n) - evolved * I) * &v * c(0.25);
    let mut gamma = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gamma[(i, j)] = g2t[(i, j)] - if i == j { c(0.5) } else { c(0.0) };
        }
    }
    MajoranaCheck { gamma: CorrelationMatrix { matrix: gamma }, y_norm: y.camax(), m_deviation: mdev }
}
