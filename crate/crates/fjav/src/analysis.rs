//! Closed-form steady-state performance of the competition-based protocol.
//!
//! For a network with actual interaction matrix `W` (regular rows from `W°`,
//! identity rows for misbehaving nodes) and competition `λ`, the steady state of
//! the FJ dynamics is governed by the resolvent `L = λ (I − (1−λ) W)⁻¹`. The
//! consensus error splits into a bias part `e_v = tr(Σ̃ Eᵀ E)` with
//! `E = S_R L − C_R S_R` and `Σ̃ = Σ + S_Mᵀ V S_M`, and a noise part
//! `e_n = tr(P)` where `P` solves the discrete Lyapunov equation
//! `P = (1−λ)² W_reg P W_regᵀ + (1−λ)² W_mal Q W_malᵀ`.
//!
//! This module computes those quantities, their λ-derivative, the limit slope
//! `Γ = lim_{λ→0⁺} dL/dλ`, the endpoint/interior optimality checks, the
//! deception/consensus decomposition, and the optimal competition `λ*`.

use crate::dynamics::{MisbehaviorModel, PriorModel};
use crate::error::{Error, Result};
use crate::graphs::Network;
use crate::numerics::{self, Matrix, Vector};

/// Below this competition the resolvent is replaced by its analytic `λ → 0⁺`
/// limit; the linear system becomes needlessly ill-conditioned there.
pub const LAMBDA_MIN: f64 = 1e-6;

/// Step used for the numeric `de_n/dλ` central difference.
pub const EN_DERIVATIVE_STEP: f64 = 1e-5;

/// The actual interaction matrix of Eq.-style block form
/// `W = [[W_reg, W_mal], [0, I_M]]`: regular rows follow the nominal weights,
/// misbehaving rows are identity rows (their average state is affected by no
/// other node).
#[derive(Debug, Clone)]
pub struct ActualWeightMatrix {
    w: Matrix,
    n_regular: usize,
}

impl ActualWeightMatrix {
    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_regular(&self) -> usize {
        self.n_regular
    }

    pub fn n_misbehaving(&self) -> usize {
        self.n() - self.n_regular
    }

    /// Regular-to-regular block `W_reg` (R×R).
    pub fn w_reg(&self) -> Matrix {
        self.w
            .view((0, 0), (self.n_regular, self.n_regular))
            .into_owned()
    }

    /// Regular-to-misbehaving block `W_mal` (R×M).
    pub fn w_mal(&self) -> Matrix {
        self.w
            .view((0, self.n_regular), (self.n_regular, self.n_misbehaving()))
            .into_owned()
    }
}

/// Builds the actual interaction matrix from the network partition.
pub fn build_actual_w(net: &Network) -> ActualWeightMatrix {
    let n = net.n();
    let r = net.n_regular();
    let mut w = net.w_nominal().clone();
    for m in r..n {
        for j in 0..n {
            w[(m, j)] = if j == m { 1.0 } else { 0.0 };
        }
    }
    ActualWeightMatrix { w, n_regular: r }
}

/// Resolvent `L(λ) = λ (I − (1−λ) W)⁻¹` for `λ ∈ (0, 1]`, extended by continuity
/// below [`LAMBDA_MIN`] with the spectral projection `W̄ = lim_{λ→0⁺} L`.
///
/// The result is row-stochastic (verified to 1e-10) and entrywise nonnegative.
pub fn resolvent_l(actual: &ActualWeightMatrix, lambda: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "resolvent requires λ ∈ [0, 1], got {lambda}"
        )));
    }
    let n = actual.n();
    let mut l = if lambda < LAMBDA_MIN {
        resolvent_limit(actual)?
    } else {
        let lhs = Matrix::identity(n, n) - actual.w() * (1.0 - lambda);
        solve_with_lambda_context(&lhs, lambda, n)?
    };

    // Contract checks: rows sum to 1, entries nonnegative up to rounding.
    for i in 0..n {
        let row_sum: f64 = l.row(i).iter().sum();
        if (row_sum - 1.0).abs() > 1e-10 {
            return Err(Error::Numerical(format!(
                "resolvent row {i} sums to {row_sum}, expected 1"
            )));
        }
    }
    let mut min_entry = 0.0f64;
    for v in l.iter_mut() {
        min_entry = min_entry.min(*v);
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    if min_entry < -1e-10 {
        return Err(Error::Numerical(format!(
            "resolvent has a negative entry {min_entry:.3e}"
        )));
    }
    Ok(l)
}

fn solve_with_lambda_context(lhs: &Matrix, lambda: f64, n: usize) -> Result<Matrix> {
    numerics::solve_linear(lhs, &(Matrix::identity(n, n) * lambda)).map_err(|e| match e {
        Error::IllConditioned { est, limit } => Error::IllConditioned { est, limit },
        other => other,
    })
}

/// Spectral projection onto the unit eigenspace of `W`: the continuous extension
/// of `L` at `λ = 0`.
///
/// With misbehaving nodes present this is `[[0, H], [0, I_M]]` where
/// `H = (I − W_reg)⁻¹ W_mal` carries the harmonic weights of the absorbing
/// (misbehaving) nodes; for `M = 1` every entry of `H` is one. With no misbehaving
/// nodes it is the Perron projection `𝟙 πᵀ` of the irreducible `W°`.
fn resolvent_limit(actual: &ActualWeightMatrix) -> Result<Matrix> {
    let n = actual.n();
    let r = actual.n_regular();
    let m = actual.n_misbehaving();
    if m > 0 {
        let w_reg = actual.w_reg();
        let w_mal = actual.w_mal();
        let h = numerics::solve_linear(&(Matrix::identity(r, r) - &w_reg), &w_mal)?;
        let mut l = Matrix::zeros(n, n);
        l.view_mut((0, r), (r, m)).copy_from(&h);
        for j in 0..m {
            l[(r + j, r + j)] = 1.0;
        }
        Ok(l)
    } else {
        let pi = left_perron(actual.w())?;
        Ok(Vector::from_element(n, 1.0) * pi.transpose())
    }
}

/// Left Perron vector of an irreducible row-stochastic matrix, normalized to sum
/// one. Power iteration on the lazy matrix `(Wᵀ + I)/2` sidesteps periodicity.
fn left_perron(w: &Matrix) -> Result<Vector> {
    let n = w.nrows();
    let half_wt = (w.transpose() + Matrix::identity(n, n)) * 0.5;
    let mut pi = Vector::from_element(n, 1.0 / n as f64);
    for _ in 0..100_000 {
        let next = &half_wt * &pi;
        let sum: f64 = next.iter().sum();
        let next = next / sum;
        let delta = (&next - &pi).amax();
        pi = next;
        if delta < 1e-14 {
            return Ok(pi);
        }
    }
    Err(Error::NotConverged("left Perron vector iteration".into()))
}

/// Steady-state covariance of the regular states w.r.t. the deception noises:
/// solves `P = (1−λ)² W_reg P W_regᵀ + (1−λ)² W_mal Q W_malᵀ`.
///
/// At `λ = 1` the dynamics ignore the network and `P = 0` exactly.
pub fn steady_state_p(net: &Network, lambda: f64, q_cov: &Matrix) -> Result<Matrix> {
    let r = net.n_regular();
    let m = net.n_misbehaving();
    if q_cov.nrows() != m || q_cov.ncols() != m {
        return Err(Error::InvalidInput(format!(
            "Q must be {m}x{m}, got {}x{}",
            q_cov.nrows(),
            q_cov.ncols()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "steady_state_p requires λ ∈ [0, 1], got {lambda}"
        )));
    }
    if lambda == 1.0 || m == 0 || numerics::max_abs(q_cov) == 0.0 {
        return Ok(Matrix::zeros(r, r));
    }
    let actual = build_actual_w(net);
    let shrink = 1.0 - lambda;
    let a = actual.w_reg() * shrink;
    let w_mal = actual.w_mal();
    let s = (&w_mal * q_cov * w_mal.transpose()) * (shrink * shrink);
    numerics::solve_discrete_lyapunov(&a, &((&s + s.transpose()) * 0.5))
}

/// Deception bias second moment actually entering the error: the configured `V`
/// or, when a fixed bias vector is set, its outer product `v vᵀ`.
pub fn effective_v_cov(mis: &MisbehaviorModel) -> Matrix {
    match mis.fixed_bias() {
        Some(v) => v * v.transpose(),
        None => mis.v_cov().clone(),
    }
}

/// Per-λ performance report.
#[derive(Debug, Clone)]
pub struct AnalyticReport {
    pub lambda: f64,
    /// Resolvent `L(λ)`.
    pub l: Matrix,
    /// Steady-state noise covariance `P(λ)` of the regular block.
    pub p: Matrix,
    /// Bias error `tr(Σ̃ Eᵀ E)`.
    pub e_v: f64,
    /// Noise error `tr(P)`.
    pub e_n: f64,
    /// `e_v + e_n`.
    pub e_total: f64,
    /// Deception share `(σ_m + d) ‖L_m^{-m}‖² + e_n`; only defined for a single
    /// misbehaving node and diagonal Σ.
    pub e_deception: Option<f64>,
    /// Democracy share `Σ_{i∈R} σ_i ‖L_i^{-m} − 𝟙/R‖²`; same scope.
    pub e_consensus: Option<f64>,
}

/// `E = S_R L − C_R S_R`: the deviation of the steady-state influence of every
/// node on the regular block from the ideal uniform average.
fn deviation_matrix(l: &Matrix, r: usize) -> Matrix {
    let n = l.ncols();
    let mut e = l.rows(0, r).into_owned();
    let c = 1.0 / r as f64;
    for i in 0..r {
        for j in 0..r {
            e[(i, j)] -= c;
        }
    }
    let _ = n;
    e
}

/// `(tr(Σ Eᵀ E), L₂ᵀ L₂)`: the V-independent and V-facing parts of `e_v`.
fn e_v_parts(prior: &PriorModel, e: &Matrix, l2: &Matrix) -> (f64, Matrix) {
    let g_m = l2.tr_mul(l2);
    let sigma = prior.sigma();
    let t_sigma = if prior.is_diagonal() {
        (0..e.ncols())
            .map(|j| sigma[(j, j)] * e.column(j).norm_squared())
            .sum()
    } else {
        sigma.dot(&e.tr_mul(e))
    };
    (t_sigma, g_m)
}

fn check_model_dims(net: &Network, prior: &PriorModel, mis: &MisbehaviorModel) -> Result<()> {
    if prior.n() != net.n() {
        return Err(Error::InvalidInput(format!(
            "prior dimension {} does not match network size {}",
            prior.n(),
            net.n()
        )));
    }
    if mis.m() != net.n_misbehaving() {
        return Err(Error::InvalidInput(format!(
            "misbehavior dimension {} does not match |M| = {}",
            mis.m(),
            net.n_misbehaving()
        )));
    }
    Ok(())
}

/// Full analytic error evaluation at one `λ`.
pub fn error_terms(
    net: &Network,
    lambda: f64,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
) -> Result<AnalyticReport> {
    check_model_dims(net, prior, mis)?;
    let actual = build_actual_w(net);
    let r = net.n_regular();
    let m = net.n_misbehaving();
    let l = resolvent_l(&actual, lambda)?;
    let e = deviation_matrix(&l, r);
    let l2 = l.view((0, r), (r, m)).into_owned();
    let (t_sigma, g_m) = e_v_parts(prior, &e, &l2);
    let v_eff = effective_v_cov(mis);
    let e_v = t_sigma + v_eff.dot(&g_m);
    let p = steady_state_p(net, lambda, mis.q_cov())?;
    let e_n = p.trace();

    let (e_deception, e_consensus) = if m == 1 && prior.is_diagonal() {
        let (dec, cons) = decomposition_from_parts(net, prior, &v_eff, &l, e_n);
        (Some(dec), Some(cons))
    } else {
        (None, None)
    };

    Ok(AnalyticReport {
        lambda,
        l,
        p,
        e_v,
        e_n,
        e_total: e_v + e_n,
        e_deception,
        e_consensus,
    })
}

fn decomposition_from_parts(
    net: &Network,
    prior: &PriorModel,
    v_eff: &Matrix,
    l: &Matrix,
    e_n: f64,
) -> (f64, f64) {
    let r = net.n_regular();
    let sigma = prior.sigma();
    // e_consensus: per-column mismatch of regular influence from 1/R.
    let mut e_consensus = 0.0;
    for i in 0..r {
        let mut norm = 0.0;
        for row in 0..r {
            let d = l[(row, i)] - 1.0 / r as f64;
            norm += d * d;
        }
        e_consensus += sigma[(i, i)] * norm;
    }
    // e_deception: the misbehaving column's social power, weighted by σ_m + d.
    let mut power = 0.0;
    for row in 0..r {
        power += l[(row, r)] * l[(row, r)];
    }
    let e_deception = (sigma[(r, r)] + v_eff[(0, 0)]) * power + e_n;
    (e_deception, e_consensus)
}

/// Deception/consensus error split (single misbehaving node, diagonal Σ).
/// The two components sum to `e_total`.
pub fn decomposition(
    net: &Network,
    lambda: f64,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
) -> Result<(f64, f64)> {
    if net.n_misbehaving() != 1 {
        return Err(Error::InvalidInput(
            "decomposition requires exactly one misbehaving node".into(),
        ));
    }
    if !prior.is_diagonal() {
        return Err(Error::InvalidInput(
            "decomposition requires a diagonal prior covariance".into(),
        ));
    }
    let report = error_terms(net, lambda, prior, mis)?;
    Ok((report.e_deception.unwrap(), report.e_consensus.unwrap()))
}

/// Social power of misbehaving node `m` (internal index): its resolvent column
/// restricted to the regular rows.
pub fn social_power(net: &Network, lambda: f64, m: usize) -> Result<Vector> {
    let r = net.n_regular();
    if m < r || m >= net.n() {
        return Err(Error::InvalidInput(format!(
            "node index {m} is not misbehaving (misbehaving block starts at {r})"
        )));
    }
    let actual = build_actual_w(net);
    let l = resolvent_l(&actual, lambda)?;
    Ok(l.view((0, m), (r, 1)).column(0).into_owned())
}

/// Numeric `de_n/dλ` by central difference on the Lyapunov solution.
fn e_n_derivative(net: &Network, lambda: f64, q_cov: &Matrix) -> Result<f64> {
    if net.n_misbehaving() == 0 || numerics::max_abs(q_cov) == 0.0 {
        return Ok(0.0);
    }
    let h = EN_DERIVATIVE_STEP
        .min((1.0 - lambda) * 0.5)
        .min(lambda * 0.5);
    let hi = steady_state_p(net, lambda + h, q_cov)?.trace();
    let lo = steady_state_p(net, lambda - h, q_cov)?.trace();
    Ok((hi - lo) / (2.0 * h))
}

/// Total derivative `de/dλ` at `λ ∈ (0, 1)`.
///
/// The bias part is exact: `de_v/dλ = (2/λ) tr(Σ̃ Lᵀ (I − Wᵀ Lᵀ) S_Rᵀ E)`, from
/// `dL/dλ = (1/λ) L (I − W L)`. The noise part uses a central difference on
/// `tr(P)`; the element-wise implicit-function form of `dP_ii/dλ` ignores the
/// off-diagonal coupling of `P` and is kept only as a diagnostic
/// ([`e_n_slope_diagnostic`]).
pub fn error_derivative(
    net: &Network,
    lambda: f64,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidInput(format!(
            "error_derivative requires λ ∈ (0, 1), got {lambda}"
        )));
    }
    check_model_dims(net, prior, mis)?;
    let actual = build_actual_w(net);
    let r = net.n_regular();
    let n = net.n();
    let l = resolvent_l(&actual, lambda)?;
    let e = deviation_matrix(&l, r);

    // Σ̃ = Σ + S_Mᵀ V S_M.
    let mut sigma_tilde = prior.sigma().clone();
    let v_eff = effective_v_cov(mis);
    sigma_tilde
        .view_mut((r, r), (n - r, n - r))
        .iter_mut()
        .zip(v_eff.iter())
        .for_each(|(s, &v)| *s += v);

    // (dE/dλ)ᵀ = (1/λ) Lᵀ (I − Wᵀ Lᵀ) S_Rᵀ.
    let wl = actual.w() * &l;
    let inner = Matrix::identity(n, n) - &wl;
    let de_t = l.transpose() * inner.transpose();
    let de_t_sr = de_t.columns(0, r).into_owned();
    let de_v = 2.0 / lambda * (sigma_tilde * (de_t_sr * e)).trace();

    let de_n = e_n_derivative(net, lambda, mis.q_cov())?;
    Ok(de_v + de_n)
}

/// Element-wise implicit-function slope of `e_n` (diagnostic only): sums
/// `-2(1−λ)([W_reg P W_regᵀ]_ii + Q̃_ii) / (1 − (1−λ)² W_ii²)` over the regular
/// diagonal. Ignores the off-diagonal response of `P`, so it tracks the sign but
/// not the exact value of `de_n/dλ`.
pub fn e_n_slope_diagnostic(net: &Network, lambda: f64, q_cov: &Matrix) -> Result<f64> {
    let p = steady_state_p(net, lambda, q_cov)?;
    let actual = build_actual_w(net);
    let w_reg = actual.w_reg();
    let w_mal = actual.w_mal();
    let mid = &w_reg * &p * w_reg.transpose();
    let q_tilde = &w_mal * q_cov * w_mal.transpose();
    let shrink = 1.0 - lambda;
    let mut slope = 0.0;
    for i in 0..net.n_regular() {
        let wii = w_reg[(i, i)];
        slope -= 2.0 * shrink * (mid[(i, i)] + q_tilde[(i, i)]) / (1.0 - shrink * shrink * wii * wii);
    }
    Ok(slope)
}

/// The slope matrix `Γ = lim_{λ→0⁺} dL/dλ` with its block partition
/// `[[Γ₁, Γ₂], [0, 0]]`.
#[derive(Debug, Clone)]
pub struct GammaBlocks {
    pub gamma: Matrix,
    n_regular: usize,
}

impl GammaBlocks {
    /// Regular-to-regular block `Γ₁` (nonnegative).
    pub fn gamma1(&self) -> Matrix {
        self.gamma
            .view((0, 0), (self.n_regular, self.n_regular))
            .into_owned()
    }

    /// Regular-to-misbehaving block `Γ₂` (nonpositive).
    pub fn gamma2(&self) -> Matrix {
        let m = self.gamma.nrows() - self.n_regular;
        self.gamma
            .view((0, self.n_regular), (self.n_regular, m))
            .into_owned()
    }
}

/// Spectral construction of `Γ`, valid for symmetric `W°`.
///
/// Eigenvectors of `W` with eigenvalue `λ_W ≠ 1` are mapped to `(1 − λ_W)⁻¹`
/// times themselves; the unit eigenspace (the all-ones direction and, with
/// misbehaving nodes, the absorbing directions) is the kernel. With `M ≥ 1`
/// this collapses to the closed forms `Γ₁ = (I − W_reg)⁻¹` and
/// `Γ₂ = −(I − W_reg)⁻² W_mal`.
pub fn gamma_blocks(net: &Network) -> Result<GammaBlocks> {
    if !numerics::is_symmetric(net.w_nominal(), 1e-9) {
        return Err(Error::InvalidInput(
            "spectral Γ construction requires a symmetric W°; use gamma_blocks_fd".into(),
        ));
    }
    let n = net.n();
    let r = net.n_regular();
    let m = net.n_misbehaving();
    if m == 0 {
        // All-regular: Γ = Σ_{λ_W ≠ 1} (1 − λ_W)⁻¹ v v ᵀ over the spectrum of W°.
        let (vals, vecs) = numerics::eig_sym(net.w_nominal())?;
        let mut gamma = Matrix::zeros(n, n);
        for k in 0..n {
            if (1.0 - vals[k]).abs() <= 1e-9 {
                continue;
            }
            let v = vecs.column(k);
            gamma.ger(1.0 / (1.0 - vals[k]), &v, &v, 1.0);
        }
        return Ok(GammaBlocks {
            gamma,
            n_regular: r,
        });
    }

    let actual = build_actual_w(net);
    let w_reg = actual.w_reg();
    let (vals, vecs) = numerics::eig_sym(&w_reg)?;
    let mut gamma1 = Matrix::zeros(r, r);
    for k in 0..r {
        let v = vecs.column(k);
        gamma1.ger(1.0 / (1.0 - vals[k]), &v, &v, 1.0);
    }
    let gamma2 = -(&gamma1 * &gamma1 * actual.w_mal());
    let mut gamma = Matrix::zeros(n, n);
    gamma.view_mut((0, 0), (r, r)).copy_from(&gamma1);
    gamma.view_mut((0, r), (r, m)).copy_from(&gamma2);
    Ok(GammaBlocks {
        gamma,
        n_regular: r,
    })
}

/// Finite-difference construction of `Γ` for general `W`: central differences of
/// the resolvent near zero, Richardson-extrapolated to cancel the O(λ₀)
/// evaluation-point bias. The base point sits at `λ₀ = 1e-5`; the slope of `L`
/// steepens like the inverse spectral gap of `W_reg`, and a larger base point
/// loses digits on tightly-coupled networks.
pub fn gamma_blocks_fd(net: &Network) -> Result<GammaBlocks> {
    let actual = build_actual_w(net);
    let slope_at = |lam0: f64| -> Result<Matrix> {
        let h = lam0 * 0.5;
        let hi = resolvent_l(&actual, lam0 + h)?;
        let lo = resolvent_l(&actual, lam0 - h)?;
        Ok((hi - lo) / (2.0 * h))
    };
    let lam0 = 1e-5;
    let g1 = slope_at(lam0)?;
    let g2 = slope_at(2.0 * lam0)?;
    Ok(GammaBlocks {
        gamma: g1 * 2.0 - g2,
        n_regular: net.n_regular(),
    })
}

/// Outcome of the full-competition vs full-collaboration endpoint comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Check {
    /// Whether full competition beats full collaboration (`lhs ≥ rhs`).
    pub holds: bool,
    /// `(M²/R) e_n(0) + tr(V)`.
    pub lhs: f64,
    /// `(M²/R) tr(Σ₁₁) − (2M²/R²) S(Σ₁₁) + (2M/R) S(Σ₁₂) − S(Σ₂₂)` with
    /// `S(A) = Σ_ij A_ij`.
    pub rhs: f64,
}

/// Endpoint comparison `e(1) < e(0)` expressed through the covariance blocks.
pub fn check_prop1(
    net: &Network,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
) -> Result<Prop1Check> {
    check_model_dims(net, prior, mis)?;
    let r = net.n_regular() as f64;
    let m_count = net.n_misbehaving();
    if m_count == 0 {
        return Err(Error::InvalidInput(
            "endpoint comparison needs at least one misbehaving node".into(),
        ));
    }
    let m = m_count as f64;
    let sigma = prior.sigma();
    let ru = net.n_regular();

    let s11 = sigma.view((0, 0), (ru, ru));
    let s12 = sigma.view((0, ru), (ru, m_count));
    let s22 = sigma.view((ru, ru), (m_count, m_count));
    let sum = |view: nalgebra::DMatrixView<f64>| -> f64 { view.iter().sum() };

    let e_n0 = steady_state_p(net, 0.0, mis.q_cov())?.trace();
    let lhs = m * m / r * e_n0 + effective_v_cov(mis).trace();
    let rhs = m * m / r * s11.diagonal().sum() - 2.0 * m * m / (r * r) * sum(s11)
        + 2.0 * m / r * sum(s12)
        - sum(s22);
    Ok(Prop1Check {
        holds: lhs >= rhs,
        lhs,
        rhs,
    })
}

/// Which interior-optimum condition an instance satisfies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TheoremCondition {
    /// Diagonal observation covariance.
    C1,
    /// Symmetric `W°` with the slope inequality satisfied; carries its two sides.
    C2 { lhs: f64, rhs: f64 },
    Neither,
}

/// Checks the interior-optimum conditions: C1 (diagonal Σ) or C2 (symmetric `W°`
/// with `−de_n/dλ(0⁺) − tr(V Γ₂ᵀ C_RM)` exceeding the Σ-dependent right side).
/// Either one places the optimal competition strictly inside (0, 1).
pub fn check_theorem1(
    net: &Network,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
) -> Result<TheoremCondition> {
    check_model_dims(net, prior, mis)?;
    if net.n_misbehaving() == 0 {
        return Err(Error::InvalidInput(
            "interior-optimum check needs at least one misbehaving node".into(),
        ));
    }
    if net.n_regular() < 2 {
        // With a single regular node the consensus task degenerates and the
        // positivity argument behind the λ* < 1 side fails (its diagonal terms
        // collapse to σ₁ W₁₁ = 0); full competition can then be optimal.
        return Err(Error::InvalidInput(
            "interior-optimum check needs at least two regular nodes".into(),
        ));
    }
    if prior.is_diagonal() {
        return Ok(TheoremCondition::C1);
    }
    if !numerics::is_symmetric(net.w_nominal(), 1e-9) {
        return Ok(TheoremCondition::Neither);
    }

    let r = net.n_regular();
    let m = net.n_misbehaving();
    let gamma = gamma_blocks(net)?;
    let g1 = gamma.gamma1();
    let g2 = gamma.gamma2();
    let c_r = Matrix::from_element(r, r, 1.0 / r as f64);
    let c_rm = Matrix::from_element(r, m, 1.0 / m as f64);

    let sigma = prior.sigma();
    let s11 = sigma.view((0, 0), (r, r)).into_owned();
    let s12 = sigma.view((0, r), (r, m)).into_owned();
    let s22 = sigma.view((r, r), (m, m)).into_owned();

    // de_n/dλ at 0⁺, taken at a small positive λ.
    let de_n0 = e_n_derivative_at_zero(net, mis.q_cov())?;
    let v_eff = effective_v_cov(mis);
    let lhs = -de_n0 - (&v_eff * g2.transpose() * &c_rm).trace();
    let rhs = (-&s11 * g1.transpose() * &c_r).trace() - (&s12 * g2.transpose() * &c_r).trace()
        + (s12.transpose() * g1.transpose() * &c_rm).trace()
        + (&s22 * g2.transpose() * &c_rm).trace();
    if lhs > rhs {
        Ok(TheoremCondition::C2 { lhs, rhs })
    } else {
        Ok(TheoremCondition::Neither)
    }
}

fn e_n_derivative_at_zero(net: &Network, q_cov: &Matrix) -> Result<f64> {
    if numerics::max_abs(q_cov) == 0.0 {
        return Ok(0.0);
    }
    let lam0 = 1e-4;
    let h = 5e-5;
    let hi = steady_state_p(net, lam0 + h, q_cov)?.trace();
    let lo = steady_state_p(net, lam0 - h, q_cov)?.trace();
    Ok((hi - lo) / (2.0 * h))
}

/// Optimal competition: coarse grid scan over `[1e-4, 1]` followed by
/// golden-section refinement around the best grid point.
///
/// Returns `(λ*, e(λ*))`. The error is empirically unimodal but not proven
/// convex; the grid-first scan protects against spurious local minima.
pub fn optimal_lambda(
    net: &Network,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
    grid_resolution: usize,
    refine_tol: f64,
) -> Result<(f64, f64)> {
    if grid_resolution < 32 {
        return Err(Error::InvalidInput(
            "optimal_lambda requires a grid of at least 32 points".into(),
        ));
    }
    if !(refine_tol > 0.0) {
        return Err(Error::InvalidInput("refine_tol must be positive".into()));
    }
    let objective =
        |lambda: f64| -> Result<f64> { Ok(error_terms(net, lambda, prior, mis)?.e_total) };

    let lo_end = 1e-4;
    let grid: Vec<f64> = (0..grid_resolution)
        .map(|i| lo_end + (1.0 - lo_end) * i as f64 / (grid_resolution - 1) as f64)
        .collect();
    let values = crate::par::try_map_indexed(grid.len(), |i| objective(grid[i]))?;
    let (best_idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");

    let lo = grid[best_idx.saturating_sub(1)];
    let hi = grid[(best_idx + 1).min(grid.len() - 1)];
    let (lam_star, e_star) = golden_section(&objective, lo, hi, refine_tol)?;

    // The refinement never worsens the grid optimum.
    if e_star <= values[best_idx] {
        Ok((lam_star, e_star))
    } else {
        Ok((grid[best_idx], values[best_idx]))
    }
}

pub(crate) fn golden_section<F: Fn(f64) -> Result<f64>>(
    f: &F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid)?;
    if f1 <= f2 && f1 <= fm {
        Ok((x1, f1))
    } else if f2 <= fm {
        Ok((x2, f2))
    } else {
        Ok((mid, fm))
    }
}
