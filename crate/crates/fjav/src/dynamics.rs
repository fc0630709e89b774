//! Trajectory simulation of the consensus, FJ, W-MSR and SABA protocols under the
//! misbehavior model, plus the Monte Carlo consensus-error estimator.
//!
//! Misbehaving nodes broadcast `x_m(k) = θ_m + v_m + n_m(k)` at every step,
//! independently of the protocol the regular nodes run.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graphs::{shortest_path_lengths, Network};
use crate::numerics::{self, Matrix, Vector};

/// Prior distribution of the observations: zero mean, covariance `Σ ≻ 0`.
#[derive(Debug, Clone)]
pub struct PriorModel {
    sigma: Matrix,
    /// Lower Cholesky factor of Σ; doubles as the SPD certificate.
    chol_l: Matrix,
}

impl PriorModel {
    /// Explicit covariance matrix; must be symmetric positive definite.
    pub fn explicit(sigma: Matrix) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(Error::InvalidInput("Σ must be square".into()));
        }
        if !numerics::is_symmetric(&sigma, 1e-9) {
            return Err(Error::InvalidInput("Σ must be symmetric".into()));
        }
        let sym = (&sigma + sigma.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(sym.clone())
            .ok_or_else(|| Error::InvalidInput("Σ is not positive definite".into()))?;
        Ok(Self {
            sigma: sym,
            chol_l: chol.l(),
        })
    }

    /// Diagonal covariance with the given per-node variances.
    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput(
                "diagonal prior requires strictly positive variances".into(),
            ));
        }
        Self::explicit(Matrix::from_diagonal(&Vector::from_row_slice(variances)))
    }

    /// `Σ = var · I`.
    pub fn scaled_identity(n: usize, var: f64) -> Result<Self> {
        Self::diagonal(&vec![var; n])
    }

    /// Exponential-decay covariance: `Σ_ij = base^(−rate · ℓ(i,j))`, `Σ_ii = 1`,
    /// with `ℓ` the shortest-path length on `net`.
    pub fn exp_decay(net: &Network, base: f64, rate: f64) -> Result<Self> {
        if !(base > 1.0) || !(rate > 0.0) {
            return Err(Error::InvalidInput(
                "exp_decay prior requires base > 1 and rate > 0".into(),
            ));
        }
        let dist = shortest_path_lengths(net)?;
        let n = net.n();
        let sigma = Matrix::from_fn(n, n, |i, j| base.powf(-rate * dist[i][j] as f64));
        Self::explicit(sigma)
    }

    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| i == j || self.sigma[(i, j)] == 0.0))
    }

    /// Draws `θ ~ N(0, Σ)` through the Cholesky factor.
    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        let z = Vector::from_fn(self.n(), |_, _| rng.sample(StandardNormal));
        &self.chol_l * z
    }
}

/// Network-independent description of a prior, resolved against a concrete
/// network (and its internal node order) by [`PriorSpec::build`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// `Σ = var · I`.
    Identity { var: f64 },
    /// Per-node variances, indexed by original 1-based node id.
    Diagonal { variances: Vec<f64> },
    /// `Σ_ij = base^(−rate · ℓ(i,j))`, `Σ_ii = 1`.
    ExpDecay { base: f64, rate: f64 },
    /// Explicit covariance, indexed by original 1-based node id.
    Explicit { sigma: Vec<Vec<f64>> },
}

impl PriorSpec {
    /// Builds the prior in the network's internal node order (regular block
    /// first); id-indexed inputs are permuted through the label map.
    pub fn build(&self, net: &Network) -> Result<PriorModel> {
        let n = net.n();
        match self {
            PriorSpec::Identity { var } => PriorModel::scaled_identity(n, *var),
            PriorSpec::Diagonal { variances } => {
                if variances.len() != n {
                    return Err(Error::Config(format!(
                        "diagonal prior lists {} variances for {n} nodes",
                        variances.len()
                    )));
                }
                let permuted: Vec<f64> = (0..n).map(|i| variances[net.label(i) - 1]).collect();
                PriorModel::diagonal(&permuted)
            }
            PriorSpec::ExpDecay { base, rate } => PriorModel::exp_decay(net, *base, *rate),
            PriorSpec::Explicit { sigma } => {
                if sigma.len() != n || sigma.iter().any(|row| row.len() != n) {
                    return Err(Error::Config(format!(
                        "explicit prior covariance must be {n}x{n}"
                    )));
                }
                let mat = Matrix::from_fn(n, n, |i, j| sigma[net.label(i) - 1][net.label(j) - 1]);
                PriorModel::explicit(mat)
            }
        }
    }
}

/// Misbehavior model: bias covariance `V`, per-step noise covariance `Q`, and an
/// optional fixed bias vector overriding sampling from `V`.
#[derive(Debug, Clone)]
pub struct MisbehaviorModel {
    v_cov: Matrix,
    q_cov: Matrix,
    fixed_bias: Option<Vector>,
    v_sqrt: Matrix,
    q_sqrt: Matrix,
}

impl MisbehaviorModel {
    pub fn new(v_cov: Matrix, q_cov: Matrix, fixed_bias: Option<Vector>) -> Result<Self> {
        let m = v_cov.nrows();
        if v_cov.ncols() != m || q_cov.nrows() != m || q_cov.ncols() != m {
            return Err(Error::InvalidInput(
                "V and Q must be square with matching dimension".into(),
            ));
        }
        if let Some(bias) = &fixed_bias {
            if bias.len() != m {
                return Err(Error::InvalidInput(
                    "fixed bias length must match the misbehaving set".into(),
                ));
            }
        }
        let v_sqrt = numerics::sym_psd_sqrt(&v_cov, 1e-10)?;
        let q_sqrt = numerics::sym_psd_sqrt(&q_cov, 1e-10)?;
        Ok(Self {
            v_cov,
            q_cov,
            fixed_bias,
            v_sqrt,
            q_sqrt,
        })
    }

    /// `V = d·I`, `Q = q·I` on `m` misbehaving nodes.
    pub fn scaled(m: usize, d: f64, q: f64) -> Result<Self> {
        if d < 0.0 || q < 0.0 {
            return Err(Error::InvalidInput("d and q must be nonnegative".into()));
        }
        Self::new(
            Matrix::identity(m, m) * d,
            Matrix::identity(m, m) * q,
            None,
        )
    }

    pub fn with_fixed_bias(mut self, bias: Vector) -> Result<Self> {
        if bias.len() != self.m() {
            return Err(Error::InvalidInput(
                "fixed bias length must match the misbehaving set".into(),
            ));
        }
        self.fixed_bias = Some(bias);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.v_cov.nrows()
    }

    pub fn v_cov(&self) -> &Matrix {
        &self.v_cov
    }

    pub fn q_cov(&self) -> &Matrix {
        &self.q_cov
    }

    pub fn fixed_bias(&self) -> Option<&Vector> {
        self.fixed_bias.as_ref()
    }

    pub fn has_noise(&self) -> bool {
        numerics::max_abs(&self.q_cov) > 0.0
    }

    /// Draws the deception bias: the fixed vector when set, else `v ~ N(0, V)`.
    pub fn sample_bias(&self, rng: &mut impl Rng) -> Vector {
        if let Some(bias) = &self.fixed_bias {
            return bias.clone();
        }
        let z = Vector::from_fn(self.m(), |_, _| rng.sample(StandardNormal));
        &self.v_sqrt * z
    }

    /// Draws one step of deception noise `n(k) ~ N(0, Q)`.
    pub fn sample_noise(&self, rng: &mut impl Rng) -> Vector {
        if !self.has_noise() {
            return Vector::zeros(self.m());
        }
        let z = Vector::from_fn(self.m(), |_, _| rng.sample(StandardNormal));
        &self.q_sqrt * z
    }
}

/// Draws one world: observations `θ ~ N(0, Σ)` and deception biases `v`
/// (independent of `θ`). The bias is the fixed vector when one is configured.
pub fn sample_world(
    prior: &PriorModel,
    mis: &MisbehaviorModel,
    rng: &mut impl Rng,
) -> (Vector, Vector) {
    let theta = prior.sample(rng);
    let bias = mis.sample_bias(rng);
    (theta, bias)
}

/// The update rule run by regular nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    /// Plain consensus `x⁺ = W° x` (FJ with λ = 0).
    Consensus,
    /// Friedkin-Johnsen with competition `lambda ∈ [0, 1]`.
    Fj { lambda: f64 },
    /// Trimmed-mean consensus discarding up to `f` extreme values on each side.
    Wmsr { f: usize },
    /// Buffer-and-vote baseline (simplified variant, see [`step_saba`]).
    Saba,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Consensus => "consensus",
            Protocol::Fj { .. } => "fj",
            Protocol::Wmsr { .. } => "wmsr",
            Protocol::Saba => "saba",
        }
    }
}

/// One Friedkin-Johnsen step.
///
/// Regular `i`: `x_i⁺ = λ θ_i + (1−λ) Σ_j W°_ij x_j`; misbehaving `m`:
/// `x_m⁺ = θ_m + v_m + noise_m`.
pub fn step_fj(
    net: &Network,
    lambda: f64,
    x: &Vector,
    theta: &Vector,
    bias: &Vector,
    noise: &Vector,
) -> Result<Vector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let n = net.n();
    let r = net.n_regular();
    let w = net.w_nominal();
    let mut next = Vector::zeros(n);
    for i in 0..r {
        let mut acc = 0.0;
        for &j in net.neighbors(i) {
            acc += w[(i, j)] * x[j];
        }
        next[i] = lambda * theta[i] + (1.0 - lambda) * acc;
    }
    for m in 0..(n - r) {
        next[r + m] = theta[r + m] + bias[m] + noise[m];
    }
    Ok(next)
}

/// One W-MSR step for the regular nodes.
///
/// Each regular node discards up to `f` neighbor values strictly greater than its
/// own (largest first) and up to `f` strictly smaller (smallest first), then takes
/// the uniform average of the retained values together with its own state. Ties are
/// broken toward the value farthest from the node's own state, then by neighbor
/// index, so the update is deterministic.
///
/// Misbehaving rows are copied through unchanged; [`simulate`] overwrites them
/// with their broadcast rule.
pub fn step_wmsr(net: &Network, f: usize, x: &Vector) -> Vector {
    let r = net.n_regular();
    let mut next = x.clone();
    for i in 0..r {
        let own = x[i];
        let mut greater: Vec<(f64, usize)> = Vec::new();
        let mut smaller: Vec<(f64, usize)> = Vec::new();
        let mut equal = 0usize;
        let mut equal_sum = 0.0;
        for &j in net.neighbors(i) {
            let xv = x[j];
            if xv > own {
                greater.push((xv, j));
            } else if xv < own {
                smaller.push((xv, j));
            } else {
                equal += 1;
                equal_sum += xv;
            }
        }
        // Largest values first; ties on value fall back to neighbor index.
        greater.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        smaller.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let drop_hi = f.min(greater.len());
        let drop_lo = f.min(smaller.len());
        let mut sum = own + equal_sum;
        let mut count = 1 + equal;
        for &(v, _) in greater.iter().skip(drop_hi) {
            sum += v;
            count += 1;
        }
        for &(v, _) in smaller.iter().skip(drop_lo) {
            sum += v;
            count += 1;
        }
        next[i] = sum / count as f64;
    }
    next
}

/// Per-source value histories for the SABA vote. Broadcast values are identical
/// for every receiver, so one sorted buffer per source node is equivalent to
/// per-neighbor buffers at every regular node.
#[derive(Debug, Clone)]
pub struct SabaBuffers {
    sorted: Vec<Vec<f64>>,
}

impl SabaBuffers {
    pub fn new(n: usize) -> Self {
        Self {
            sorted: vec![Vec::new(); n],
        }
    }

    fn push(&mut self, x: &Vector) {
        for (buf, &v) in self.sorted.iter_mut().zip(x.iter()) {
            let pos = buf.partition_point(|&b| b <= v);
            buf.insert(pos, v);
        }
    }

    fn median(&self, j: usize) -> f64 {
        let buf = &self.sorted[j];
        let k = buf.len();
        if k % 2 == 1 {
            buf[k / 2]
        } else {
            0.5 * (buf[k / 2 - 1] + buf[k / 2])
        }
    }
}

/// One step of the simplified SABA variant.
///
/// The received values `x_j(k)` are appended to the per-source buffers, each
/// source's voted value is the median of its buffer so far, and regular nodes
/// apply the nominal weighted update to the voted values. This captures the
/// buffer-plus-vote mechanism of the reference algorithm without reproducing its
/// internals; it is used for comparative runs only.
pub fn step_saba(net: &Network, buffers: &mut SabaBuffers, x: &Vector) -> Vector {
    buffers.push(x);
    let r = net.n_regular();
    let w = net.w_nominal();
    let mut next = x.clone();
    for i in 0..r {
        let mut acc = 0.0;
        for &j in net.neighbors(i) {
            acc += w[(i, j)] * buffers.median(j);
        }
        next[i] = acc;
    }
    next
}

/// A simulated state history.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `states[(k, i)]` = state of node `i` at time `k`, for `k = 0..=horizon`.
    pub states: Matrix,
    pub theta: Vector,
    pub bias: Vector,
    /// `noise[(k, m)]` = deception noise of misbehaving node `m` at time `k`.
    pub noise: Matrix,
    pub horizon: usize,
    pub n_regular: usize,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> Vector {
        self.states.row(k).transpose()
    }

    /// Nominal regular average `θ̄_R`.
    pub fn theta_bar_regular(&self) -> f64 {
        self.theta.rows(0, self.n_regular).mean()
    }

    /// Consensus cost `Σ_{i∈R} (x_i(k) − θ̄_R)²` at time `k`.
    pub fn cost_at(&self, k: usize) -> f64 {
        let target = self.theta_bar_regular();
        (0..self.n_regular)
            .map(|i| {
                let d = self.states[(k, i)] - target;
                d * d
            })
            .sum()
    }
}

/// Simulates `horizon` steps of `protocol` on a freshly sampled world.
///
/// Regular nodes start from their observations (`x_i(0) = θ_i`); misbehaving rows
/// equal `θ_m + v_m + n_m(k)` at every `k`, including `k = 0`.
pub fn simulate(
    net: &Network,
    protocol: Protocol,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
    horizon: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let n = net.n();
    let r = net.n_regular();
    let m = n - r;
    if prior.n() != n {
        return Err(Error::InvalidInput(format!(
            "prior dimension {} does not match network size {n}",
            prior.n()
        )));
    }
    if mis.m() != m {
        return Err(Error::InvalidInput(format!(
            "misbehavior model dimension {} does not match |M| = {m}",
            mis.m()
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if let Protocol::Fj { lambda } = protocol {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
    }

    let (theta, bias) = sample_world(prior, mis, rng);
    let mut states = Matrix::zeros(horizon + 1, n);
    let mut noise_hist = Matrix::zeros(horizon + 1, m);

    let mut x = theta.clone();
    let noise0 = mis.sample_noise(rng);
    for j in 0..m {
        x[r + j] = theta[r + j] + bias[j] + noise0[j];
        noise_hist[(0, j)] = noise0[j];
    }
    states.row_mut(0).copy_from(&x.transpose());

    let mut buffers = SabaBuffers::new(n);
    for k in 1..=horizon {
        let noise_k = mis.sample_noise(rng);
        let mut next = match protocol {
            Protocol::Consensus => step_fj(net, 0.0, &x, &theta, &bias, &noise_k)?,
            Protocol::Fj { lambda } => step_fj(net, lambda, &x, &theta, &bias, &noise_k)?,
            Protocol::Wmsr { f } => step_wmsr(net, f, &x),
            Protocol::Saba => step_saba(net, &mut buffers, &x),
        };
        for j in 0..m {
            next[r + j] = theta[r + j] + bias[j] + noise_k[j];
            noise_hist[(k, j)] = noise_k[j];
        }
        states.row_mut(k).copy_from(&next.transpose());
        x = next;
    }

    Ok(Trajectory {
        states,
        theta,
        bias,
        noise: noise_hist,
        horizon,
        n_regular: r,
    })
}

/// Monte Carlo estimate of the consensus error.
#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub mean_cost: f64,
    pub std_error: f64,
    pub trials: usize,
    pub horizon: usize,
}

/// RNG stream for one trial: all trials share `master_seed`, trial `t` reads
/// stream `t`, so results do not depend on scheduling order.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Estimates the consensus error `E[Σ_{i∈R}(x_i(T) − θ̄_R)²]` by averaging the
/// final-step cost over independently sampled worlds and noise paths.
pub fn mc_cost(
    net: &Network,
    protocol: Protocol,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
    horizon: usize,
    trials: usize,
    master_seed: u64,
) -> Result<MCEstimate> {
    if trials < 2 {
        return Err(Error::InvalidInput(
            "mc_cost needs at least 2 trials for a standard error".into(),
        ));
    }
    let costs = crate::par::try_map_indexed(trials, |t| -> Result<f64> {
        let mut rng = trial_rng(master_seed, t as u64);
        let traj = simulate(net, protocol, prior, mis, horizon, &mut rng)?;
        Ok(traj.cost_at(horizon))
    })?;
    let mean = costs.iter().sum::<f64>() / trials as f64;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (trials as f64 - 1.0);
    Ok(MCEstimate {
        mean_cost: mean,
        std_error: (var / trials as f64).sqrt(),
        trials,
        horizon,
    })
}

/// Horizon making the FJ transient decay below `tol`: smallest `T` with
/// `((1−λ) ρ(W_reg))^T ≤ tol`, capped to `max_t`.
pub fn horizon_for_tolerance(net: &Network, lambda: f64, tol: f64, max_t: usize) -> Result<usize> {
    let r = net.n_regular();
    let w_reg = net.w_nominal().view((0, 0), (r, r)).into_owned();
    let rho = numerics::spectral_radius(&w_reg)? * (1.0 - lambda);
    if rho <= 0.0 {
        return Ok(1);
    }
    if rho >= 1.0 {
        return Ok(max_t);
    }
    let t = (tol.ln() / rho.ln()).ceil() as usize;
    Ok(t.clamp(1, max_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{generate, GraphKind, GraphSpec};
    use approx::assert_abs_diff_eq;

    fn two_node_net() -> Network {
        // Nodes {1, 2}, edge between them; node 2 misbehaving.
        Network::from_edges(2, &[(0, 1)])
            .unwrap()
            .mark_misbehaving(&[2])
            .unwrap()
    }

    #[test]
    fn sampled_covariance_matches_prior() {
        let n = 100;
        let prior = PriorModel::scaled_identity(n, 0.1).unwrap();
        let draws = 100_000usize;
        let mut rng = trial_rng(1234, 0);
        let mut acc = Matrix::zeros(n, n);
        for _ in 0..draws {
            let theta = prior.sample(&mut rng);
            acc.syger(1.0, &theta, &theta, 1.0);
        }
        let sample_cov = acc / draws as f64;
        // Entrywise sampling noise: var of a cov entry is (Σii Σjj + Σij²)/draws.
        let mut outside_3sigma = 0usize;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                let expected = if i == j { 0.1 } else { 0.0 };
                let var = (0.1 * 0.1 + expected * expected) / draws as f64;
                let z = (sample_cov[(i, j)] - expected).abs() / var.sqrt();
                worst = worst.max(z);
                if z > 3.0 {
                    outside_3sigma += 1;
                }
            }
        }
        let entries = n * (n + 1) / 2;
        // ~0.27% of entries are expected beyond 3σ; allow 1%.
        assert!(
            (outside_3sigma as f64) < 0.01 * entries as f64,
            "{outside_3sigma} of {entries} entries beyond 3σ"
        );
        assert!(worst < 6.0, "worst z-score {worst}");
    }

    #[test]
    fn fixed_bias_returned_verbatim_and_zero_v_gives_zero() {
        let mis = MisbehaviorModel::scaled(5, 0.0, 0.0)
            .unwrap()
            .with_fixed_bias(Vector::from_row_slice(&[2.0, 3.0, 4.0, 5.0, 6.0]))
            .unwrap();
        let mut rng = trial_rng(0, 0);
        let v = mis.sample_bias(&mut rng);
        assert_eq!(v, Vector::from_row_slice(&[2.0, 3.0, 4.0, 5.0, 6.0]));

        let mis_zero = MisbehaviorModel::scaled(3, 0.0, 0.0).unwrap();
        let v = mis_zero.sample_bias(&mut rng);
        assert_eq!(v, Vector::zeros(3));
    }

    #[test]
    fn fj_step_full_competition_freezes_observations() {
        let net = generate(&GraphSpec {
            kind: GraphKind::KRegular { degree: 3 },
            n: 12,
            seed: 5,
        })
        .unwrap()
        .mark_misbehaving(&[12])
        .unwrap();
        let theta = Vector::from_fn(12, |i, _| i as f64);
        let bias = Vector::from_row_slice(&[7.0]);
        let noise = Vector::zeros(1);
        let x = Vector::from_element(12, 100.0);
        let next = step_fj(&net, 1.0, &x, &theta, &bias, &noise).unwrap();
        for i in 0..net.n_regular() {
            assert_eq!(next[i], theta[i]);
        }
        assert_eq!(next[11], theta[11] + 7.0);
    }

    #[test]
    fn fj_step_zero_lambda_is_consensus() {
        let net = generate(&GraphSpec {
            kind: GraphKind::ErdosRenyi { p: 0.4 },
            n: 9,
            seed: 2,
        })
        .unwrap();
        let mut rng = trial_rng(3, 0);
        let x = Vector::from_fn(9, |_, _| rng.random::<f64>());
        let theta = Vector::zeros(9);
        let next = step_fj(&net, 0.0, &x, &theta, &Vector::zeros(0), &Vector::zeros(0)).unwrap();
        let expected = net.w_nominal() * &x;
        assert!((next - expected).amax() < 1e-14);
    }

    #[test]
    fn fj_rejects_lambda_outside_unit_interval() {
        let net = two_node_net();
        let z1 = Vector::zeros(1);
        let z2 = Vector::zeros(2);
        assert!(step_fj(&net, -0.1, &z2, &z2, &z1, &z1).is_err());
        assert!(step_fj(&net, 1.1, &z2, &z2, &z1, &z1).is_err());
    }

    #[test]
    fn two_node_fj_converges_to_resolvent_mean() {
        // Fixed point of x₁⁺ = 0.5 θ₁ + 0.5 (θ₂ + v₂) is the L-predicted mean.
        let net = two_node_net();
        let prior = PriorModel::scaled_identity(2, 1.0).unwrap();
        let mis = MisbehaviorModel::scaled(1, 0.0, 0.0)
            .unwrap()
            .with_fixed_bias(Vector::from_row_slice(&[3.0]))
            .unwrap();
        let mut rng = trial_rng(8, 0);
        let traj = simulate(&net, Protocol::Fj { lambda: 0.5 }, &prior, &mis, 60, &mut rng).unwrap();
        let expected = 0.5 * traj.theta[0] + 0.5 * (traj.theta[1] + 3.0);
        assert_abs_diff_eq!(traj.states[(60, 0)], expected, epsilon = 1e-9);
    }

    #[test]
    fn wmsr_discards_extremes() {
        // Star around node 0 with neighbor values (−1, 5, 0.1), own value 0, F = 1:
        // 5 and −1 are discarded, leaving {0, 0.1}.
        let net = Network::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let x = Vector::from_row_slice(&[0.0, -1.0, 5.0, 0.1]);
        let next = step_wmsr(&net, 1, &x);
        assert_abs_diff_eq!(next[0], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn wmsr_zero_f_is_uniform_consensus() {
        let net = generate(&GraphSpec {
            kind: GraphKind::KRegular { degree: 4 },
            n: 10,
            seed: 1,
        })
        .unwrap();
        let mut rng = trial_rng(5, 0);
        let x = Vector::from_fn(10, |_, _| rng.random::<f64>());
        let next = step_wmsr(&net, 0, &x);
        for i in 0..10 {
            let mut sum = x[i];
            for &j in net.neighbors(i) {
                sum += x[j];
            }
            assert_abs_diff_eq!(next[i], sum / 5.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn wmsr_keeps_equal_values() {
        let net = Network::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let x = Vector::from_element(3, 2.5);
        let next = step_wmsr(&net, 2, &x);
        assert_eq!(next[0], 2.5);
    }

    /// Literal-definition oracle for the W-MSR trimming rule: enumerate the
    /// discard set explicitly instead of sorting in place.
    fn wmsr_oracle(net: &Network, f: usize, x: &Vector, i: usize) -> f64 {
        let mut above: Vec<usize> = net.neighbors(i).iter().copied().filter(|&j| x[j] > x[i]).collect();
        let mut below: Vec<usize> = net.neighbors(i).iter().copied().filter(|&j| x[j] < x[i]).collect();
        above.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
        below.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        let dropped: Vec<usize> = above
            .iter()
            .take(f)
            .chain(below.iter().take(f))
            .copied()
            .collect();
        let kept: Vec<f64> = net
            .neighbors(i)
            .iter()
            .filter(|j| !dropped.contains(j))
            .map(|&j| x[j])
            .chain(std::iter::once(x[i]))
            .collect();
        kept.iter().sum::<f64>() / kept.len() as f64
    }

    #[test]
    fn wmsr_matches_definition_oracle_with_ties() {
        let net = generate(&GraphSpec {
            kind: GraphKind::KRegular { degree: 5 },
            n: 12,
            seed: 9,
        })
        .unwrap();
        let mut rng = trial_rng(77, 0);
        for f in 0..3 {
            for _ in 0..50 {
                // Quantized values force plenty of ties.
                let x = Vector::from_fn(12, |_, _| (rng.random_range(0..5) as f64) * 0.5);
                let next = step_wmsr(&net, f, &x);
                for i in 0..12 {
                    assert_abs_diff_eq!(next[i], wmsr_oracle(&net, f, &x, i), epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn wmsr_update_stays_in_retained_range() {
        let net = generate(&GraphSpec {
            kind: GraphKind::KRegular { degree: 4 },
            n: 14,
            seed: 3,
        })
        .unwrap();
        let mut rng = trial_rng(21, 0);
        for _ in 0..20 {
            let x = Vector::from_fn(14, |_, _| rng.random_range(-5.0..5.0));
            let next = step_wmsr(&net, 1, &x);
            for i in 0..14 {
                let lo = net.neighbors(i).iter().map(|&j| x[j]).fold(x[i], f64::min);
                let hi = net.neighbors(i).iter().map(|&j| x[j]).fold(x[i], f64::max);
                assert!(next[i] >= lo - 1e-12 && next[i] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn saba_on_constant_values_is_consensus() {
        let net = generate(&GraphSpec {
            kind: GraphKind::KRegular { degree: 3 },
            n: 8,
            seed: 4,
        })
        .unwrap();
        let x = Vector::from_fn(8, |i, _| i as f64);
        // Same values broadcast repeatedly: medians equal the values.
        let mut buffers = SabaBuffers::new(8);
        let _ = step_saba(&net, &mut buffers, &x);
        let _ = step_saba(&net, &mut buffers, &x);
        let next = step_saba(&net, &mut buffers, &x);
        let expected = net.w_nominal() * &x;
        for i in 0..8 {
            assert_abs_diff_eq!(next[i], expected[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn saba_first_step_equals_consensus_step() {
        let net = generate(&GraphSpec {
            kind: GraphKind::ErdosRenyi { p: 0.5 },
            n: 7,
            seed: 6,
        })
        .unwrap();
        let mut rng = trial_rng(9, 0);
        let x = Vector::from_fn(7, |_, _| rng.random::<f64>());
        let mut buffers = SabaBuffers::new(7);
        let next = step_saba(&net, &mut buffers, &x);
        let expected = net.w_nominal() * &x;
        assert!((next - expected).amax() < 1e-14);
    }

    #[test]
    fn saba_median_damps_noise_but_not_bias() {
        // A noisy misbehaving broadcast votes to ≈ θ_m + v_m: the median of
        // symmetric noise collapses while the bias survives.
        let net = two_node_net();
        let prior = PriorModel::scaled_identity(2, 1e-12).unwrap();
        let mis = MisbehaviorModel::scaled(1, 0.0, 4.0)
            .unwrap()
            .with_fixed_bias(Vector::from_row_slice(&[5.0]))
            .unwrap();
        let mut rng = trial_rng(13, 0);
        let traj = simulate(&net, Protocol::Saba, &prior, &mis, 400, &mut rng).unwrap();
        // Node 1's update is exactly the voted value of node 2.
        let final_vote = traj.states[(400, 0)];
        let drift = (final_vote - (traj.theta[1] + 5.0)).abs();
        // Median standard error ≈ 1.25 σ/√k ≈ 0.125 at k = 400, σ = 2.
        assert!(drift < 0.5, "voted value drift {drift}");
    }

    #[test]
    fn simulate_full_competition_pins_regular_states() {
        let net = two_node_net();
        let prior = PriorModel::scaled_identity(2, 1.0).unwrap();
        let mis = MisbehaviorModel::scaled(1, 2.0, 1.0).unwrap();
        let mut rng = trial_rng(30, 0);
        let traj = simulate(&net, Protocol::Fj { lambda: 1.0 }, &prior, &mis, 10, &mut rng).unwrap();
        for k in 0..=10 {
            assert_eq!(traj.states[(k, 0)], traj.theta[0]);
        }
    }

    #[test]
    fn consensus_with_single_attacker_converges_to_biased_value() {
        // Path 1–2–3 with node 3 misbehaving, Q = 0: regular states converge to
        // θ_m + v_m.
        let net = Network::from_edges(3, &[(0, 1), (1, 2)])
            .unwrap()
            .mark_misbehaving(&[3])
            .unwrap();
        let prior = PriorModel::scaled_identity(3, 1.0).unwrap();
        let mis = MisbehaviorModel::scaled(1, 0.0, 0.0)
            .unwrap()
            .with_fixed_bias(Vector::from_row_slice(&[2.0]))
            .unwrap();
        let mut rng = trial_rng(44, 0);
        let traj = simulate(&net, Protocol::Consensus, &prior, &mis, 200, &mut rng).unwrap();
        let target = traj.theta[2] + 2.0;
        for i in 0..2 {
            assert_abs_diff_eq!(traj.states[(200, i)], target, epsilon = 1e-6);
        }
    }

    #[test]
    fn misbehaving_rows_follow_their_broadcast_rule_under_every_protocol() {
        let net = generate(&GraphSpec {
            kind: GraphKind::KRegular { degree: 3 },
            n: 10,
            seed: 12,
        })
        .unwrap()
        .mark_misbehaving(&[2, 9])
        .unwrap();
        let prior = PriorModel::scaled_identity(10, 1.0).unwrap();
        let mis = MisbehaviorModel::scaled(2, 3.0, 0.5).unwrap();
        for protocol in [
            Protocol::Consensus,
            Protocol::Fj { lambda: 0.3 },
            Protocol::Wmsr { f: 1 },
            Protocol::Saba,
        ] {
            let mut rng = trial_rng(100, 7);
            let traj = simulate(&net, protocol, &prior, &mis, 25, &mut rng).unwrap();
            let r = net.n_regular();
            for k in 0..=25 {
                for j in 0..2 {
                    let expected = traj.theta[r + j] + traj.bias[j] + traj.noise[(k, j)];
                    assert_eq!(traj.states[(k, r + j)], expected);
                }
            }
        }
    }

    #[test]
    fn fj_states_stay_in_convex_hull() {
        let net = generate(&GraphSpec {
            kind: GraphKind::ErdosRenyi { p: 0.5 },
            n: 9,
            seed: 17,
        })
        .unwrap()
        .mark_misbehaving(&[9])
        .unwrap();
        let prior = PriorModel::scaled_identity(9, 1.0).unwrap();
        let mis = MisbehaviorModel::scaled(1, 4.0, 1.0).unwrap();
        let mut rng = trial_rng(55, 0);
        let traj = simulate(&net, Protocol::Fj { lambda: 0.4 }, &prior, &mis, 30, &mut rng).unwrap();
        for k in 0..30 {
            for i in 0..net.n_regular() {
                let mut lo = traj.theta[i];
                let mut hi = traj.theta[i];
                for &j in net.neighbors(i) {
                    lo = lo.min(traj.states[(k, j)]);
                    hi = hi.max(traj.states[(k, j)]);
                }
                let next = traj.states[(k + 1, i)];
                assert!(next >= lo - 1e-12 && next <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn mc_cost_full_competition_identity_prior() {
        // λ = 1, Σ = I, no misbehavior influence: E[cost] = R − 1.
        let net = generate(&GraphSpec {
            kind: GraphKind::KRegular { degree: 3 },
            n: 12,
            seed: 23,
        })
        .unwrap();
        let prior = PriorModel::scaled_identity(12, 1.0).unwrap();
        let mis = MisbehaviorModel::scaled(0, 0.0, 0.0).unwrap();
        let est = mc_cost(&net, Protocol::Fj { lambda: 1.0 }, &prior, &mis, 5, 4000, 99).unwrap();
        let expected = 11.0;
        assert!(
            (est.mean_cost - expected).abs() <= 3.0 * est.std_error,
            "mc {} ± {} vs {expected}",
            est.mean_cost,
            est.std_error
        );
    }

    #[test]
    fn mc_cost_nominal_consensus_vanishes() {
        // Doubly stochastic W° (regular graph), no misbehaving nodes.
        let net = generate(&GraphSpec {
            kind: GraphKind::KRegular { degree: 4 },
            n: 10,
            seed: 31,
        })
        .unwrap();
        let prior = PriorModel::scaled_identity(10, 1.0).unwrap();
        let mis = MisbehaviorModel::scaled(0, 0.0, 0.0).unwrap();
        let est = mc_cost(&net, Protocol::Consensus, &prior, &mis, 400, 50, 1).unwrap();
        assert!(est.mean_cost < 1e-10, "nominal consensus cost {}", est.mean_cost);
    }

    #[test]
    fn mc_cost_two_node_closed_form() {
        // e(0.5) = 0.5 + 0.25 d + 0.25 q for Σ = I.
        let net = two_node_net();
        let prior = PriorModel::scaled_identity(2, 1.0).unwrap();
        let (d, q) = (2.0, 1.5);
        let mis = MisbehaviorModel::scaled(1, d, q).unwrap();
        let est = mc_cost(&net, Protocol::Fj { lambda: 0.5 }, &prior, &mis, 80, 20_000, 7).unwrap();
        let expected = 0.5 + 0.25 * d + 0.25 * q;
        assert!(
            (est.mean_cost - expected).abs() <= 3.0 * est.std_error,
            "mc {} ± {} vs {expected}",
            est.mean_cost,
            est.std_error
        );
    }

    #[test]
    fn mc_cost_is_reproducible() {
        let net = two_node_net();
        let prior = PriorModel::scaled_identity(2, 1.0).unwrap();
        let mis = MisbehaviorModel::scaled(1, 1.0, 1.0).unwrap();
        let a = mc_cost(&net, Protocol::Fj { lambda: 0.3 }, &prior, &mis, 20, 100, 5).unwrap();
        let b = mc_cost(&net, Protocol::Fj { lambda: 0.3 }, &prior, &mis, 20, 100, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn horizon_bound_is_monotone_in_tolerance() {
        let net = two_node_net();
        let t1 = horizon_for_tolerance(&net, 0.2, 1e-3, 100_000).unwrap();
        let t2 = horizon_for_tolerance(&net, 0.2, 1e-9, 100_000).unwrap();
        assert!(t2 >= t1);
    }
}
