//! Reproducible experiment drivers: the machinery behind the CLI commands and
//! the browser demo. Everything is deterministic given the inputs and a seed.

use serde::Serialize;

use crate::analysis::{
    self, build_actual_w, error_terms, optimal_lambda, resolvent_l, steady_state_p,
};
use crate::dynamics::{
    mc_cost, simulate, trial_rng, MisbehaviorModel, PriorModel, Protocol,
};
use crate::error::{Error, Result};
use crate::gramian::{controllability_gramian, reachability_index};
use crate::graphs::Network;
use crate::netdesign::{greedy_prune, matching_baseline, DesignObjective, KPolicy, PruneTrace};
use crate::numerics::Matrix;

/// Default tolerance for λ* refinement.
pub const LAMBDA_REFINE_TOL: f64 = 1e-5;

/// Resolves `"auto"` competition: the minimizer of the theoretical error under
/// the design misbehavior model `V = design_v·I`, `Q = 0`, regardless of the
/// realized attack.
pub fn auto_lambda(
    net: &Network,
    prior: &PriorModel,
    design_v: f64,
    grid_resolution: usize,
) -> Result<f64> {
    let design = MisbehaviorModel::scaled(net.n_misbehaving(), design_v, 0.0)?;
    Ok(optimal_lambda(net, prior, &design, grid_resolution, LAMBDA_REFINE_TOL)?.0)
}

/// One λ sample of an error curve.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub e_v: f64,
    pub e_n: f64,
    pub e_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_deception: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_consensus: Option<f64>,
}

/// A full error curve with its minimizer.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorCurve {
    /// Value of the swept parameter this curve belongs to, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub points: Vec<CurvePoint>,
    pub lambda_star: f64,
    pub e_star: f64,
}

pub fn lambda_grid(resolution: usize) -> Vec<f64> {
    let lo = 1e-4;
    (0..resolution)
        .map(|i| lo + (1.0 - lo) * i as f64 / (resolution - 1) as f64)
        .collect()
}

/// Error curve over the λ grid plus the refined minimizer.
pub fn error_curve(
    net: &Network,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
    grid_resolution: usize,
) -> Result<ErrorCurve> {
    let grid = lambda_grid(grid_resolution);
    let points = crate::par::try_map_indexed(grid.len(), |i| -> Result<CurvePoint> {
        let report = error_terms(net, grid[i], prior, mis)?;
        Ok(CurvePoint {
            lambda: report.lambda,
            e_v: report.e_v,
            e_n: report.e_n,
            e_total: report.e_total,
            e_deception: report.e_deception,
            e_consensus: report.e_consensus,
        })
    })?;
    let (lambda_star, e_star) =
        optimal_lambda(net, prior, mis, grid_resolution, LAMBDA_REFINE_TOL)?;
    Ok(ErrorCurve {
        sweep_value: None,
        points,
        lambda_star,
        e_star,
    })
}

/// Error curves for a family of bias intensities `d` (with `V = d·I` and a fixed
/// `Q = q·I`), sharing the λ-dependent work across the whole family: per grid
/// point only `tr(Σ Eᵀ E)`, `tr(L₂ᵀ L₂)` and `e_n` are computed once, and each
/// `d` costs O(1) per point plus one golden-section refinement.
pub fn error_curve_d_sweep(
    net: &Network,
    prior: &PriorModel,
    q: f64,
    d_values: &[f64],
    grid_resolution: usize,
) -> Result<Vec<ErrorCurve>> {
    let m = net.n_misbehaving();
    let r = net.n_regular();
    if m == 0 {
        return Err(Error::InvalidInput(
            "d-sweep needs misbehaving nodes".into(),
        ));
    }
    let grid = lambda_grid(grid_resolution);
    let actual = build_actual_w(net);
    let q_cov = Matrix::identity(m, m) * q;
    let sigma = prior.sigma();
    let decompose = m == 1 && prior.is_diagonal();

    struct Parts {
        t_sigma: f64,
        power: f64,
        e_n: f64,
        e_consensus: Option<f64>,
    }
    let parts = crate::par::try_map_indexed(grid.len(), |i| -> Result<Parts> {
        let lambda = grid[i];
        let l = resolvent_l(&actual, lambda)?;
        let mut e = l.rows(0, r).into_owned();
        for row in 0..r {
            for col in 0..r {
                e[(row, col)] -= 1.0 / r as f64;
            }
        }
        let l2 = l.view((0, r), (r, m)).into_owned();
        let power = l2.norm_squared();
        let t_sigma = if prior.is_diagonal() {
            (0..e.ncols())
                .map(|j| sigma[(j, j)] * e.column(j).norm_squared())
                .sum()
        } else {
            sigma.dot(&e.tr_mul(&e))
        };
        let e_n = steady_state_p(net, lambda, &q_cov)?.trace();
        let e_consensus = decompose.then(|| {
            (0..r)
                .map(|i| sigma[(i, i)] * e.column(i).norm_squared())
                .sum()
        });
        Ok(Parts {
            t_sigma,
            power,
            e_n,
            e_consensus,
        })
    })?;

    let mut curves = Vec::with_capacity(d_values.len());
    for &d in d_values {
        let mis = MisbehaviorModel::scaled(m, d, q)?;
        let points: Vec<CurvePoint> = grid
            .iter()
            .zip(parts.iter())
            .map(|(&lambda, p)| {
                let e_v = p.t_sigma + d * p.power;
                let e_deception = p
                    .e_consensus
                    .map(|_| (sigma[(r, r)] + d) * p.power + p.e_n);
                CurvePoint {
                    lambda,
                    e_v,
                    e_n: p.e_n,
                    e_total: e_v + p.e_n,
                    e_deception,
                    e_consensus: p.e_consensus,
                }
            })
            .collect();

        let best_idx = points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.e_total.total_cmp(&b.1.e_total))
            .map(|(i, _)| i)
            .expect("nonempty grid");
        let lo = grid[best_idx.saturating_sub(1)];
        let hi = grid[(best_idx + 1).min(grid.len() - 1)];
        let objective =
            |lambda: f64| -> Result<f64> { Ok(error_terms(net, lambda, prior, &mis)?.e_total) };
        let (mut lambda_star, mut e_star) =
            analysis::golden_section(&objective, lo, hi, LAMBDA_REFINE_TOL)?;
        if points[best_idx].e_total < e_star {
            lambda_star = grid[best_idx];
            e_star = points[best_idx].e_total;
        }
        curves.push(ErrorCurve {
            sweep_value: Some(d),
            points,
            lambda_star,
            e_star,
        });
    }
    Ok(curves)
}

/// Mean cost trajectories of several protocols on identical worlds.
#[derive(Debug, Clone, Serialize)]
pub struct CompareResult {
    pub horizon: usize,
    pub trials: usize,
    pub series: Vec<ProtocolSeries>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolSeries {
    pub name: String,
    /// Resolved competition for FJ entries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Mean cost `Σ_{i∈R}(x_i(k) − θ̄_R)²` per step, averaged over trials.
    pub mean_cost: Vec<f64>,
}

/// Runs every protocol on the same sampled worlds (per-trial RNG streams are
/// re-seeded per protocol, so θ, biases and noise paths coincide exactly) and
/// averages the per-step cost.
pub fn compare_protocols(
    net: &Network,
    protocols: &[Protocol],
    prior: &PriorModel,
    mis: &MisbehaviorModel,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<CompareResult> {
    if trials == 0 {
        return Err(Error::InvalidInput("compare needs at least one trial".into()));
    }
    let mut series = Vec::with_capacity(protocols.len());
    for &protocol in protocols {
        let per_trial = crate::par::try_map_indexed(trials, |t| -> Result<Vec<f64>> {
            let mut rng = trial_rng(seed, t as u64);
            let traj = simulate(net, protocol, prior, mis, horizon, &mut rng)?;
            Ok((0..=horizon).map(|k| traj.cost_at(k)).collect())
        })?;
        let mut mean_cost = vec![0.0; horizon + 1];
        for costs in &per_trial {
            for (acc, c) in mean_cost.iter_mut().zip(costs.iter()) {
                *acc += c;
            }
        }
        for acc in mean_cost.iter_mut() {
            *acc /= trials as f64;
        }
        series.push(ProtocolSeries {
            name: protocol.name().to_string(),
            lambda: match protocol {
                Protocol::Fj { lambda } => Some(lambda),
                _ => None,
            },
            mean_cost,
        });
    }
    Ok(CompareResult {
        horizon,
        trials,
        series,
    })
}

/// One analytic-vs-Monte-Carlo comparison.
#[derive(Debug, Clone, Serialize)]
pub struct McCheck {
    pub lambda: f64,
    pub analytic: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    /// `|mc_mean − analytic| / mc_std_error`.
    pub z_score: f64,
}

/// Validates the closed-form error against the simulator at each λ.
pub fn mc_validate(
    net: &Network,
    prior: &PriorModel,
    mis: &MisbehaviorModel,
    lambdas: &[f64],
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<McCheck>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let analytic = error_terms(net, lambda, prior, mis)?.e_total;
            let est = mc_cost(
                net,
                Protocol::Fj { lambda },
                prior,
                mis,
                horizon,
                trials,
                seed,
            )?;
            let diff = (est.mean_cost - analytic).abs();
            let z_score = if est.std_error > 0.0 {
                diff / est.std_error
            } else if diff <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(McCheck {
                lambda,
                analytic,
                mc_mean: est.mean_cost,
                mc_std_error: est.std_error,
                z_score,
            })
        })
        .collect()
}

/// One row of a Gramian λ-curve.
#[derive(Debug, Clone, Serialize)]
pub struct GramianPoint {
    pub lambda: f64,
    pub k_steps: usize,
    pub trace: f64,
}

/// `tr W(K)` over a λ grid, with `K` per the policy (resolved at each λ for the
/// reachability policy).
pub fn gramian_curve(
    net: &Network,
    lambdas: &[f64],
    k_policy: KPolicy,
) -> Result<Vec<GramianPoint>> {
    crate::par::try_map_indexed(lambdas.len(), |i| {
        let lambda = lambdas[i];
        let k = match k_policy {
            KPolicy::Fixed(k) => k,
            KPolicy::RegularCount => net.n_regular(),
            KPolicy::Reachability => {
                reachability_index(net, lambda).unwrap_or_else(|_| net.n_regular())
            }
        };
        Ok(GramianPoint {
            lambda,
            k_steps: k,
            trace: controllability_gramian(net, lambda, k)?.trace,
        })
    })
}

/// Greedy pruning trace with the perfect-matching baseline alongside.
#[derive(Debug, Clone, Serialize)]
pub struct PruneStudy {
    pub trace: PruneTrace,
    /// Worst-case objective after removing a perfect matching; `None` if the
    /// graph has none.
    pub matching_baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matching_infeasible: Option<String>,
}

pub fn prune_study(
    net: &Network,
    objective: &DesignObjective,
    max_removals: usize,
) -> Result<PruneStudy> {
    let trace = greedy_prune(net, objective, max_removals)?;
    match matching_baseline(net, objective) {
        Ok(value) => Ok(PruneStudy {
            trace,
            matching_baseline: Some(value),
            matching_infeasible: None,
        }),
        Err(Error::Infeasible(msg)) => Ok(PruneStudy {
            trace,
            matching_baseline: None,
            matching_infeasible: Some(msg),
        }),
        Err(e) => Err(e),
    }
}
