//! Single-task inverse constraint learning.
//!
//! The outer game: each round solves constrained RL against the current
//! constraint with the tolerance set to the expert's (empirical) violation,
//! then hands the constraint player one more linear loss gradient and lets
//! FTRL pick the next constraint. Per-round losses, the best-in-hindsight
//! comparator, and the regret curve are all exact inner products in feature
//! space.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::constraints::{
    empirical_features, expected_features, ftrl_alpha, ftrl_update, ConstraintSetDescriptor,
    FeatureMap, LinearConstraint,
};
use crate::error::{Error, Result};
use crate::mdp::{occupancy, value, Mdp, OccupancyMeasure, Policy, ScalarSignal, Trajectory};
use crate::rng;
use crate::solvers::{crl, CrlParams};

/// RNG stream label for the train/validation demo split. Shared with the
/// multi-task loop so a one-task bundle reproduces the single-task run
/// exactly.
pub(crate) const VAL_SPLIT_LABEL: &str = "validation-split";

/// How the per-round CRL tolerance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// `delta_i = J_hat(pi_E, c_i)` from the training demos (the single-task
    /// game).
    ExpertViolation,
    /// `delta_i = 0` (the multi-task game, where expert safety is baked into
    /// the restricted class).
    Zero,
}

/// Optional cost-limit buffer annealed linearly to zero over the first
/// `rounds` outer rounds. Off by default; exact solvers do not need it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Anneal {
    pub buffer: f64,
    pub rounds: usize,
}

impl Anneal {
    fn offset(&self, round: usize) -> f64 {
        if self.rounds == 0 {
            return 0.0;
        }
        let progress = (round - 1) as f64 / self.rounds as f64;
        self.buffer * (1.0 - progress).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum AlphaRule {
    /// `scale * G sqrt(N) / D` from the known gradient and diameter bounds.
    Auto(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IclOptions {
    pub delta_mode: DeltaMode,
    pub anneal: Option<Anneal>,
    /// Fraction of demos held out for validation selection (at least one
    /// trajectory when there are two or more).
    pub validation_fraction: f64,
    pub alpha: AlphaRule,
}

impl Default for IclOptions {
    fn default() -> Self {
        IclOptions {
            delta_mode: DeltaMode::ExpertViolation,
            anneal: None,
            validation_fraction: 0.2,
            alpha: AlphaRule::Auto(1.0),
        }
    }
}

/// Everything recorded about one outer round.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    /// The constraint the policy player faced this round.
    pub constraint: LinearConstraint,
    /// Markov policy with the occupancy of the round's CRL mixture.
    pub policy: Policy,
    /// `Phi(rho_i)` of that policy.
    pub learner_features: Array1<f64>,
    /// `ell_i(c_i)`
    pub loss: f64,
    /// Tolerance handed to CRL this round.
    pub delta: f64,
    /// Expert's empirical violation under `constraint`.
    pub expert_violation: f64,
    /// `J(pi_i, r)`
    pub value_r: f64,
    /// `J(pi_i, c_i)`
    pub violation_learned: f64,
    pub lambda_trace: Vec<f64>,
    /// Signal-export clips for this round's constraint (stays 0 for
    /// well-scaled classes).
    pub clip_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegretPoint {
    pub round: usize,
    /// `ell_i(c_i)`
    pub loss: f64,
    /// `Reg(i)`
    pub regret: f64,
    /// `Reg(i) / i`
    pub avg_regret: f64,
}

#[derive(Debug, Clone)]
pub struct IclTrace {
    pub rounds: Vec<RoundRecord>,
    /// Per-round loss gradients `g_i = (Phi(rho_i) - Phi_E) / T`.
    pub grads: Vec<Array1<f64>>,
    pub regret_curve: Vec<RegretPoint>,
    /// Index into `rounds` chosen on validation data.
    pub selected: usize,
    pub expert_train_features: Array1<f64>,
    pub expert_val_features: Array1<f64>,
    /// FTRL regularizer weight used for the run.
    pub alpha: f64,
    pub horizon: usize,
}

impl IclTrace {
    pub fn constraints(&self) -> impl Iterator<Item = &LinearConstraint> {
        self.rounds.iter().map(|r| &r.constraint)
    }

    pub fn selected_round(&self) -> &RoundRecord {
        &self.rounds[self.selected]
    }

    /// Loss of round `i`'s gradient under round `j`'s constraint,
    /// `ell_i(c_j)`.
    pub fn loss_at(&self, i: usize, j: usize) -> f64 {
        self.rounds[j].constraint.weights().dot(&self.grads[i])
    }
}

/// `ell_i(c) = (J(pi_i, c) - J(pi_E, c)) / T`, evaluated exactly through
/// feature expectations.
pub fn per_round_loss(
    learner_occ: &OccupancyMeasure,
    expert_features: &Array1<f64>,
    c: &LinearConstraint,
    fmap: &FeatureMap,
    horizon: usize,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::argument("horizon must be >= 1"));
    }
    let phi = expected_features(learner_occ, fmap)?;
    if expert_features.len() != fmap.dim() {
        return Err(Error::shape(format!(
            "expert features dim {} != {}",
            expert_features.len(),
            fmap.dim()
        )));
    }
    Ok(c.weights().dot(&(&phi - expert_features)) / horizon as f64)
}

/// Best-in-hindsight comparator: `argmax_w sum_i <w, g_i>` over the set with
/// no regularizer. Computed as the limit of the regularized update: the
/// Euclidean projection of a far point along the summed gradient. A zero
/// gradient sum returns the zero constraint.
pub fn best_in_hindsight(
    loss_grads: &[Array1<f64>],
    set: &ConstraintSetDescriptor,
    fmap: &FeatureMap,
) -> Result<LinearConstraint> {
    if loss_grads.is_empty() {
        return Err(Error::argument("best_in_hindsight needs at least one gradient"));
    }
    let mut total = Array1::zeros(fmap.dim());
    for g in loss_grads {
        if g.len() != fmap.dim() {
            return Err(Error::shape(format!("gradient dim {} != {}", g.len(), fmap.dim())));
        }
        total += g;
    }
    let norm = total.dot(&total).sqrt();
    if norm <= 1e-14 {
        return Ok(LinearConstraint::zero(fmap, set.w_max()));
    }
    if set.halfspaces().is_empty() {
        return LinearConstraint::new(fmap, total * (set.w_max() / norm), set.w_max());
    }
    let far = &total * (set.w_max() * 1e5 / norm);
    let w = set.project(&far)?;
    LinearConstraint::new(fmap, w, set.w_max())
}

/// `(Reg(N), Reg(N)/N)` against the best-in-hindsight comparator.
pub fn regret(
    trace: &IclTrace,
    set: &ConstraintSetDescriptor,
    fmap: &FeatureMap,
) -> Result<(f64, f64)> {
    regret_prefix(&trace.grads, trace.rounds.iter().map(|r| r.loss), set, fmap)
}

pub(crate) fn regret_prefix(
    grads: &[Array1<f64>],
    played_losses: impl Iterator<Item = f64>,
    set: &ConstraintSetDescriptor,
    fmap: &FeatureMap,
) -> Result<(f64, f64)> {
    let comparator = best_in_hindsight(grads, set, fmap)?;
    let best: f64 = grads.iter().map(|g| comparator.weights().dot(g)).sum();
    let played: f64 = played_losses.sum();
    let reg = best - played;
    Ok((reg, reg / grads.len() as f64))
}

/// Deterministic seeded train/validation split of the demo batch. With a
/// single demo the batch is reused for both and the caller sees a warning in
/// the trace (the split cannot be disjoint).
pub(crate) fn split_demos(
    trajs: &[Trajectory],
    validation_fraction: f64,
    seed: u64,
    task_index: u64,
) -> (Vec<Trajectory>, Vec<Trajectory>) {
    if trajs.len() < 2 {
        return (trajs.to_vec(), trajs.to_vec());
    }
    let mut order: Vec<usize> = (0..trajs.len()).collect();
    let mut rng = rng::stream(seed, VAL_SPLIT_LABEL, task_index);
    // Fisher-Yates
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_val = ((trajs.len() as f64 * validation_fraction).round() as usize)
        .max(1)
        .min(trajs.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let train = train_idx.iter().map(|&i| trajs[i].clone()).collect();
    let val = val_idx.iter().map(|&i| trajs[i].clone()).collect();
    (train, val)
}

/// The single-task game (one policy player, one constraint player).
///
/// Round i: solve `CRL(r, c_i, delta = J_hat(pi_E, c_i))`, record the
/// mixture's feature expectations, and let FTRL pick `c_{i+1}` from the full
/// gradient history. Validation selection happens on held-out demos at the
/// end. Initialization is the all-slack constraint `w = 0`, which makes
/// round 1 plain RL.
pub fn icl(
    mdp: &Mdp,
    r: &ScalarSignal,
    expert_trajs: &[Trajectory],
    fmap: &FeatureMap,
    set: &ConstraintSetDescriptor,
    n_rounds: usize,
    crl_params: &CrlParams,
    seed: u64,
    options: &IclOptions,
) -> Result<IclTrace> {
    if expert_trajs.is_empty() {
        return Err(Error::argument("icl needs expert demonstrations"));
    }
    let (train, val) = split_demos(expert_trajs, options.validation_fraction, seed, 0);
    let expert_train_features = empirical_features(&train, fmap)?;
    let expert_val_features = empirical_features(&val, fmap)?;
    run_game(
        mdp,
        r,
        &expert_train_features,
        &expert_val_features,
        fmap,
        set,
        n_rounds,
        crl_params,
        options,
    )
}

/// Shared engine for the single- and multi-task loops (one task here; the
/// multi-task module aggregates gradients across tasks before calling FTRL).
#[allow(clippy::too_many_arguments)]
fn run_game(
    mdp: &Mdp,
    r: &ScalarSignal,
    expert_train_features: &Array1<f64>,
    expert_val_features: &Array1<f64>,
    fmap: &FeatureMap,
    set: &ConstraintSetDescriptor,
    n_rounds: usize,
    crl_params: &CrlParams,
    options: &IclOptions,
) -> Result<IclTrace> {
    if n_rounds == 0 {
        return Err(Error::argument("icl needs at least one round"));
    }
    set.verify_feasible()?;
    let horizon = mdp.horizon();
    let t = horizon as f64;
    let alpha = match options.alpha {
        AlphaRule::Auto(scale) => ftrl_alpha(fmap, set, n_rounds, scale),
        AlphaRule::Fixed(a) => a,
    };
    if !(alpha > 0.0) {
        return Err(Error::argument(format!("resolved alpha {alpha} must be positive")));
    }

    let mut constraint = LinearConstraint::zero(fmap, set.w_max());
    let mut grads: Vec<Array1<f64>> = Vec::with_capacity(n_rounds);
    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(n_rounds);

    for i in 1..=n_rounds {
        let (signal, clip_count) = constraint.to_signal(fmap)?;
        let expert_violation = constraint.value_of_features(expert_train_features);
        let delta = match options.delta_mode {
            DeltaMode::ExpertViolation => expert_violation,
            DeltaMode::Zero => 0.0,
        } + options.anneal.map_or(0.0, |a| a.offset(i));
        let delta = delta.clamp(-t, t);

        let res = crl(mdp, r, &signal, delta, crl_params)?;
        let learner_features = expected_features(&res.occupancy, fmap)?;
        let g = (&learner_features - expert_train_features) / t;
        let loss = constraint.weights().dot(&g);

        rounds.push(RoundRecord {
            constraint: constraint.clone(),
            policy: res.markov,
            learner_features,
            loss,
            delta,
            expert_violation,
            value_r: res.achieved_value,
            violation_learned: res.achieved_violation,
            lambda_trace: res.lambda_trace,
            clip_count,
        });
        grads.push(g);
        constraint = ftrl_update(&grads, alpha, set, fmap)?;
    }

    let mut regret_curve = Vec::with_capacity(n_rounds);
    for i in 1..=n_rounds {
        let (reg, avg) =
            regret_prefix(&grads[..i], rounds[..i].iter().map(|r| r.loss), set, fmap)?;
        regret_curve.push(RegretPoint { round: i, loss: rounds[i - 1].loss, regret: reg, avg_regret: avg });
    }

    let mut trace = IclTrace {
        rounds,
        grads,
        regret_curve,
        selected: 0,
        expert_train_features: expert_train_features.clone(),
        expert_val_features: expert_val_features.clone(),
        alpha,
        horizon,
    };
    trace.selected = select_by_features(&trace, mdp, r, expert_val_features, fmap)?;
    Ok(trace)
}

/// Validation selection: re-evaluate each stored policy under its own
/// constraint and pick the round minimizing the positive part of the
/// validation violation gap `max(0, J_val(pi_i, c_i) - J_hat_val(pi_E, c_i))`,
/// breaking ties toward higher reward `J(pi_i, r)` and then the earlier
/// round.
pub fn select_validation(
    trace: &IclTrace,
    mdp: &Mdp,
    r: &ScalarSignal,
    validation_expert_trajs: &[Trajectory],
    fmap: &FeatureMap,
) -> Result<usize> {
    if validation_expert_trajs.is_empty() {
        return Err(Error::argument("validation demo set is empty"));
    }
    let expert_val = empirical_features(validation_expert_trajs, fmap)?;
    select_by_features(trace, mdp, r, &expert_val, fmap)
}

fn select_by_features(
    trace: &IclTrace,
    mdp: &Mdp,
    r: &ScalarSignal,
    expert_val_features: &Array1<f64>,
    fmap: &FeatureMap,
) -> Result<usize> {
    let mut keys = Vec::with_capacity(trace.rounds.len());
    for round in &trace.rounds {
        let occ = occupancy(mdp, &round.policy)?;
        let learner = round.constraint.value_of_features(&expected_features(&occ, fmap)?);
        let expert = round.constraint.value_of_features(expert_val_features);
        let gap = (learner - expert).max(0.0);
        let reward = value(mdp, &round.policy, r)?;
        keys.push((gap, reward));
    }
    Ok(argmin_gap_then_reward(keys.into_iter()))
}

/// Shared validation ordering: smallest positive violation gap first, ties
/// broken by larger reward, then by the earlier round. Deterministic.
pub(crate) fn argmin_gap_then_reward(keys: impl Iterator<Item = (f64, f64)>) -> usize {
    let mut best = 0usize;
    let mut best_key = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, (gap, reward)) in keys.enumerate() {
        if gap < best_key.0 - 1e-12
            || ((gap - best_key.0).abs() <= 1e-12 && reward > best_key.1 + 1e-12)
        {
            best = i;
            best_key = (gap, reward);
        }
    }
    best
}
