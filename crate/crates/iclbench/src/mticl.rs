//! Multi-task inverse constraint learning.
//!
//! Same game as the single-task loop, but each round solves one CRL problem
//! per task at tolerance zero and the constraint player updates on the
//! task-averaged gradient. Expert safety is enforced structurally: the class
//! is restricted to constraints under which every training expert's
//! empirical violation is nonpositive. Also houses the sample-complexity
//! calculator and the assumption diagnostics.

use ndarray::Array1;
use serde::Serialize;
use std::path::Path;

use crate::constraints::{
    build_restricted_set, empirical_features, expected_features, ftrl_alpha, ftrl_update,
    ConstraintSetDescriptor, FeatureMap, LinearConstraint,
};
use crate::error::{Error, Result};
use crate::icl::{
    argmin_gap_then_reward, regret_prefix, split_demos, AlphaRule, IclOptions, RegretPoint,
};
use crate::mdp::{
    empirical_value, trajectories_from_json, trajectories_to_json, value, Mdp, OccupancyMeasure,
    Policy, PolicyFile, ScalarSignal, Trajectory,
};
use crate::rng;
use crate::solvers::{crl, greedy_on_table, CrlParams};

/// One task: a reward, expert demonstrations, and optionally the expert
/// policy itself (built-in fixtures keep it for exact evaluation).
#[derive(Debug, Clone)]
pub struct Task {
    pub id: String,
    pub reward: ScalarSignal,
    pub expert_trajs: Vec<Trajectory>,
    pub expert_policy: Option<Policy>,
}

/// `K` tasks sharing one MDP and (by assumption) one ground-truth
/// constraint.
#[derive(Debug, Clone)]
pub struct TaskBundle {
    pub mdp: Mdp,
    pub tasks: Vec<Task>,
}

impl TaskBundle {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::argument("task bundle needs K >= 1 tasks"));
        }
        for task in &self.tasks {
            self.mdp.check_signal(&task.reward)?;
            if task.expert_trajs.is_empty() {
                return Err(Error::argument(format!("task '{}' has no demos", task.id)));
            }
            for traj in &task.expert_trajs {
                traj.validate(&self.mdp)?;
            }
            if let Some(p) = &task.expert_policy {
                self.mdp.check_policy(p)?;
            }
        }
        Ok(())
    }

    /// Directory layout: `mdp.json`, `manifest.json` listing task ids, and
    /// per-task `tasks/<id>/{reward.json, demos.json[, expert_policy.json]}`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("mdp.json"), self.mdp.to_json())?;
        let manifest = BundleManifest { task_ids: self.tasks.iter().map(|t| t.id.clone()).collect() };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        for task in &self.tasks {
            let tdir = dir.join("tasks").join(&task.id);
            std::fs::create_dir_all(&tdir)?;
            std::fs::write(tdir.join("reward.json"), task.reward.to_json())?;
            std::fs::write(tdir.join("demos.json"), trajectories_to_json(&task.expert_trajs))?;
            if let Some(p) = &task.expert_policy {
                std::fs::write(
                    tdir.join("expert_policy.json"),
                    serde_json::to_string(&PolicyFile::from(p))?,
                )?;
            }
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<TaskBundle> {
        let mdp = Mdp::from_json(&std::fs::read_to_string(dir.join("mdp.json"))?)?;
        let manifest: BundleManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let mut tasks = Vec::with_capacity(manifest.task_ids.len());
        for id in &manifest.task_ids {
            let tdir = dir.join("tasks").join(id);
            let reward =
                ScalarSignal::from_json(&std::fs::read_to_string(tdir.join("reward.json"))?)?;
            let expert_trajs =
                trajectories_from_json(&std::fs::read_to_string(tdir.join("demos.json"))?)?;
            let policy_path = tdir.join("expert_policy.json");
            let expert_policy = if policy_path.exists() {
                let file: PolicyFile =
                    serde_json::from_str(&std::fs::read_to_string(policy_path)?)?;
                Some(Policy::try_from(&file)?)
            } else {
                None
            };
            tasks.push(Task { id: id.clone(), reward, expert_trajs, expert_policy });
        }
        let bundle = TaskBundle { mdp, tasks };
        bundle.validate()?;
        Ok(bundle)
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
struct BundleManifest {
    task_ids: Vec<String>,
}

/// Per-task record inside one multi-task round.
#[derive(Debug, Clone)]
pub struct MtTaskRound {
    pub task_id: String,
    pub policy: Policy,
    pub learner_features: Array1<f64>,
    /// `J(pi_i^k, r^k)`
    pub value_r: f64,
    /// `J(pi_i^k, c_i)`
    pub violation_learned: f64,
    /// Tolerance used for this task's CRL call (always 0 here).
    pub delta: f64,
    /// `(J(pi_i^k, c_i) - J_hat(pi_E^k, c_i)) / T`
    pub loss: f64,
    pub lambda_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MtRound {
    pub constraint: LinearConstraint,
    pub per_task: Vec<MtTaskRound>,
    /// `<w_i, g_i>` with `g_i` the task-averaged gradient.
    pub loss: f64,
    pub clip_count: usize,
}

#[derive(Debug, Clone)]
pub struct MtIclTrace {
    pub rounds: Vec<MtRound>,
    /// Task-averaged gradients `g_i = (1/TK) sum_k (Phi_i^k - Phi_E^k)`.
    pub grads: Vec<Array1<f64>>,
    pub regret_curve: Vec<RegretPoint>,
    pub selected: usize,
    /// Ids of tasks held out for validation (empty when K = 1, where a demo
    /// split is used instead).
    pub holdout_task_ids: Vec<String>,
    /// Per training task empirical expert features.
    pub expert_features: Vec<(String, Array1<f64>)>,
    pub alpha: f64,
    pub horizon: usize,
    pub restricted_set: ConstraintSetDescriptor,
    pub assumption: AssumptionReport,
}

impl MtIclTrace {
    pub fn selected_round(&self) -> &MtRound {
        &self.rounds[self.selected]
    }
}

/// Fraction of tasks held out for validation when `K >= 2`.
const TASK_HOLDOUT_FRACTION: f64 = 0.2;

/// The multi-task game over a task bundle.
///
/// Builds the restricted class from per-task empirical expert features,
/// solves `K` CRL problems at tolerance 0 per round, and updates the
/// constraint by FTRL on the task-averaged gradient. With two or more tasks,
/// validation selection re-solves CRL for each candidate on held-out tasks;
/// with a single task it falls back to a held-out demo split and reproduces
/// the single-task loop exactly.
pub fn mticl(
    bundle: &TaskBundle,
    fmap: &FeatureMap,
    base_set: &ConstraintSetDescriptor,
    n_rounds: usize,
    crl_params: &CrlParams,
    seed: u64,
    options: &IclOptions,
) -> Result<MtIclTrace> {
    bundle.validate()?;
    if n_rounds == 0 {
        return Err(Error::argument("mticl needs at least one round"));
    }
    let k_all = bundle.tasks.len();
    let horizon = bundle.mdp.horizon();
    let t = horizon as f64;

    // Split: hold out tasks when we can, demos when we cannot.
    let (train_idx, holdout_idx): (Vec<usize>, Vec<usize>) = if k_all >= 2 {
        let mut order: Vec<usize> = (0..k_all).collect();
        let mut rng = rng::stream(seed, "task-holdout", 0);
        use rand::Rng;
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let n_holdout =
            (((k_all as f64) * TASK_HOLDOUT_FRACTION).round() as usize).clamp(1, k_all - 1);
        let (hold, train) = order.split_at(n_holdout);
        let mut train: Vec<usize> = train.to_vec();
        let mut hold: Vec<usize> = hold.to_vec();
        train.sort_unstable();
        hold.sort_unstable();
        (train, hold)
    } else {
        (vec![0], Vec::new())
    };

    // Expert features per training task; single-task mode splits demos.
    let mut expert_features: Vec<(String, Array1<f64>)> = Vec::with_capacity(train_idx.len());
    let mut demo_val_features: Option<Array1<f64>> = None;
    if holdout_idx.is_empty() {
        let task = &bundle.tasks[0];
        let (train, val) = split_demos(&task.expert_trajs, options.validation_fraction, seed, 0);
        expert_features.push((task.id.clone(), empirical_features(&train, fmap)?));
        demo_val_features = Some(empirical_features(&val, fmap)?);
    } else {
        for &k in &train_idx {
            let task = &bundle.tasks[k];
            expert_features.push((task.id.clone(), empirical_features(&task.expert_trajs, fmap)?));
        }
    }

    // F_c restricted to constraints every training expert is safe under.
    let restricted = build_restricted_set(
        base_set,
        &expert_features.iter().map(|(_, phi)| phi.clone()).collect::<Vec<_>>(),
    )
    .map_err(|e| Error::Infeasible(format!("Assumption 1 fails on this bundle: {e}")))?;

    let assumption = check_assumption(bundle, fmap, base_set, None)?;

    let alpha = match options.alpha {
        AlphaRule::Auto(scale) => ftrl_alpha(fmap, &restricted, n_rounds, scale),
        AlphaRule::Fixed(a) => a,
    };
    if !(alpha > 0.0) {
        return Err(Error::argument(format!("resolved alpha {alpha} must be positive")));
    }

    let k_train = train_idx.len() as f64;
    let mut constraint = LinearConstraint::zero(fmap, restricted.w_max());
    let mut grads: Vec<Array1<f64>> = Vec::with_capacity(n_rounds);
    let mut rounds: Vec<MtRound> = Vec::with_capacity(n_rounds);

    for _round in 1..=n_rounds {
        let (signal, clip_count) = constraint.to_signal(fmap)?;
        let mut total = Array1::<f64>::zeros(fmap.dim());
        let mut per_task = Vec::with_capacity(train_idx.len());
        for (slot, &k) in train_idx.iter().enumerate() {
            let task = &bundle.tasks[k];
            let res = crl(&bundle.mdp, &task.reward, &signal, 0.0, crl_params)?;
            let learner_features = expected_features(&res.occupancy, fmap)?;
            let diff = &learner_features - &expert_features[slot].1;
            let task_loss = constraint.weights().dot(&diff) / t;
            total += &diff;
            per_task.push(MtTaskRound {
                task_id: task.id.clone(),
                policy: res.markov,
                learner_features,
                value_r: res.achieved_value,
                violation_learned: res.achieved_violation,
                delta: 0.0,
                loss: task_loss,
                lambda_trace: res.lambda_trace,
            });
        }
        total /= t * k_train;
        let loss = constraint.weights().dot(&total);
        rounds.push(MtRound { constraint: constraint.clone(), per_task, loss, clip_count });
        grads.push(total);
        constraint = ftrl_update(&grads, alpha, &restricted, fmap)?;
    }

    let mut regret_curve = Vec::with_capacity(n_rounds);
    for i in 1..=n_rounds {
        let (reg, avg) =
            regret_prefix(&grads[..i], rounds[..i].iter().map(|r| r.loss), &restricted, fmap)?;
        regret_curve.push(RegretPoint {
            round: i,
            loss: rounds[i - 1].loss,
            regret: reg,
            avg_regret: avg,
        });
    }

    // Validation selection.
    let selected = if let Some(val_features) = &demo_val_features {
        let task = &bundle.tasks[0];
        let mut keys = Vec::with_capacity(rounds.len());
        for round in &rounds {
            let rec = &round.per_task[0];
            let occ = crate::mdp::occupancy(&bundle.mdp, &rec.policy)?;
            let learner = round.constraint.value_of_features(&expected_features(&occ, fmap)?);
            let expert = round.constraint.value_of_features(val_features);
            let gap = (learner - expert).max(0.0);
            let reward = value(&bundle.mdp, &rec.policy, &task.reward)?;
            keys.push((gap, reward));
        }
        argmin_gap_then_reward(keys.into_iter())
    } else {
        let holdout_features: Vec<(usize, Array1<f64>)> = holdout_idx
            .iter()
            .map(|&h| {
                empirical_features(&bundle.tasks[h].expert_trajs, fmap).map(|phi| (h, phi))
            })
            .collect::<Result<_>>()?;
        let mut keys = Vec::with_capacity(rounds.len());
        for round in &rounds {
            let (signal, _) = round.constraint.to_signal(fmap)?;
            let mut gap_sum = 0.0;
            let mut reward_sum = 0.0;
            for (h, expert_phi) in &holdout_features {
                let task = &bundle.tasks[*h];
                let res = crl(&bundle.mdp, &task.reward, &signal, 0.0, crl_params)?;
                let learner = round
                    .constraint
                    .value_of_features(&expected_features(&res.occupancy, fmap)?);
                let expert = round.constraint.value_of_features(expert_phi);
                gap_sum += (learner - expert).max(0.0);
                reward_sum += res.achieved_value;
            }
            let n = holdout_features.len() as f64;
            keys.push((gap_sum / n, reward_sum / n));
        }
        argmin_gap_then_reward(keys.into_iter())
    };

    Ok(MtIclTrace {
        rounds,
        grads,
        regret_curve,
        selected,
        holdout_task_ids: holdout_idx.iter().map(|&h| bundle.tasks[h].id.clone()).collect(),
        expert_features,
        alpha,
        horizon,
        restricted_set: restricted,
        assumption,
    })
}

/// Empirical mean over tasks of `J(pi^tau, c) - J(pi_E^tau, c)`: the
/// plug-in estimate of the population gap `V(c)`.
pub fn estimate_v(
    c: &LinearConstraint,
    per_task_results: &[(OccupancyMeasure, Array1<f64>)],
    fmap: &FeatureMap,
) -> Result<f64> {
    if per_task_results.is_empty() {
        return Err(Error::argument("estimate_v needs at least one task"));
    }
    let mut total = 0.0;
    for (occ, expert_phi) in per_task_results {
        let learner = c.value_of_features(&expected_features(occ, fmap)?);
        total += learner - c.value_of_features(expert_phi);
    }
    Ok(total / per_task_results.len() as f64)
}

/// Tasks needed to estimate `V(c)` within `epsilon` for every constraint in
/// a finite class, with failure probability `delta`:
/// `K = ceil((2T)^2 / (2 eps^2) * ln(2 |F| / delta))` from the Hoeffding and
/// union bounds.
pub fn sample_complexity(
    class_size: usize,
    delta: f64,
    epsilon: f64,
    horizon: usize,
) -> Result<usize> {
    if class_size == 0 {
        return Err(Error::argument("class_size must be >= 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::argument(format!("delta {delta} outside (0, 1)")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::argument(format!("epsilon {epsilon} must be positive")));
    }
    if horizon == 0 {
        return Err(Error::argument("horizon must be >= 1"));
    }
    let t = horizon as f64;
    let k = (2.0 * t).powi(2) / (2.0 * epsilon * epsilon)
        * (2.0 * class_size as f64 / delta).ln();
    Ok(k.ceil() as usize)
}

/// The smaller horizon-free bound that suffices for the reward-side
/// condition (estimating expert-safety indicators rather than values):
/// `K = ceil(ln(2 |F| / delta) / (2 eps^2))`.
pub fn sample_complexity_reward_bound(
    class_size: usize,
    delta: f64,
    epsilon: f64,
) -> Result<usize> {
    if class_size == 0 {
        return Err(Error::argument("class_size must be >= 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::argument(format!("delta {delta} outside (0, 1)")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::argument(format!("epsilon {epsilon} must be positive")));
    }
    let k = (2.0 * class_size as f64 / delta).ln() / (2.0 * epsilon * epsilon);
    Ok(k.ceil() as usize)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpotCheck {
    pub description: String,
    /// `min_pi J(pi, c)` for the probed constraint.
    pub min_violation: f64,
    /// Whether some policy satisfies `J(pi, c) <= 0`.
    pub feasible: bool,
}

/// Diagnostics for the standing assumption behind the tolerance-zero game:
/// experts are safe on average under the truth, the restricted class is
/// nonempty, and every probed constraint admits a safe policy.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Task-averaged expert violation under the supplied ground truth, when
    /// given (exact when expert policies are stored, empirical otherwise).
    pub expert_violation_mean: Option<f64>,
    pub expert_safe_under_truth: Option<bool>,
    pub restricted_set_feasible: bool,
    pub spot_checks: Vec<SpotCheck>,
    pub all_spot_checks_feasible: bool,
    pub passed: bool,
}

/// Probe the assumption on a bundle. Diagnostic only; never errors on a
/// failed check.
pub fn check_assumption(
    bundle: &TaskBundle,
    fmap: &FeatureMap,
    set: &ConstraintSetDescriptor,
    true_c: Option<&ScalarSignal>,
) -> Result<AssumptionReport> {
    bundle.validate()?;

    // (a) expert safety under the supplied truth
    let (expert_violation_mean, expert_safe_under_truth) = match true_c {
        Some(c_star) => {
            let mut total = 0.0;
            for task in &bundle.tasks {
                total += match &task.expert_policy {
                    Some(p) => value(&bundle.mdp, p, c_star)?,
                    None => empirical_value(&task.expert_trajs, c_star)?,
                };
            }
            let mean = total / bundle.tasks.len() as f64;
            (Some(mean), Some(mean <= 0.0))
        }
        None => (None, None),
    };

    // (b) nonemptiness of the restricted class
    let expert_phis: Vec<Array1<f64>> = bundle
        .tasks
        .iter()
        .map(|t| empirical_features(&t.expert_trajs, fmap))
        .collect::<Result<_>>()?;
    let restricted_set_feasible = build_restricted_set(set, &expert_phis).is_ok();

    // (c) feasibility spot-check over extreme points of the class: for each
    // probe c, minimize J(., c) exactly and ask for a safe policy.
    let d = fmap.dim();
    let mut probes: Vec<(String, Array1<f64>)> = Vec::new();
    for j in 0..d.min(8) {
        for sign in [1.0, -1.0] {
            let mut w = Array1::zeros(d);
            w[j] = sign * set.w_max();
            probes.push((format!("axis {j} sign {sign}"), w));
        }
    }
    let mut rng = rng::stream(0x1ce_b00da, "assumption-spots", 0);
    use rand::Rng;
    for i in 0..4 {
        let dir = Array1::from_shape_fn(d, |_| rng.random::<f64>() * 2.0 - 1.0);
        let norm = dir.dot(&dir).sqrt().max(1e-12);
        probes.push((format!("random direction {i}"), dir * (set.w_max() / norm)));
    }

    let mut spot_checks = Vec::with_capacity(probes.len());
    for (description, w) in probes {
        let w = set.project(&w)?;
        // c(s,a) table for this probe, unclipped
        let (s, a) = (fmap.num_states(), fmap.num_actions());
        let mut table = ndarray::Array2::zeros((s, a));
        for si in 0..s {
            for ai in 0..a {
                table[[si, ai]] = fmap.row(si, ai).dot(&w);
            }
        }
        // min_pi J(pi, c) = -max_pi J(pi, -c)
        let (_, neg_best) = greedy_on_table(&bundle.mdp, &table.mapv(|v| -v));
        let min_violation = -neg_best;
        spot_checks.push(SpotCheck {
            description,
            min_violation,
            feasible: min_violation <= 1e-9,
        });
    }

    let all_spot_checks_feasible = spot_checks.iter().all(|s| s.feasible);
    let passed = expert_safe_under_truth != Some(false)
        && restricted_set_feasible
        && all_spot_checks_feasible;
    Ok(AssumptionReport {
        expert_violation_mean,
        expert_safe_under_truth,
        restricted_set_feasible,
        spot_checks,
        all_spot_checks_feasible,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icl::{icl, DeltaMode};
    use crate::solvers::LrSchedule;
    use ndarray::{arr1, Array2, Array3};

    /// 1 state, 3 actions: a0 and a1 are forbidden by the truth, a2 is safe.
    fn three_arm_bundle(which_tasks: &[usize], horizon: usize) -> (TaskBundle, FeatureMap) {
        let t = Array3::from_elem((1, 3, 1), 1.0);
        let mdp = Mdp::new(t, arr1(&[1.0]), horizon).unwrap();
        let features = Array2::from_shape_fn((3, 3), |(r, c)| if r == c { 1.0 } else { 0.0 });
        let fmap = FeatureMap::new("arm-onehot", 1, 3, features).unwrap();
        // expert always plays the safe arm a2
        let expert = Policy::deterministic(&Array2::from_elem((horizon, 1), 2), 3).unwrap();
        let mut tasks = Vec::new();
        for &k in which_tasks {
            let mut r = Array2::zeros((1, 3));
            r[[0, k]] = 1.0; // task k rewards arm k
            let reward = ScalarSignal::new(r).unwrap();
            let demos =
                crate::mdp::sample_trajectories(&mdp, &expert, 20, 40 + k as u64).unwrap();
            tasks.push(Task {
                id: format!("arm-{k}"),
                reward,
                expert_trajs: demos,
                expert_policy: Some(expert.clone()),
            });
        }
        (TaskBundle { mdp, tasks }, fmap)
    }

    fn fast_params() -> CrlParams {
        CrlParams { num_iters: 120, lr: LrSchedule::InvSqrt(1.0), ..CrlParams::default() }
    }

    fn zero_mode() -> IclOptions {
        IclOptions { delta_mode: DeltaMode::Zero, ..IclOptions::default() }
    }

    #[test]
    fn single_task_bundle_reproduces_the_single_task_game() {
        let (bundle, fmap) = three_arm_bundle(&[0], 2);
        let base = ConstraintSetDescriptor::ball(3.0).unwrap().with_value_box(&fmap);
        let seed = 9;
        let mt = mticl(&bundle, &fmap, &base, 6, &fast_params(), seed, &zero_mode()).unwrap();

        // Reconstruct the same restricted set the multi-task run used and run
        // the single-task loop in tolerance-zero mode.
        let (train, _val) = crate::icl::split_demos(&bundle.tasks[0].expert_trajs, 0.2, seed, 0);
        let phi = empirical_features(&train, &fmap).unwrap();
        let restricted = build_restricted_set(&base, &[phi]).unwrap();
        let st = icl(
            &bundle.mdp,
            &bundle.tasks[0].reward,
            &bundle.tasks[0].expert_trajs,
            &fmap,
            &restricted,
            6,
            &fast_params(),
            seed,
            &zero_mode(),
        )
        .unwrap();

        assert_eq!(mt.rounds.len(), st.rounds.len());
        for (a, b) in mt.rounds.iter().zip(&st.rounds) {
            assert_eq!(a.constraint.weights(), b.constraint.weights());
            assert_eq!(a.loss, b.loss);
            assert_eq!(a.per_task[0].delta, b.delta);
        }
        assert_eq!(mt.selected, st.selected);
        assert!(mt.holdout_task_ids.is_empty());
    }

    #[test]
    fn two_tasks_pin_the_constraint_direction() {
        // c* forbids arms 0 and 1 with full margin: (1, 1, -1) direction.
        let c_star = arr1(&[1.0, 1.0, -1.0]);
        let horizon = 2;
        let (bundle2, fmap) = three_arm_bundle(&[0, 1], horizon);
        let base = ConstraintSetDescriptor::ball(3.0).unwrap().with_value_box(&fmap);
        // aggressive constraint player so the recovered direction is crisp
        let opts = IclOptions {
            delta_mode: DeltaMode::Zero,
            alpha: AlphaRule::Auto(0.02),
            ..IclOptions::default()
        };
        // two tasks: K = 2 would hold one out, leaving one training task, so
        // build a 2-task game by duplicating coverage: use 5 tasks cycling
        // over the two unsafe arms to keep both in training after holdout.
        let (bundle, _) = three_arm_bundle(&[0, 1, 0, 1, 0], horizon);
        let mt = mticl(&bundle, &fmap, &base, 8, &fast_params(), 3, &opts).unwrap();
        let w = mt.selected_round().constraint.weights();
        let cos = w.dot(&c_star) / (w.dot(w).sqrt() * c_star.dot(&c_star).sqrt());
        assert!(cos >= 0.99, "multi-task cosine {cos}, w = {w:?}");

        // a single task leaves the unprobed arm's coordinate at zero
        let st = mticl(&bundle2_single(&bundle2), &fmap, &base, 8, &fast_params(), 3, &opts)
            .unwrap();
        let w1 = st.selected_round().constraint.weights();
        let cos1 = w1.dot(&c_star) / (w1.dot(w1).sqrt().max(1e-12) * c_star.dot(&c_star).sqrt());
        assert!(cos1 < 0.99, "single-task cosine {cos1}, w = {w1:?}");
        assert!(w1[1].abs() < 0.05, "null direction should stay near zero: {w1:?}");
    }

    fn bundle2_single(bundle: &TaskBundle) -> TaskBundle {
        TaskBundle { mdp: bundle.mdp.clone(), tasks: vec![bundle.tasks[0].clone()] }
    }

    #[test]
    fn deltas_are_zero_for_every_inner_solve() {
        let (bundle, fmap) = three_arm_bundle(&[0, 1, 0], 2);
        let base = ConstraintSetDescriptor::ball(3.0).unwrap().with_value_box(&fmap);
        let mt = mticl(&bundle, &fmap, &base, 4, &fast_params(), 11, &zero_mode()).unwrap();
        for round in &mt.rounds {
            for rec in &round.per_task {
                assert_eq!(rec.delta, 0.0);
            }
        }
    }

    #[test]
    fn gradient_aggregation_is_task_order_invariant() {
        let (bundle, fmap) = three_arm_bundle(&[0, 1, 0, 1], 2);
        let base = ConstraintSetDescriptor::ball(3.0).unwrap().with_value_box(&fmap);
        let mt1 = mticl(&bundle, &fmap, &base, 4, &fast_params(), 13, &zero_mode()).unwrap();
        // permute tasks; holdout selection is seeded by index, so give the
        // permuted bundle the same train/holdout membership by permuting
        // within the training block only (swap two training tasks).
        let train_ids: Vec<String> = mt1.expert_features.iter().map(|(id, _)| id.clone()).collect();
        let mut tasks = bundle.tasks.clone();
        let pos: Vec<usize> = tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| train_ids.contains(&t.id))
            .map(|(i, _)| i)
            .collect();
        if pos.len() >= 2 {
            tasks.swap(pos[0], pos[1]);
        }
        let permuted = TaskBundle { mdp: bundle.mdp.clone(), tasks };
        let mt2 = mticl(&permuted, &fmap, &base, 4, &fast_params(), 13, &zero_mode()).unwrap();
        // FTRL iterates agree to floating-point noise of the summation order
        for (a, b) in mt1.rounds.iter().zip(&mt2.rounds) {
            let gap = (a.constraint.weights() - b.constraint.weights())
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(gap <= 1e-12, "iterate moved by {gap}");
        }
    }

    #[test]
    fn estimate_v_examples() {
        let (bundle, fmap) = three_arm_bundle(&[0], 2);
        let pi = Policy::deterministic(&Array2::from_elem((2, 1), 2), 3).unwrap();
        let occ = crate::mdp::occupancy(&bundle.mdp, &pi).unwrap();
        let phi = expected_features(&occ, &fmap).unwrap();
        let c = LinearConstraint::new(&fmap, arr1(&[1.0, 0.5, -0.5]), 2.0).unwrap();

        // learners equal their experts
        let v = estimate_v(&c, &[(occ.clone(), phi.clone())], &fmap).unwrap();
        assert!(v.abs() < 1e-12);

        // gaps +1 and -1 average to zero
        let plus = &phi - &arr1(&[1.0, 0.0, 0.0]); // gap +1 under w[0] = 1
        let minus = &phi + &arr1(&[1.0, 0.0, 0.0]);
        let v = estimate_v(&c, &[(occ.clone(), plus), (occ.clone(), minus)], &fmap).unwrap();
        assert!(v.abs() < 1e-12);
        assert!(estimate_v(&c, &[], &fmap).is_err());
    }

    #[test]
    fn estimate_v_subsample_converges_to_full_mean() {
        use rand::Rng;
        let (bundle, fmap) = three_arm_bundle(&[0], 3);
        let c = LinearConstraint::new(&fmap, arr1(&[0.8, -0.3, 0.2]), 2.0).unwrap();
        let mut population = Vec::new();
        for seed in 0..200u64 {
            let pi = crate::mdp::tests::random_policy(3, 1, 3, 7000 + seed);
            let occ = crate::mdp::occupancy(&bundle.mdp, &pi).unwrap();
            let pi_e = crate::mdp::tests::random_policy(3, 1, 3, 8000 + seed);
            let occ_e = crate::mdp::occupancy(&bundle.mdp, &pi_e).unwrap();
            let phi_e = expected_features(&occ_e, &fmap).unwrap();
            population.push((occ, phi_e));
        }
        let full = estimate_v(&c, &population, &fmap).unwrap();
        // Monte-Carlo subsample mean vs full enumeration
        let mut rng = crate::rng::stream(99, "estimate-v", 0);
        let m = 2000usize;
        let k = 50usize;
        let mut means = Vec::with_capacity(m);
        for _ in 0..m {
            let sample: Vec<_> = (0..k)
                .map(|_| population[rng.random_range(0..population.len())].clone())
                .collect();
            means.push(estimate_v(&c, &sample, &fmap).unwrap());
        }
        let grand = means.iter().sum::<f64>() / m as f64;
        let var = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
        let se = (var / m as f64).sqrt();
        assert!((grand - full).abs() <= 3.0 * se.max(1e-9), "grand {grand} vs full {full}");
    }

    #[test]
    fn sample_complexity_formula() {
        // worked example: 100 constraints, delta 0.05, eps 1, T 10
        assert_eq!(sample_complexity(100, 0.05, 1.0, 10).unwrap(), 1659);
        // trivial accuracy eps = 2T
        let t = 7usize;
        let k = sample_complexity(100, 0.05, 2.0 * t as f64, t).unwrap();
        let expected = (0.5 * (2.0 * 100.0 / 0.05f64).ln()).ceil() as usize;
        assert_eq!(k, expected);
        // doubling T quadruples the pre-ceiling bound
        let k1 = sample_complexity(50, 0.1, 0.5, 5).unwrap();
        let k2 = sample_complexity(50, 0.1, 0.5, 10).unwrap();
        let ratio = k2 as f64 / k1 as f64;
        assert!((ratio - 4.0).abs() < 0.01, "ratio {ratio}");
        // the reward-side bound is smaller
        assert!(
            sample_complexity_reward_bound(100, 0.05, 1.0).unwrap()
                < sample_complexity(100, 0.05, 1.0, 10).unwrap()
        );
        assert!(sample_complexity(100, 0.0, 1.0, 5).is_err());
        assert!(sample_complexity(100, 0.5, 0.0, 5).is_err());
    }

    #[test]
    fn assumption_checks() {
        let (bundle, fmap) = three_arm_bundle(&[0, 1], 2);
        let base = ConstraintSetDescriptor::ball(3.0).unwrap().with_value_box(&fmap);

        // zero truth passes trivially
        let zero = ScalarSignal::constant(1, 3, 0.0).unwrap();
        let report = check_assumption(&bundle, &fmap, &base, Some(&zero)).unwrap();
        assert_eq!(report.expert_safe_under_truth, Some(true));
        assert!(report.restricted_set_feasible);
        assert!(report.all_spot_checks_feasible);
        assert!(report.passed);

        // an everywhere-positive constraint admits no safe policy: probe it
        // directly through the spot-check machinery by shrinking the class to
        // a region of all-positive constraints (impossible with one-hot
        // features and a symmetric ball, so check the reported minimum
        // instead)
        let c_pos = ScalarSignal::constant(1, 3, 0.5).unwrap();
        let report = check_assumption(&bundle, &fmap, &base, Some(&c_pos)).unwrap();
        assert_eq!(report.expert_safe_under_truth, Some(false));
        assert!(!report.passed);
    }

    #[test]
    fn everywhere_positive_probe_fails_spot_check() {
        // feature map with a constant coordinate makes all-positive
        // constraints representable
        let t = Array3::from_elem((1, 2, 1), 1.0);
        let mdp = Mdp::new(t, arr1(&[1.0]), 2).unwrap();
        let features = Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap();
        let fmap = FeatureMap::new("const", 1, 2, features).unwrap();
        let expert = Policy::deterministic(&Array2::from_elem((2, 1), 0), 2).unwrap();
        let demos = crate::mdp::sample_trajectories(&mdp, &expert, 5, 1).unwrap();
        let bundle = TaskBundle {
            mdp,
            tasks: vec![Task {
                id: "t".into(),
                reward: ScalarSignal::constant(1, 2, 0.5).unwrap(),
                expert_trajs: demos,
                expert_policy: Some(expert),
            }],
        };
        let base = ConstraintSetDescriptor::ball(1.0).unwrap();
        let report = check_assumption(&bundle, &fmap, &base, None).unwrap();
        // the +e_0 probe is positive everywhere: no safe policy exists
        assert!(report.spot_checks.iter().any(|s| !s.feasible));
        assert!(!report.passed);
    }

    #[test]
    fn bundle_directory_round_trip() {
        let (bundle, _) = three_arm_bundle(&[0, 1], 2);
        let dir = tempfile::tempdir().unwrap();
        bundle.save_dir(dir.path()).unwrap();
        let back = TaskBundle::load_dir(dir.path()).unwrap();
        assert_eq!(back.tasks.len(), bundle.tasks.len());
        for (a, b) in back.tasks.iter().zip(&bundle.tasks) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.reward.values(), b.reward.values());
            assert_eq!(a.expert_trajs, b.expert_trajs);
            assert_eq!(a.expert_policy.is_some(), b.expert_policy.is_some());
        }
    }
}
