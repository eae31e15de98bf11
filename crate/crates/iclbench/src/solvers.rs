//! Exact RL best responses and the constrained-RL game.
//!
//! `rl_best_response` is plain finite-horizon backward induction with greedy
//! tie-breaking on the lowest action index. `crl` runs the Lagrangian game:
//! the policy player best-responds to `r - lambda * c` and the dual variable
//! ascends on the violation `J(pi, c) - delta`, either with the classic
//! projected step or with a PID controller on the violation signal. The
//! returned policy is the uniform mixture over iterates; the last iterate is
//! kept alongside for callers that want a single policy.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{occupancy, Mdp, MixturePolicy, OccupancyMeasure, Policy, ScalarSignal};

/// Dual learning-rate schedule, 1-based in the iteration index.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "eta0")]
pub enum LrSchedule {
    /// `eta_i = eta0`
    Constant(f64),
    /// `eta_i = eta0 / sqrt(i)`
    InvSqrt(f64),
}

impl LrSchedule {
    pub fn eta(&self, i: usize) -> f64 {
        match *self {
            LrSchedule::Constant(eta0) => eta0,
            LrSchedule::InvSqrt(eta0) => eta0 / (i as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    Classic,
    Pid,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        // Tuned on the acceptance fixtures, not taken from any reference.
        PidGains { kp: 0.25, ki: 0.05, kd: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrlParams {
    pub num_iters: usize,
    pub lr: LrSchedule,
    pub dual_mode: DualMode,
    pub pid_gains: PidGains,
    /// Cap on the multiplier. The dual variable is unbounded when the
    /// threshold is infeasible; the cap keeps the combined signal finite and
    /// the trace reports whenever it binds.
    pub lambda_max: f64,
}

impl Default for CrlParams {
    fn default() -> Self {
        CrlParams {
            num_iters: 200,
            lr: LrSchedule::InvSqrt(1.0),
            dual_mode: DualMode::Classic,
            pid_gains: PidGains::default(),
            lambda_max: 100.0,
        }
    }
}

impl CrlParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_iters == 0 {
            return Err(Error::argument("CRL needs at least one iteration"));
        }
        let eta_ok = match self.lr {
            LrSchedule::Constant(e) | LrSchedule::InvSqrt(e) => e > 0.0,
        };
        if !eta_ok {
            return Err(Error::argument("learning rate must be positive"));
        }
        if self.pid_gains.kp < 0.0 || self.pid_gains.ki < 0.0 || self.pid_gains.kd < 0.0 {
            return Err(Error::argument("PID gains must be nonnegative"));
        }
        if self.lambda_max <= 0.0 {
            return Err(Error::argument("lambda_max must be positive"));
        }
        Ok(())
    }
}

/// Output of the constrained-RL game.
#[derive(Debug, Clone)]
pub struct CrlResult {
    /// Uniform mixture over the policy iterates (the object the guarantee is
    /// about).
    pub mixture: MixturePolicy,
    /// Markov policy with the same occupancy as the mixture.
    pub markov: Policy,
    /// Occupancy measure of the mixture.
    pub occupancy: OccupancyMeasure,
    /// `lambda_i` as used in round i (starts at 0).
    pub lambda_trace: Vec<f64>,
    pub final_lambda: f64,
    /// `J(mixture, r)`
    pub achieved_value: f64,
    /// `J(mixture, c)`
    pub achieved_violation: f64,
    /// Last policy iterate, for callers that deploy a single policy.
    pub last_policy: Policy,
}

/// Serialized form: scalar diagnostics plus a reference to a policy file
/// holding the occupancy-equivalent Markov policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrlResultFile {
    pub lambda_trace: Vec<f64>,
    pub final_lambda: f64,
    pub achieved_value: f64,
    pub achieved_violation: f64,
    pub policy_file: String,
}

impl CrlResult {
    pub fn to_file(&self, policy_file: impl Into<String>) -> CrlResultFile {
        CrlResultFile {
            lambda_trace: self.lambda_trace.clone(),
            final_lambda: self.final_lambda,
            achieved_value: self.achieved_value,
            achieved_violation: self.achieved_violation,
            policy_file: policy_file.into(),
        }
    }
}

/// Greedy backward induction on a raw (possibly out-of-range) value table.
/// Returns the deterministic policy and its exact value from the initial
/// distribution. Ties break toward the lowest action index.
pub(crate) fn greedy_on_table(mdp: &Mdp, table: &Array2<f64>) -> (Policy, f64) {
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let mut v = Array1::<f64>::zeros(s);
    let mut choices = Array2::<usize>::zeros((mdp.horizon(), s));
    for t in (0..mdp.horizon()).rev() {
        let future = mdp.transition_flat().dot(&v);
        let mut v_next = Array1::<f64>::zeros(s);
        for si in 0..s {
            let mut best_a = 0;
            let mut best_q = f64::NEG_INFINITY;
            for ai in 0..a {
                let q = table[[si, ai]] + future[si * a + ai];
                if q > best_q {
                    best_q = q;
                    best_a = ai;
                }
            }
            choices[[t, si]] = best_a;
            v_next[si] = best_q;
        }
        v = v_next;
    }
    let policy = Policy::deterministic(&choices, a).expect("choices are in range");
    (policy, mdp.initial_dist().dot(&v))
}

/// Optimal deterministic policy for `signal` by exact backward induction.
pub fn rl_best_response(mdp: &Mdp, signal: &ScalarSignal) -> Result<Policy> {
    mdp.check_signal(signal)?;
    Ok(greedy_on_table(mdp, signal.values()).0)
}

/// Optimal value of `signal` from the initial distribution.
pub fn rl_optimal_value(mdp: &Mdp, signal: &ScalarSignal) -> Result<f64> {
    mdp.check_signal(signal)?;
    Ok(greedy_on_table(mdp, signal.values()).1)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Entropy-regularized backward induction: softmax-of-soft-Q policies. Every
/// action keeps strictly positive probability, so the learner spreads mass
/// over every state it can reach.
pub fn soft_rl(mdp: &Mdp, signal: &ScalarSignal, temperature: f64) -> Result<Policy> {
    mdp.check_signal(signal)?;
    if !(temperature > 0.0) {
        return Err(Error::argument(format!("temperature {temperature} must be positive")));
    }
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let mut v = Array1::<f64>::zeros(s);
    let mut probs = ndarray::Array3::<f64>::zeros((mdp.horizon(), s, a));
    for t in (0..mdp.horizon()).rev() {
        let future = mdp.transition_flat().dot(&v);
        let mut v_next = Array1::<f64>::zeros(s);
        for si in 0..s {
            let q: Vec<f64> =
                (0..a).map(|ai| (signal.get(si, ai) + future[si * a + ai]) / temperature).collect();
            let lse = log_sum_exp(q.iter().copied());
            for ai in 0..a {
                probs[[t, si, ai]] = (q[ai] - lse).exp();
            }
            v_next[si] = temperature * lse;
        }
        v = v_next;
    }
    Policy::new(probs)
}

/// Constrained RL as Lagrangian dual ascent over exact best responses.
///
/// Round i plays `pi_i = argmax J(pi, r - lambda_i c)` (the combined table is
/// used unclipped), then updates the multiplier from the violation
/// `J(pi_i, c) - delta`. Infeasible thresholds are not an error; they show up
/// as a positive `achieved_violation` and a saturated `lambda_trace`.
pub fn crl(
    mdp: &Mdp,
    r: &ScalarSignal,
    c: &ScalarSignal,
    delta: f64,
    params: &CrlParams,
) -> Result<CrlResult> {
    mdp.check_signal(r)?;
    mdp.check_signal(c)?;
    params.validate()?;
    if delta.abs() > mdp.horizon() as f64 {
        return Err(Error::argument(format!(
            "delta {delta} outside [-T, T] with T={}",
            mdp.horizon()
        )));
    }

    let n = params.num_iters;
    let mut components = Vec::with_capacity(n);
    let mut lambda_trace = Vec::with_capacity(n);
    let mut lambda = 0.0f64;
    let mut mean_rho: Option<OccupancyMeasure> = None;
    let mut value_sum = 0.0;
    let mut violation_sum = 0.0;

    // PID state
    let mut integral = 0.0f64;
    let mut prev_err: Option<f64> = None;

    let mut last_policy = None;
    for i in 1..=n {
        let table = r.values() - &(c.values() * lambda);
        let (pi, _) = greedy_on_table(mdp, &table);
        let occ = occupancy(mdp, &pi)?;
        let j_c = occ.expected_total(c);
        let j_r = occ.expected_total(r);
        value_sum += j_r;
        violation_sum += j_c;
        match &mut mean_rho {
            None => mean_rho = Some(occ.clone()),
            Some(acc) => *acc = OccupancyMeasure::from_raw(acc.rho() + occ.rho()),
        }
        lambda_trace.push(lambda);

        let err = j_c - delta;
        lambda = match params.dual_mode {
            DualMode::Classic => {
                (lambda + params.lr.eta(i) * err).clamp(0.0, params.lambda_max)
            }
            DualMode::Pid => {
                let g = params.pid_gains;
                integral = (integral + g.ki * err).clamp(0.0, params.lambda_max);
                let deriv = match prev_err {
                    Some(prev) => g.kd * (err - prev),
                    None => 0.0,
                };
                prev_err = Some(err);
                (g.kp * err + integral + deriv).clamp(0.0, params.lambda_max)
            }
        };

        components.push(pi.clone());
        last_policy = Some(pi);
    }

    let mean_rho = OccupancyMeasure::from_raw(mean_rho.unwrap().rho() / n as f64);
    let markov = mean_rho.to_markov();
    Ok(CrlResult {
        mixture: MixturePolicy::uniform(components)?,
        markov,
        occupancy: mean_rho,
        lambda_trace,
        final_lambda: lambda,
        achieved_value: value_sum / n as f64,
        achieved_violation: violation_sum / n as f64,
        last_policy: last_policy.expect("n >= 1"),
    })
}

/// Lagrangian dual oracle: `min over the grid of max_pi J(pi, r - lambda c)
/// + lambda delta`. Weak duality makes every grid point an upper bound on the
/// constrained optimum; CMDPs with a feasible interior have no duality gap,
/// so a fine grid is tight. Used as a test oracle for `crl`.
pub fn crl_dual_oracle(
    mdp: &Mdp,
    r: &ScalarSignal,
    c: &ScalarSignal,
    delta: f64,
    grid: &[f64],
) -> Result<f64> {
    mdp.check_signal(r)?;
    mdp.check_signal(c)?;
    if grid.is_empty() {
        return Err(Error::argument("lambda grid must be nonempty"));
    }
    if grid.iter().any(|&l| l < 0.0) {
        return Err(Error::argument("lambda grid must be nonnegative"));
    }
    let mut best = f64::INFINITY;
    for &lambda in grid {
        let table = r.values() - &(c.values() * lambda);
        let (_, v) = greedy_on_table(mdp, &table);
        best = best.min(v + lambda * delta);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::value;
    use ndarray::{arr1, Array3};
    use rand::Rng;

    fn bandit(values: &[f64]) -> (Mdp, ScalarSignal) {
        let a = values.len();
        let t = Array3::from_elem((1, a, 1), 1.0);
        let mdp = Mdp::new(t, arr1(&[1.0]), 1).unwrap();
        (mdp, row_signal(values))
    }

    fn row_signal(values: &[f64]) -> ScalarSignal {
        ScalarSignal::new(
            ndarray::Array2::from_shape_vec((1, values.len()), values.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn bandit_best_response_picks_argmax() {
        let (mdp, f) = bandit(&[0.2, 0.9]);
        let pi = rl_best_response(&mdp, &f).unwrap();
        assert_eq!(pi.action_probs()[[0, 0, 1]], 1.0);
        assert!((rl_optimal_value(&mdp, &f).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ties_break_to_lowest_action() {
        let mdp = crate::mdp::tests::random_mdp(3, 3, 4, 1);
        let f = ScalarSignal::constant(3, 3, 0.25).unwrap();
        let pi = rl_best_response(&mdp, &f).unwrap();
        for t in 0..4 {
            for s in 0..3 {
                assert_eq!(pi.action_probs()[[t, s, 0]], 1.0);
            }
        }
        assert!((rl_optimal_value(&mdp, &f).unwrap() - 4.0 * 0.25).abs() < 1e-12);
    }

    /// Independent recursion over (t, s) with memoization; shares nothing
    /// with `greedy_on_table`.
    fn brute_optimal_value(mdp: &Mdp, f: &ScalarSignal) -> f64 {
        fn v(mdp: &Mdp, f: &ScalarSignal, t: usize, s: usize, memo: &mut Vec<Vec<Option<f64>>>) -> f64 {
            if t == mdp.horizon() {
                return 0.0;
            }
            if let Some(x) = memo[t][s] {
                return x;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.num_actions() {
                let mut q = f.get(s, a);
                for sj in 0..mdp.num_states() {
                    let p = mdp.transition()[[s, a, sj]];
                    if p > 0.0 {
                        q += p * v(mdp, f, t + 1, sj, memo);
                    }
                }
                best = best.max(q);
            }
            memo[t][s] = Some(best);
            best
        }
        let mut memo = vec![vec![None; mdp.num_states()]; mdp.horizon()];
        (0..mdp.num_states())
            .map(|s| mdp.initial_dist()[s] * v(mdp, f, 0, s, &mut memo))
            .sum()
    }

    #[test]
    fn best_response_matches_bruteforce_and_dominates_random_policies() {
        let mdp = crate::mdp::tests::random_mdp(5, 3, 4, 7);
        let f = crate::mdp::tests::random_signal(5, 3, 8);
        let pi = rl_best_response(&mdp, &f).unwrap();
        let v_star = value(&mdp, &pi, &f).unwrap();
        assert!((v_star - brute_optimal_value(&mdp, &f)).abs() < 1e-9);
        assert!((v_star - rl_optimal_value(&mdp, &f).unwrap()).abs() < 1e-8);
        for seed in 0..200 {
            let other = crate::mdp::tests::random_policy(4, 5, 3, 1000 + seed);
            assert!(value(&mdp, &other, &f).unwrap() <= v_star + 1e-9);
        }
    }

    #[test]
    fn soft_rl_limits() {
        let (mdp, f) = bandit(&[0.0, 1.0]);
        // near-infinite temperature: uniform
        let hot = soft_rl(&mdp, &f, 1e6).unwrap();
        assert!((hot.action_probs()[[0, 0, 0]] - 0.5).abs() <= 1e-3);
        // unit temperature: closed-form softmax
        let warm = soft_rl(&mdp, &f, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((warm.action_probs()[[0, 0, 0]] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((warm.action_probs()[[0, 0, 1]] - e / (1.0 + e)).abs() < 1e-12);
        // near-zero temperature on a tie-free signal: greedy
        let cold = soft_rl(&mdp, &f, 1e-6).unwrap();
        assert!(cold.action_probs()[[0, 0, 1]] >= 1.0 - 1e-6);
        assert!(soft_rl(&mdp, &f, 0.0).is_err());
    }

    #[test]
    fn soft_rl_matches_greedy_on_longer_horizons_at_low_temperature() {
        let mdp = crate::mdp::tests::random_mdp(4, 2, 5, 17);
        let f = crate::mdp::tests::random_signal(4, 2, 18);
        let greedy = rl_best_response(&mdp, &f).unwrap();
        let cold = soft_rl(&mdp, &f, 1e-7).unwrap();
        let v_g = value(&mdp, &greedy, &f).unwrap();
        let v_c = value(&mdp, &cold, &f).unwrap();
        assert!((v_g - v_c).abs() < 1e-4);
    }

    fn crl_bandit_params(n: usize) -> CrlParams {
        CrlParams { num_iters: n, lr: LrSchedule::InvSqrt(1.0), ..CrlParams::default() }
    }

    #[test]
    fn crl_bandit_saturates_the_constraint() {
        // r = (1, 0), c = (1, 0), delta = 0: the constrained optimum plays
        // the second arm and earns 0.
        let (mdp, r) = bandit(&[1.0, 0.0]);
        let c = row_signal(&[1.0, 0.0]);
        let res = crl(&mdp, &r, &c, 0.0, &crl_bandit_params(200)).unwrap();
        assert!(res.achieved_violation <= 0.05, "violation {}", res.achieved_violation);
        assert!(res.achieved_value >= -0.05, "value {}", res.achieved_value);
        assert!(res.lambda_trace.iter().all(|&l| l >= 0.0));
        assert_eq!(res.lambda_trace[0], 0.0);
    }

    #[test]
    fn slack_constraint_reduces_to_plain_rl() {
        let mdp = crate::mdp::tests::random_mdp(4, 3, 5, 27);
        let r = crate::mdp::tests::random_signal(4, 3, 28);
        let c = crate::mdp::tests::random_signal(4, 3, 29);
        let delta = mdp.horizon() as f64; // can never bind
        let res = crl(&mdp, &r, &c, delta, &CrlParams::default()).unwrap();
        assert!(res.lambda_trace.iter().all(|&l| l == 0.0));
        let unconstrained = rl_optimal_value(&mdp, &r).unwrap();
        assert!((res.achieved_value - unconstrained).abs() < 1e-9);
    }

    #[test]
    fn reward_equal_to_constraint_pins_value_to_zero() {
        let mdp = crate::mdp::tests::random_mdp(5, 2, 4, 37);
        let mut r = crate::mdp::tests::random_signal(5, 2, 38);
        // force a positive optimum
        if rl_optimal_value(&mdp, &r).unwrap() <= 0.1 {
            r = ScalarSignal::new(r.values().mapv(|v| (v + 0.6).clamp(-1.0, 1.0))).unwrap();
        }
        assert!(rl_optimal_value(&mdp, &r).unwrap() > 0.0);
        let params = CrlParams { num_iters: 4000, ..CrlParams::default() };
        let res = crl(&mdp, &r, &r, 0.0, &params).unwrap();
        assert!(res.achieved_value.abs() <= 0.05, "value {}", res.achieved_value);
        let grid: Vec<f64> = (0..=500).map(|i| i as f64 * 0.01).collect();
        let oracle = crl_dual_oracle(&mdp, &r, &r, 0.0, &grid).unwrap();
        assert!(oracle.abs() <= 0.05, "oracle {oracle}");
    }

    #[test]
    fn dual_oracle_examples() {
        let (mdp, r) = bandit(&[1.0, 0.0]);
        let c = row_signal(&[1.0, 0.0]);
        // slack threshold: oracle equals the unconstrained optimum at lambda 0
        let v = crl_dual_oracle(&mdp, &r, &c, 1.0, &[0.0, 0.5, 1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // the worked bandit: grid 0, 0.1, ..., 5 pins the optimum 0
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let v = crl_dual_oracle(&mdp, &r, &c, 0.0, &grid).unwrap();
        assert!(v.abs() <= 0.05, "dual value {v}");
        assert!(crl_dual_oracle(&mdp, &r, &c, 0.0, &[]).is_err());
    }

    #[test]
    fn weak_duality_on_random_instances() {
        let mut rng = crate::rng::stream(5150, "weak-duality", 0);
        for seed in 0..50u64 {
            let s = 2 + (seed as usize % 5);
            let a = 2 + (seed as usize % 2);
            let mdp = crate::mdp::tests::random_mdp(s, a, 4, 7000 + seed);
            let r = crate::mdp::tests::random_signal(s, a, 7100 + seed);
            let c = crate::mdp::tests::random_signal(s, a, 7200 + seed);
            // draw a feasible threshold between the least-violating policy
            // and the unconstrained optimum's violation
            let min_v = -rl_optimal_value(&mdp, &neg(&c)).unwrap();
            let greedy = rl_best_response(&mdp, &r).unwrap();
            let max_v = value(&mdp, &greedy, &c).unwrap();
            let u: f64 = rng.random();
            let delta = min_v + (max_v - min_v).max(0.0) * (0.2 + 0.6 * u) + 1e-6;
            let delta = delta.clamp(-(mdp.horizon() as f64), mdp.horizon() as f64);
            let res = crl(&mdp, &r, &c, delta, &CrlParams::default()).unwrap();
            let grid: Vec<f64> = (0..100).map(|i| i as f64 * 0.25).collect();
            let oracle = crl_dual_oracle(&mdp, &r, &c, delta, &grid).unwrap();
            // every feasible policy the game produced is dominated
            if res.achieved_violation <= delta {
                assert!(
                    oracle + 1e-9 >= res.achieved_value,
                    "seed {seed}: oracle {oracle} < value {}",
                    res.achieved_value
                );
            }
            for (pi, _) in res.mixture.components().iter().zip(res.lambda_trace.iter()) {
                if value(&mdp, pi, &c).unwrap() <= delta {
                    assert!(oracle + 1e-9 >= value(&mdp, pi, &r).unwrap());
                }
            }
        }
    }

    fn neg(c: &ScalarSignal) -> ScalarSignal {
        ScalarSignal::new(c.values().mapv(|v| -v)).unwrap()
    }

    #[test]
    fn pid_with_integral_only_matches_classic() {
        let mdp = crate::mdp::tests::random_mdp(4, 2, 5, 47);
        let r = crate::mdp::tests::random_signal(4, 2, 48);
        let c = crate::mdp::tests::random_signal(4, 2, 49);
        let eta = 0.3;
        let classic = CrlParams {
            num_iters: 60,
            lr: LrSchedule::Constant(eta),
            dual_mode: DualMode::Classic,
            ..CrlParams::default()
        };
        let pid = CrlParams {
            num_iters: 60,
            dual_mode: DualMode::Pid,
            pid_gains: PidGains { kp: 0.0, ki: eta, kd: 0.0 },
            ..CrlParams::default()
        };
        let a = crl(&mdp, &r, &c, 0.2, &classic).unwrap();
        let b = crl(&mdp, &r, &c, 0.2, &pid).unwrap();
        assert_eq!(a.lambda_trace, b.lambda_trace);
    }

    #[test]
    fn pid_mode_controls_violation_on_the_bandit() {
        let (mdp, r) = bandit(&[1.0, 0.0]);
        let c = row_signal(&[1.0, 0.0]);
        let params = CrlParams { num_iters: 300, dual_mode: DualMode::Pid, ..CrlParams::default() };
        let res = crl(&mdp, &r, &c, 0.0, &params).unwrap();
        assert!(res.achieved_violation <= 0.1, "violation {}", res.achieved_violation);
    }

    #[test]
    fn best_response_value_agrees_through_occupancy() {
        for seed in 0..20 {
            let mdp = crate::mdp::tests::random_mdp(4, 3, 6, 9000 + seed);
            let f = crate::mdp::tests::random_signal(4, 3, 9100 + seed);
            let pi = rl_best_response(&mdp, &f).unwrap();
            let via_occ = value(&mdp, &pi, &f).unwrap();
            let via_dp = rl_optimal_value(&mdp, &f).unwrap();
            assert!((via_occ - via_dp).abs() < 1e-8);
        }
    }

    #[test]
    fn mixture_reporting_is_consistent() {
        let (mdp, r) = bandit(&[1.0, 0.0]);
        let c = row_signal(&[1.0, 0.0]);
        let res = crl(&mdp, &r, &c, 0.0, &crl_bandit_params(50)).unwrap();
        let v_mix = value(&mdp, &res.mixture, &r).unwrap();
        assert!((v_mix - res.achieved_value).abs() < 1e-10);
        let v_markov = value(&mdp, &res.markov, &r).unwrap();
        assert!((v_markov - res.achieved_value).abs() < 1e-10);
    }
}
