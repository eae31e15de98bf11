//! Exact finite-horizon tabular MDP engine.
//!
//! Dynamics, time-indexed policies, occupancy measures, values, and
//! trajectory sampling. All probability tables are validated at construction;
//! operations afterwards assume validity and are pure functions over
//! immutable data, safe to call from any number of threads.
//!
//! Values are accumulated over exactly `T` steps, `t = 0..T-1`, so every
//! admissible per-step signal in `[-1, 1]` gives a policy value in `[-T, T]`.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Row sums of probability tables must match 1 this tightly.
pub const PROB_TOL: f64 = 1e-9;

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Probability(format!("{what}: entry {p} is negative or non-finite")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Probability(format!("{what}: row sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Finite-horizon tabular MDP: dynamics `P(s'|s,a)`, an initial state
/// distribution, and a horizon `T >= 1`.
#[derive(Debug, Clone)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    transition: Array3<f64>,
    /// Same dynamics flattened to `(S*A) x S'` for fast matvecs.
    transition_flat: Array2<f64>,
    initial_dist: Array1<f64>,
    horizon: usize,
}

impl Mdp {
    pub fn new(transition: Array3<f64>, initial_dist: Array1<f64>, horizon: usize) -> Result<Self> {
        let (s, a, s2) = transition.dim();
        if s == 0 || a == 0 {
            return Err(Error::argument("MDP needs at least one state and one action"));
        }
        if s2 != s {
            return Err(Error::shape(format!("transition is {s}x{a}x{s2}, want {s}x{a}x{s}")));
        }
        if initial_dist.len() != s {
            return Err(Error::shape(format!(
                "initial_dist has {} entries for {s} states",
                initial_dist.len()
            )));
        }
        if horizon == 0 {
            return Err(Error::argument("horizon must be >= 1"));
        }
        for si in 0..s {
            for ai in 0..a {
                let row: Vec<f64> = (0..s).map(|sj| transition[[si, ai, sj]]).collect();
                check_distribution(&row, &format!("P(.|s={si},a={ai})"))?;
            }
        }
        check_distribution(initial_dist.as_slice().unwrap(), "initial_dist")?;

        let transition_flat =
            Array2::from_shape_fn((s * a, s), |(sa, sj)| transition[[sa / a, sa % a, sj]]);
        Ok(Mdp { num_states: s, num_actions: a, transition, transition_flat, initial_dist, horizon })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn initial_dist(&self) -> &Array1<f64> {
        &self.initial_dist
    }

    /// Dynamics as a `(S*A) x S'` matrix, row index `s * A + a`.
    pub(crate) fn transition_flat(&self) -> &Array2<f64> {
        &self.transition_flat
    }

    pub(crate) fn check_signal(&self, f: &ScalarSignal) -> Result<()> {
        let (s, a) = f.values().dim();
        if s != self.num_states || a != self.num_actions {
            return Err(Error::shape(format!(
                "signal is {s}x{a}, MDP is {}x{}",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, pi: &Policy) -> Result<()> {
        let (t, s, a) = pi.action_probs().dim();
        if t != self.horizon || s != self.num_states || a != self.num_actions {
            return Err(Error::shape(format!(
                "policy is {t}x{s}x{a}, MDP wants {}x{}x{}",
                self.horizon, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }
}

/// A bounded per-(state, action) function: rewards and constraints both live
/// here. Entries must be in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct ScalarSignal {
    values: Array2<f64>,
}

impl ScalarSignal {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for &v in values.iter() {
            if !v.is_finite() || v < -1.0 || v > 1.0 {
                return Err(Error::argument(format!("signal entry {v} outside [-1, 1]")));
            }
        }
        Ok(ScalarSignal { values })
    }

    pub fn constant(num_states: usize, num_actions: usize, v: f64) -> Result<Self> {
        ScalarSignal::new(Array2::from_elem((num_states, num_actions), v))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[[state, action]]
    }
}

/// Time-indexed stochastic policy `pi_t(a|s)`, shape `T x S x A`. Finite
/// horizons make the optimum nonstationary, hence the leading time index.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    action_probs: Array3<f64>,
}

impl Policy {
    pub fn new(action_probs: Array3<f64>) -> Result<Self> {
        let (t, s, a) = action_probs.dim();
        for ti in 0..t {
            for si in 0..s {
                let row: Vec<f64> = (0..a).map(|ai| action_probs[[ti, si, ai]]).collect();
                check_distribution(&row, &format!("pi_{ti}(.|s={si})"))?;
            }
        }
        Ok(Policy { action_probs })
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Policy { action_probs: Array3::from_elem((horizon, num_states, num_actions), p) }
    }

    /// Deterministic policy from a `T x S` table of action indices.
    pub fn deterministic(choices: &Array2<usize>, num_actions: usize) -> Result<Self> {
        let (t, s) = choices.dim();
        let mut probs = Array3::zeros((t, s, num_actions));
        for ti in 0..t {
            for si in 0..s {
                let a = choices[[ti, si]];
                if a >= num_actions {
                    return Err(Error::argument(format!("action {a} out of range")));
                }
                probs[[ti, si, a]] = 1.0;
            }
        }
        Ok(Policy { action_probs: probs })
    }

    pub fn action_probs(&self) -> &Array3<f64> {
        &self.action_probs
    }

    pub fn horizon(&self) -> usize {
        self.action_probs.dim().0
    }

    /// Pointwise blend `(1 - eps) * self + eps * uniform`.
    pub fn mix_with_uniform(&self, eps: f64) -> Result<Policy> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::argument(format!("mixing rate {eps} outside [0, 1]")));
        }
        let (_, _, a) = self.action_probs.dim();
        let u = eps / a as f64;
        Policy::new(self.action_probs.mapv(|p| (1.0 - eps) * p + u))
    }
}

/// A distribution over policies. CRL returns the uniform mixture over its
/// iterates; its value under any signal is the weighted sum of component
/// values.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    components: Vec<Policy>,
    weights: Vec<f64>,
}

impl MixturePolicy {
    pub fn new(components: Vec<Policy>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::argument("mixture needs at least one component"));
        }
        if components.len() != weights.len() {
            return Err(Error::shape(format!(
                "{} components with {} weights",
                components.len(),
                weights.len()
            )));
        }
        let dim = components[0].action_probs().dim();
        if components.iter().any(|p| p.action_probs().dim() != dim) {
            return Err(Error::shape("mixture components have mismatched shapes"));
        }
        check_distribution(&weights, "mixture weights")?;
        Ok(MixturePolicy { components, weights })
    }

    pub fn uniform(components: Vec<Policy>) -> Result<Self> {
        let w = 1.0 / components.len().max(1) as f64;
        let weights = vec![w; components.len()];
        MixturePolicy::new(components, weights)
    }

    pub fn components(&self) -> &[Policy] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted average of the component occupancies. Because occupancy is
    /// linear in the policy draw, this is the occupancy measure of the
    /// mixture itself.
    pub fn occupancy(&self, mdp: &Mdp) -> Result<OccupancyMeasure> {
        let mut rho = Array3::zeros((mdp.horizon(), mdp.num_states(), mdp.num_actions()));
        for (policy, &w) in self.components.iter().zip(&self.weights) {
            rho += &(occupancy(mdp, policy)?.rho * w);
        }
        Ok(OccupancyMeasure { rho })
    }

    /// The Markov policy with the same occupancy measure as the mixture:
    /// `pi_t(a|s) = rho_t(s,a) / rho_t(s)`. States with zero visitation mass
    /// fall back to uniform.
    pub fn to_markov(&self, mdp: &Mdp) -> Result<Policy> {
        Ok(self.occupancy(mdp)?.to_markov())
    }
}

/// Per-timestep state-action visitation distribution, shape `T x S x A`.
/// Kept per timestep so the Bellman flow constraints stay checkable; the
/// time-aggregated vector is derived on demand.
#[derive(Debug, Clone)]
pub struct OccupancyMeasure {
    rho: Array3<f64>,
}

impl OccupancyMeasure {
    /// Constructor for convex combinations of already-valid occupancy tables,
    /// which preserve the invariants.
    pub(crate) fn from_raw(rho: Array3<f64>) -> Self {
        OccupancyMeasure { rho }
    }

    pub fn rho(&self) -> &Array3<f64> {
        &self.rho
    }

    /// Visitation summed over timesteps, flattened to length `S*A` with index
    /// `s * A + a`. Total mass equals the horizon.
    pub fn aggregate(&self) -> Array1<f64> {
        let (t, s, a) = self.rho.dim();
        let mut out = Array1::zeros(s * a);
        for ti in 0..t {
            for si in 0..s {
                for ai in 0..a {
                    out[si * a + ai] += self.rho[[ti, si, ai]];
                }
            }
        }
        out
    }

    /// Expected total signal under this occupancy: `sum_t <rho_t, f>`.
    pub fn expected_total(&self, f: &ScalarSignal) -> f64 {
        let (t, s, a) = self.rho.dim();
        let mut total = 0.0;
        for ti in 0..t {
            for si in 0..s {
                for ai in 0..a {
                    total += self.rho[[ti, si, ai]] * f.get(si, ai);
                }
            }
        }
        total
    }

    /// Flatten into the Markov policy with identical occupancy.
    pub fn to_markov(&self) -> Policy {
        let (t, s, a) = self.rho.dim();
        let mut probs = Array3::zeros((t, s, a));
        for ti in 0..t {
            for si in 0..s {
                let mass: f64 = (0..a).map(|ai| self.rho[[ti, si, ai]]).sum();
                if mass > 0.0 {
                    for ai in 0..a {
                        probs[[ti, si, ai]] = self.rho[[ti, si, ai]] / mass;
                    }
                } else {
                    for ai in 0..a {
                        probs[[ti, si, ai]] = 1.0 / a as f64;
                    }
                }
            }
        }
        Policy { action_probs: probs }
    }
}

/// A rollout of exactly `T` `(state, action)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        if self.steps.len() != mdp.horizon() {
            return Err(Error::shape(format!(
                "trajectory has {} steps, horizon is {}",
                self.steps.len(),
                mdp.horizon()
            )));
        }
        for &(s, a) in &self.steps {
            if s >= mdp.num_states() || a >= mdp.num_actions() {
                return Err(Error::argument(format!("step ({s}, {a}) out of bounds")));
            }
        }
        Ok(())
    }
}

/// Exact occupancy measure of `policy` by forward recursion:
/// `rho_0(s,a) = mu(s) pi_0(a|s)`,
/// `rho_{t+1}(s',a') = pi_{t+1}(a'|s') sum_{s,a} rho_t(s,a) P(s'|s,a)`.
pub fn occupancy(mdp: &Mdp, policy: &Policy) -> Result<OccupancyMeasure> {
    mdp.check_policy(policy)?;
    let (t_max, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut rho = Array3::zeros((t_max, s, a));
    let mut state_dist = mdp.initial_dist().clone();
    for t in 0..t_max {
        for si in 0..s {
            for ai in 0..a {
                rho[[t, si, ai]] = state_dist[si] * policy.action_probs()[[t, si, ai]];
            }
        }
        if t + 1 < t_max {
            // next state distribution: rho_t (flattened) through the dynamics
            let rho_flat =
                Array1::from_shape_fn(s * a, |sa| rho[[t, sa / a, sa % a]]);
            state_dist = mdp.transition_flat().t().dot(&rho_flat);
        }
    }
    Ok(OccupancyMeasure { rho })
}

/// Either a single policy or a mixture; both have well-defined values.
#[derive(Debug, Clone, Copy)]
pub enum PolicyRef<'a> {
    Single(&'a Policy),
    Mixture(&'a MixturePolicy),
}

impl<'a> From<&'a Policy> for PolicyRef<'a> {
    fn from(p: &'a Policy) -> Self {
        PolicyRef::Single(p)
    }
}

impl<'a> From<&'a MixturePolicy> for PolicyRef<'a> {
    fn from(m: &'a MixturePolicy) -> Self {
        PolicyRef::Mixture(m)
    }
}

/// `J(pi, f) = sum_t sum_{s,a} rho_t(s,a) f(s,a)`, computed through the
/// occupancy measure. Mixtures average their component values.
pub fn value<'a>(mdp: &Mdp, policy: impl Into<PolicyRef<'a>>, f: &ScalarSignal) -> Result<f64> {
    mdp.check_signal(f)?;
    match policy.into() {
        PolicyRef::Single(p) => Ok(occupancy(mdp, p)?.expected_total(f)),
        PolicyRef::Mixture(m) => {
            let mut total = 0.0;
            for (p, &w) in m.components().iter().zip(m.weights()) {
                total += w * occupancy(mdp, p)?.expected_total(f);
            }
            Ok(total)
        }
    }
}

/// Same value through backward dynamic programming instead of occupancy
/// propagation. The two routes agree to ~1e-8 and are tested against each
/// other.
pub fn value_dp(mdp: &Mdp, policy: &Policy, f: &ScalarSignal) -> Result<f64> {
    mdp.check_policy(policy)?;
    mdp.check_signal(f)?;
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let mut v = Array1::<f64>::zeros(s);
    for t in (0..mdp.horizon()).rev() {
        let q = mdp.transition_flat().dot(&v);
        let mut v_next = Array1::<f64>::zeros(s);
        for si in 0..s {
            let mut acc = 0.0;
            for ai in 0..a {
                acc += policy.action_probs()[[t, si, ai]] * (f.get(si, ai) + q[si * a + ai]);
            }
            v_next[si] = acc;
        }
        v = v_next;
    }
    Ok(mdp.initial_dist().dot(&v))
}

fn sample_index<R: Rng>(rng: &mut R, probs: impl Iterator<Item = f64>, len: usize) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    // Guard against cumulative rounding just under 1.
    last.min(len - 1)
}

/// `n` i.i.d. rollouts of `policy`, deterministic given `seed`. Each call
/// owns the RNG stream named `("trajectories", seed)` and splits it per
/// trajectory, so callers may shard batches across workers and still
/// reproduce runs exactly.
pub fn sample_trajectories(mdp: &Mdp, policy: &Policy, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    mdp.check_policy(policy)?;
    if n == 0 {
        return Err(Error::argument("trajectory count must be >= 1"));
    }
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream(seed, "trajectories", i as u64);
        let mut state = sample_index(&mut rng, mdp.initial_dist().iter().copied(), s);
        let mut steps = Vec::with_capacity(mdp.horizon());
        for t in 0..mdp.horizon() {
            let action = sample_index(
                &mut rng,
                (0..a).map(|ai| policy.action_probs()[[t, state, ai]]),
                a,
            );
            steps.push((state, action));
            state = sample_index(
                &mut rng,
                (0..s).map(|sj| mdp.transition()[[state, action, sj]]),
                s,
            );
        }
        out.push(Trajectory { steps });
    }
    Ok(out)
}

/// Mean over trajectories of the per-trajectory signal total.
pub fn empirical_value(trajectories: &[Trajectory], f: &ScalarSignal) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::argument("empirical_value needs at least one trajectory"));
    }
    let mut total = 0.0;
    for traj in trajectories {
        for &(s, a) in &traj.steps {
            total += f.get(s, a);
        }
    }
    Ok(total / trajectories.len() as f64)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// JSON mirror of an [`Mdp`]: nested arrays, exact 64-bit float round-trip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial_dist: Vec<f64>,
}

impl From<&Mdp> for MdpFile {
    fn from(m: &Mdp) -> Self {
        let (s, a, _) = m.transition.dim();
        MdpFile {
            num_states: s,
            num_actions: a,
            horizon: m.horizon,
            transition: (0..s)
                .map(|si| {
                    (0..a)
                        .map(|ai| (0..s).map(|sj| m.transition[[si, ai, sj]]).collect())
                        .collect()
                })
                .collect(),
            initial_dist: m.initial_dist.to_vec(),
        }
    }
}

impl TryFrom<&MdpFile> for Mdp {
    type Error = Error;

    fn try_from(f: &MdpFile) -> Result<Mdp> {
        let (s, a) = (f.num_states, f.num_actions);
        if f.transition.len() != s
            || f.transition.iter().any(|row| row.len() != a)
            || f.transition.iter().flatten().any(|row| row.len() != s)
        {
            return Err(Error::shape("transition nesting disagrees with declared dims"));
        }
        let mut t = Array3::zeros((s, a, s));
        for (si, row) in f.transition.iter().enumerate() {
            for (ai, dist) in row.iter().enumerate() {
                for (sj, &p) in dist.iter().enumerate() {
                    t[[si, ai, sj]] = p;
                }
            }
        }
        Mdp::new(t, Array1::from_vec(f.initial_dist.clone()), f.horizon)
    }
}

impl Mdp {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MdpFile::from(self)).expect("MdpFile always serializes")
    }

    pub fn from_json(s: &str) -> Result<Mdp> {
        let file: MdpFile = serde_json::from_str(s)?;
        Mdp::try_from(&file)
    }
}

/// JSON mirror of a [`ScalarSignal`] (nested `S x A` arrays).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalFile {
    pub values: Vec<Vec<f64>>,
}

impl From<&ScalarSignal> for SignalFile {
    fn from(f: &ScalarSignal) -> Self {
        let (s, a) = f.values.dim();
        SignalFile {
            values: (0..s)
                .map(|si| (0..a).map(|ai| f.values[[si, ai]]).collect())
                .collect(),
        }
    }
}

impl TryFrom<&SignalFile> for ScalarSignal {
    type Error = Error;

    fn try_from(f: &SignalFile) -> Result<ScalarSignal> {
        let s = f.values.len();
        let a = f.values.first().map(|r| r.len()).unwrap_or(0);
        if s == 0 || a == 0 || f.values.iter().any(|r| r.len() != a) {
            return Err(Error::shape("signal table empty or ragged"));
        }
        let mut values = Array2::zeros((s, a));
        for (si, row) in f.values.iter().enumerate() {
            for (ai, &v) in row.iter().enumerate() {
                values[[si, ai]] = v;
            }
        }
        ScalarSignal::new(values)
    }
}

impl ScalarSignal {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&SignalFile::from(self)).expect("SignalFile always serializes")
    }

    pub fn from_json(s: &str) -> Result<ScalarSignal> {
        let file: SignalFile = serde_json::from_str(s)?;
        ScalarSignal::try_from(&file)
    }
}

/// Trajectory batches as a JSON array of arrays of `[state, action]` pairs.
pub fn trajectories_to_json(trajs: &[Trajectory]) -> String {
    let raw: Vec<Vec<[usize; 2]>> =
        trajs.iter().map(|t| t.steps.iter().map(|&(s, a)| [s, a]).collect()).collect();
    serde_json::to_string(&raw).expect("trajectory batch always serializes")
}

pub fn trajectories_from_json(s: &str) -> Result<Vec<Trajectory>> {
    let raw: Vec<Vec<[usize; 2]>> = serde_json::from_str(s)?;
    Ok(raw
        .into_iter()
        .map(|steps| Trajectory { steps: steps.into_iter().map(|[s, a]| (s, a)).collect() })
        .collect())
}

/// JSON mirror of a [`Policy`] (nested `T x S x A` arrays).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub action_probs: Vec<Vec<Vec<f64>>>,
}

impl From<&Policy> for PolicyFile {
    fn from(p: &Policy) -> Self {
        let (t, s, a) = p.action_probs.dim();
        PolicyFile {
            action_probs: (0..t)
                .map(|ti| {
                    (0..s)
                        .map(|si| (0..a).map(|ai| p.action_probs[[ti, si, ai]]).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

impl TryFrom<&PolicyFile> for Policy {
    type Error = Error;

    fn try_from(f: &PolicyFile) -> Result<Policy> {
        let t = f.action_probs.len();
        let s = f.action_probs.first().map(|x| x.len()).unwrap_or(0);
        let a = f.action_probs.first().and_then(|x| x.first()).map(|x| x.len()).unwrap_or(0);
        if t == 0 || s == 0 || a == 0 {
            return Err(Error::shape("empty policy table"));
        }
        let mut probs = Array3::zeros((t, s, a));
        for (ti, per_state) in f.action_probs.iter().enumerate() {
            if per_state.len() != s {
                return Err(Error::shape("ragged policy table"));
            }
            for (si, row) in per_state.iter().enumerate() {
                if row.len() != a {
                    return Err(Error::shape("ragged policy table"));
                }
                for (ai, &p) in row.iter().enumerate() {
                    probs[[ti, si, ai]] = p;
                }
            }
        }
        Policy::new(probs)
    }
}

// ---------------------------------------------------------------------------
