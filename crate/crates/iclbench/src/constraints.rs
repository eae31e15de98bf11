//! Feature-linear constraint classes and the constraint player's updates.
//!
//! A constraint is `c_w(s,a) = <w, phi(s,a)>` for a registered feature map
//! `phi`. The feasible class is a Euclidean ball intersected with optional
//! halfspaces; projections use Dykstra's alternating method, which is exact
//! for this family. `J(pi, c_w) = <w, Phi(rho_pi)>` where `Phi` sums features
//! under the occupancy measure, so every value the learner needs is an inner
//! product.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{OccupancyMeasure, ScalarSignal, Trajectory};

/// Dykstra iteration cap.
const MAX_PROJECTION_CYCLES: usize = 10_000;
/// A point this far outside the set is treated as infeasibility.
const FEASIBILITY_TOL: f64 = 1e-6;

/// Per-(state, action) feature vectors, `phi(s,a)` in `R^d` with
/// `max |phi_j| <= 1`, addressable by a stable id.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    id: String,
    num_states: usize,
    num_actions: usize,
    dim: usize,
    /// `(S*A) x d`, row index `s * A + a`.
    features: Array2<f64>,
}

impl FeatureMap {
    pub fn new(
        id: impl Into<String>,
        num_states: usize,
        num_actions: usize,
        features: Array2<f64>,
    ) -> Result<Self> {
        let (rows, dim) = features.dim();
        if rows != num_states * num_actions {
            return Err(Error::shape(format!(
                "feature table has {rows} rows for {num_states}x{num_actions} state-actions"
            )));
        }
        if dim == 0 {
            return Err(Error::argument("feature dimension must be >= 1"));
        }
        for &v in features.iter() {
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::argument(format!("feature entry {v} outside [-1, 1]")));
            }
        }
        Ok(FeatureMap { id: id.into(), num_states, num_actions, dim, features })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, state: usize, action: usize) -> ArrayView1<'_, f64> {
        self.features.row(state * self.num_actions + action)
    }

    /// Largest Euclidean row norm; bounds the per-round FTRL gradient by
    /// `2 * max_row_norm()` because feature expectations averaged per step
    /// stay inside the convex hull of the rows.
    pub fn max_row_norm(&self) -> f64 {
        self.features
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }

    /// Deduplicated nonzero feature rows (bitwise equality).
    pub fn distinct_rows(&self) -> Vec<Array1<f64>> {
        let mut seen: Vec<Array1<f64>> = Vec::new();
        for row in self.features.rows() {
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            if !seen.iter().any(|s| s.iter().zip(row.iter()).all(|(a, b)| a == b)) {
                seen.push(row.to_owned());
            }
        }
        seen
    }
}

/// One element of the constraint class: weights over a feature map.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    feature_map_id: String,
    weights: Array1<f64>,
    w_max: f64,
}

/// Serialized form of a constraint, including the clip count of its most
/// recent signal export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearConstraintFile {
    pub feature_map_id: String,
    pub weights: Vec<f64>,
    pub w_max: f64,
    pub clip_count_last_export: usize,
}

impl LinearConstraint {
    pub fn new(fmap: &FeatureMap, weights: Array1<f64>, w_max: f64) -> Result<Self> {
        if weights.len() != fmap.dim() {
            return Err(Error::shape(format!(
                "{} weights for feature dim {}",
                weights.len(),
                fmap.dim()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("constraint weights must be finite"));
        }
        let norm = weights.dot(&weights).sqrt();
        if norm > w_max * (1.0 + 1e-9) + 1e-9 {
            return Err(Error::argument(format!("|w| = {norm} exceeds W_max = {w_max}")));
        }
        Ok(LinearConstraint { feature_map_id: fmap.id().to_string(), weights, w_max })
    }

    pub fn zero(fmap: &FeatureMap, w_max: f64) -> Self {
        LinearConstraint {
            feature_map_id: fmap.id().to_string(),
            weights: Array1::zeros(fmap.dim()),
            w_max,
        }
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn feature_map_id(&self) -> &str {
        &self.feature_map_id
    }

    pub fn evaluate(&self, fmap: &FeatureMap, state: usize, action: usize) -> f64 {
        fmap.row(state, action).dot(&self.weights)
    }

    /// `<w, phi-vector>`; with `phi = Phi(rho_pi)` this is `J(pi, c_w)`.
    pub fn value_of_features(&self, phi: &Array1<f64>) -> f64 {
        self.weights.dot(phi)
    }

    /// Export as an admissible signal. Values are clipped into `[-1, 1]` and
    /// the number of clipped entries is returned; well-scaled classes never
    /// clip and acceptance runs assert the count stays zero.
    pub fn to_signal(&self, fmap: &FeatureMap) -> Result<(ScalarSignal, usize)> {
        if fmap.id() != self.feature_map_id {
            return Err(Error::argument(format!(
                "constraint over '{}' exported with feature map '{}'",
                self.feature_map_id,
                fmap.id()
            )));
        }
        let (s, a) = (fmap.num_states(), fmap.num_actions());
        let mut clips = 0usize;
        let mut values = Array2::zeros((s, a));
        for si in 0..s {
            for ai in 0..a {
                let v = self.evaluate(fmap, si, ai);
                if v.abs() > 1.0 {
                    clips += 1;
                }
                values[[si, ai]] = v.clamp(-1.0, 1.0);
            }
        }
        Ok((ScalarSignal::new(values)?, clips))
    }

    pub fn to_file(&self, clip_count_last_export: usize) -> LinearConstraintFile {
        LinearConstraintFile {
            feature_map_id: self.feature_map_id.clone(),
            weights: self.weights.to_vec(),
            w_max: self.w_max,
            clip_count_last_export,
        }
    }

    pub fn from_file(file: &LinearConstraintFile, fmap: &FeatureMap) -> Result<Self> {
        if file.feature_map_id != fmap.id() {
            return Err(Error::argument(format!(
                "constraint file expects feature map '{}', got '{}'",
                file.feature_map_id,
                fmap.id()
            )));
        }
        LinearConstraint::new(fmap, Array1::from_vec(file.weights.clone()), file.w_max)
    }
}

/// `<normal, w> <= offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    fn violation(&self, x: &Array1<f64>) -> f64 {
        let g = Array1::from_vec(self.normal.clone());
        g.dot(x) - self.offset
    }
}

/// The feasible constraint class: `{w : |w|_2 <= w_max}` intersected with
/// halfspaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSetDescriptor {
    w_max: f64,
    halfspaces: Vec<Halfspace>,
}

impl ConstraintSetDescriptor {
    pub fn ball(w_max: f64) -> Result<Self> {
        if !(w_max > 0.0) || !w_max.is_finite() {
            return Err(Error::argument(format!("ball radius {w_max} must be positive")));
        }
        Ok(ConstraintSetDescriptor { w_max, halfspaces: Vec::new() })
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn push_halfspace(&mut self, normal: Array1<f64>, offset: f64) -> Result<()> {
        if normal.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::argument("halfspace coefficients must be finite"));
        }
        self.halfspaces.push(Halfspace { normal: normal.to_vec(), offset });
        Ok(())
    }

    /// Bound the exported signal by construction: for every distinct feature
    /// row `phi`, require `|<phi, w>| <= 1`. Constraints drawn from the
    /// resulting set never clip at export time.
    pub fn with_value_box(mut self, fmap: &FeatureMap) -> Self {
        for row in fmap.distinct_rows() {
            self.halfspaces.push(Halfspace { normal: row.to_vec(), offset: 1.0 });
            self.halfspaces.push(Halfspace { normal: row.mapv(|v| -v).to_vec(), offset: 1.0 });
        }
        self
    }

    /// Max constraint violation at `x` (0 when feasible).
    pub fn residual(&self, x: &Array1<f64>) -> f64 {
        let mut r: f64 = x.dot(x).sqrt() - self.w_max;
        for h in &self.halfspaces {
            r = r.max(h.violation(x));
        }
        r.max(0.0)
    }

    pub fn contains(&self, x: &Array1<f64>, tol: f64) -> bool {
        self.residual(x) <= tol
    }

    /// Euclidean projection onto the set via Dykstra's alternating
    /// projections over the ball and each halfspace.
    pub fn project(&self, x0: &Array1<f64>) -> Result<Array1<f64>> {
        let d = x0.len();
        // Pure ball: closed form.
        if self.halfspaces.is_empty() {
            return Ok(clip_to_ball(x0, self.w_max));
        }
        let normals: Vec<Array1<f64>> =
            self.halfspaces.iter().map(|h| Array1::from_vec(h.normal.clone())).collect();
        let norms_sq: Vec<f64> = normals.iter().map(|g| g.dot(g)).collect();

        let n_sets = 1 + self.halfspaces.len();
        let mut x = x0.clone();
        let mut corrections: Vec<Array1<f64>> = vec![Array1::zeros(d); n_sets];
        let scale = self.w_max.max(x0.dot(x0).sqrt()).max(1.0);
        for _ in 0..MAX_PROJECTION_CYCLES {
            let x_prev = x.clone();
            for i in 0..n_sets {
                let y = &x + &corrections[i];
                let p = if i == 0 {
                    clip_to_ball(&y, self.w_max)
                } else {
                    let k = i - 1;
                    if norms_sq[k] == 0.0 {
                        // zero normal: vacuous when offset >= 0, empty otherwise
                        if self.halfspaces[k].offset < 0.0 {
                            return Err(Error::Infeasible(
                                "halfspace 0.w <= b with b < 0 is empty".into(),
                            ));
                        }
                        y.clone()
                    } else {
                        let viol = normals[k].dot(&y) - self.halfspaces[k].offset;
                        if viol > 0.0 {
                            &y - &(&normals[k] * (viol / norms_sq[k]))
                        } else {
                            y.clone()
                        }
                    }
                };
                corrections[i] = &y - &p;
                x = p;
            }
            let moved = (&x - &x_prev).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            if moved <= 1e-13 * scale && self.residual(&x) <= 1e-8 {
                return Ok(x);
            }
        }
        if self.residual(&x) <= FEASIBILITY_TOL {
            Ok(x)
        } else {
            Err(Error::Infeasible(format!(
                "projection did not reach the set (residual {:.3e})",
                self.residual(&x)
            )))
        }
    }

    /// The descriptor must describe a nonempty set: run the projector from
    /// the origin and check the feasibility residual.
    pub fn verify_feasible(&self) -> Result<()> {
        let d = self
            .halfspaces
            .iter()
            .map(|h| h.normal.len())
            .max()
            .unwrap_or(1);
        let x = self.project(&Array1::zeros(d))?;
        if self.residual(&x) <= FEASIBILITY_TOL {
            Ok(())
        } else {
            Err(Error::Infeasible(format!("residual {} from origin", self.residual(&x))))
        }
    }
}

fn clip_to_ball(x: &Array1<f64>, radius: f64) -> Array1<f64> {
    let norm = x.dot(x).sqrt();
    if norm <= radius {
        x.clone()
    } else {
        x * (radius / norm)
    }
}

/// `Phi(rho) = sum_t sum_{s,a} rho_t(s,a) phi(s,a)`.
pub fn expected_features(occ: &OccupancyMeasure, fmap: &FeatureMap) -> Result<Array1<f64>> {
    let (t, s, a) = occ.rho().dim();
    if s != fmap.num_states() || a != fmap.num_actions() {
        return Err(Error::shape(format!(
            "occupancy is {s}x{a}, feature map is {}x{}",
            fmap.num_states(),
            fmap.num_actions()
        )));
    }
    let mut phi = Array1::zeros(fmap.dim());
    for ti in 0..t {
        for si in 0..s {
            for ai in 0..a {
                let w = occ.rho()[[ti, si, ai]];
                if w != 0.0 {
                    phi.scaled_add(w, &fmap.row(si, ai));
                }
            }
        }
    }
    Ok(phi)
}

/// Feature total of one trajectory: `sum_t phi(s_t, a_t)`.
pub fn trajectory_features(traj: &Trajectory, fmap: &FeatureMap) -> Result<Array1<f64>> {
    let mut phi = Array1::zeros(fmap.dim());
    for &(s, a) in &traj.steps {
        if s >= fmap.num_states() || a >= fmap.num_actions() {
            return Err(Error::argument(format!("trajectory step ({s},{a}) out of bounds")));
        }
        phi += &fmap.row(s, a);
    }
    Ok(phi)
}

/// Mean per-trajectory feature total: the empirical estimate of `Phi(rho)`.
pub fn empirical_features(trajs: &[Trajectory], fmap: &FeatureMap) -> Result<Array1<f64>> {
    if trajs.is_empty() {
        return Err(Error::argument("empirical_features needs at least one trajectory"));
    }
    let mut phi = Array1::zeros(fmap.dim());
    for traj in trajs {
        phi += &trajectory_features(traj, fmap)?;
    }
    Ok(phi / trajs.len() as f64)
}

/// FTRL with the quadratic regularizer `(alpha/2)|w|^2`:
/// `argmax_{w in set} <w, sum_j g_j> - (alpha/2)|w|^2`.
///
/// Completing the square turns this into the Euclidean projection of
/// `sum_j g_j / alpha` onto the set, so the iterative path is projected
/// gradient ascent that lands in one step; pure ball sets take the clip
/// closed form directly.
pub fn ftrl_update(
    loss_grads: &[Array1<f64>],
    alpha: f64,
    set: &ConstraintSetDescriptor,
    fmap: &FeatureMap,
) -> Result<LinearConstraint> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::argument(format!("alpha {alpha} must be positive")));
    }
    let mut total = Array1::zeros(fmap.dim());
    for g in loss_grads {
        if g.len() != fmap.dim() {
            return Err(Error::shape(format!("gradient dim {} != {}", g.len(), fmap.dim())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("gradients must be finite"));
        }
        total += g;
    }
    let w = set.project(&(total / alpha))?;
    LinearConstraint::new(fmap, w, set.w_max())
}

/// Default FTRL regularizer weight `G sqrt(N) / D` from the known bounds:
/// gradient bound `G = 2 * max_row_norm` and diameter `D = w_max`. `scale`
/// trades regret for aggressiveness and is exposed in run configs.
pub fn ftrl_alpha(fmap: &FeatureMap, set: &ConstraintSetDescriptor, n_rounds: usize, scale: f64) -> f64 {
    let g = (2.0 * fmap.max_row_norm()).max(1e-12);
    g * (n_rounds.max(1) as f64).sqrt() / set.w_max() * scale
}

/// Restrict the class to constraints under which every provided expert is
/// safe: appends `<Phi_E_k, w> <= 0` per task.
pub fn build_restricted_set(
    base: &ConstraintSetDescriptor,
    expert_feature_vectors: &[Array1<f64>],
) -> Result<ConstraintSetDescriptor> {
    if expert_feature_vectors.is_empty() {
        return Err(Error::argument("need at least one expert feature vector"));
    }
    let mut set = base.clone();
    for phi in expert_feature_vectors {
        set.push_halfspace(phi.clone(), 0.0)?;
    }
    set.verify_feasible().map_err(|e| {
        Error::Infeasible(format!("expert-safety restriction emptied the class: {e}"))
    })?;
    Ok(set)
}

/// The practical regression-style constraint update: least-squares fit of
/// per-trajectory constraint totals to +1 (learner) and -1 (expert) targets,
/// all samples weighted equally, minimum-norm solution projected onto the
/// set.
pub fn regression_update(
    learner_feature_vectors: &[Array1<f64>],
    expert_feature_vectors: &[Array1<f64>],
    set: &ConstraintSetDescriptor,
    fmap: &FeatureMap,
) -> Result<LinearConstraint> {
    if learner_feature_vectors.is_empty() || expert_feature_vectors.is_empty() {
        return Err(Error::argument("regression_update needs samples from both classes"));
    }
    let d = fmap.dim();
    let n = learner_feature_vectors.len() + expert_feature_vectors.len();
    let mut x = nalgebra::DMatrix::<f64>::zeros(n, d);
    let mut y = nalgebra::DVector::<f64>::zeros(n);
    for (i, phi) in
        learner_feature_vectors.iter().chain(expert_feature_vectors.iter()).enumerate()
    {
        if phi.len() != d {
            return Err(Error::shape(format!("feature vector dim {} != {d}", phi.len())));
        }
        for j in 0..d {
            x[(i, j)] = phi[j];
        }
        y[i] = if i < learner_feature_vectors.len() { 1.0 } else { -1.0 };
    }
    let svd = x.svd(true, true);
    let w = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::Pipeline(format!("least-squares solve failed: {e}")))?;
    let w = Array1::from_iter(w.iter().copied());
    let w = set.project(&w)?;
    LinearConstraint::new(fmap, w, set.w_max())
}
