//! Geometric identifiability from saturating experts.
//!
//! Stack consecutive differences of expert aggregate occupancies into a
//! matrix; every constraint all experts saturate lies in its null space. One
//! structural direction is always present: aggregate occupancies share total
//! mass, so the all-ones vector annihilates every difference row. The null
//! space computation therefore reports both the raw SVD null dimension and
//! the effective dimension with the mass direction excluded, and recovery is
//! judged on the effective space.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{value, OccupancyMeasure, ScalarSignal};
use crate::mticl::TaskBundle;
use crate::solvers::rl_optimal_value;

/// Per-(state, action) visitation summed over timesteps; total mass equals
/// the horizon.
#[derive(Debug, Clone)]
pub struct AggregateOccupancy {
    rho: Array1<f64>,
    horizon: f64,
}

impl AggregateOccupancy {
    pub fn new(rho: Array1<f64>, horizon: usize) -> Result<Self> {
        if rho.iter().any(|&v| !v.is_finite() || v < -1e-12) {
            return Err(Error::argument("aggregate occupancy entries must be nonnegative"));
        }
        let mass: f64 = rho.sum();
        let t = horizon as f64;
        if (mass - t).abs() > 1e-8 {
            return Err(Error::argument(format!("mass {mass} differs from horizon {t}")));
        }
        Ok(AggregateOccupancy { rho: rho.mapv(|v| v.max(0.0)), horizon: t })
    }

    pub fn from_occupancy(occ: &OccupancyMeasure) -> Self {
        let rho = occ.aggregate();
        let horizon = occ.rho().dim().0 as f64;
        AggregateOccupancy { rho, horizon }
    }

    pub fn vector(&self) -> &Array1<f64> {
        &self.rho
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `<rho, f>` for a flattened per-(s,a) function; equals `J(pi, f)` for
    /// time-independent signals.
    pub fn inner(&self, f: &Array1<f64>) -> f64 {
        self.rho.dot(f)
    }
}

/// Rows `rho_i - rho_{i+1}` over consecutive expert pairs: `(m-1) x (S*A)`.
pub fn occupancy_difference_matrix(experts: &[AggregateOccupancy]) -> Result<Array2<f64>> {
    if experts.len() < 2 {
        return Err(Error::argument("need at least 2 experts to form differences"));
    }
    let dim = experts[0].rho.len();
    if experts.iter().any(|e| e.rho.len() != dim) {
        return Err(Error::shape("experts have mismatched dimensions"));
    }
    let mut m = Array2::zeros((experts.len() - 1, dim));
    for i in 0..experts.len() - 1 {
        let row = &experts[i].rho - &experts[i + 1].rho;
        m.row_mut(i).assign(&row);
    }
    Ok(m)
}

/// Outcome of the null-space recovery.
#[derive(Debug, Clone)]
pub struct NullSpaceReport {
    /// Orthonormal basis of the effective null space (mass direction
    /// removed when it was present alongside others).
    pub basis: Vec<Array1<f64>>,
    /// Dimension of the raw SVD null space.
    pub raw_null_dim: usize,
    /// Effective null dimension after excluding the structural mass
    /// direction.
    pub null_dim: usize,
    /// Whether the all-ones direction was in the raw null space and got
    /// excluded.
    pub mass_direction_excluded: bool,
    /// Unit-norm recovered constraint when `null_dim == 1`, signed so the
    /// unsafe probe scores positive.
    pub c_hat: Option<Array1<f64>>,
    pub identifiable: bool,
}

/// Null space of the difference matrix via SVD with threshold
/// `tol * sigma_max`.
///
/// The all-ones direction is always annihilated by occupancy differences
/// (mass conservation); when it shows up alongside other null directions it
/// is projected out and only the remainder counts toward identifiability. If
/// the remainder is one-dimensional, the basis vector is oriented against
/// the unsafe probe (an aggregate occupancy known to violate the constraint,
/// typically the unconstrained optimum of one task) and returned as the
/// recovered constraint.
pub fn null_space_constraint(
    diff_matrix: &Array2<f64>,
    unsafe_probe: &AggregateOccupancy,
    tol: f64,
) -> Result<NullSpaceReport> {
    let (rows, cols) = diff_matrix.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::argument("difference matrix is empty"));
    }
    if unsafe_probe.rho.len() != cols {
        return Err(Error::shape("probe dimension disagrees with matrix"));
    }
    if !(tol > 0.0) {
        return Err(Error::argument("tolerance must be positive"));
    }
    let max_abs = diff_matrix.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max_abs == 0.0 {
        return Err(Error::Degenerate("all-zero difference matrix (coinciding experts)".into()));
    }

    // Pad with zero rows up to square so the thin SVD carries every right
    // singular vector.
    let padded_rows = rows.max(cols);
    let mut m = DMatrix::<f64>::zeros(padded_rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = diff_matrix[[i, j]];
        }
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let threshold = tol * sigma_max;

    let mut raw_basis: Vec<Array1<f64>> = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= threshold {
            let row = v_t.row(i);
            raw_basis.push(Array1::from_iter(row.iter().copied()));
        }
    }
    let raw_null_dim = raw_basis.len();

    // Is the mass direction inside the raw null space?
    let ones = Array1::from_elem(cols, 1.0 / (cols as f64).sqrt());
    let m_ones_norm = {
        let prod = diff_matrix.dot(&ones);
        prod.dot(&prod).sqrt()
    };
    let mass_in_null = m_ones_norm <= threshold;

    let (basis, mass_direction_excluded) = if mass_in_null && raw_null_dim >= 2 {
        // project the mass direction out and re-orthonormalize
        let mut reduced: Vec<Array1<f64>> = Vec::new();
        for b in &raw_basis {
            let mut v = b - &(&ones * b.dot(&ones));
            for r in &reduced {
                let coef = v.dot(r);
                v = &v - &(r * coef);
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                reduced.push(v / norm);
            }
        }
        (reduced, true)
    } else {
        (raw_basis, false)
    };

    let null_dim = basis.len();
    let mut c_hat = None;
    if null_dim == 1 {
        let mut v = basis[0].clone();
        if unsafe_probe.rho.dot(&v) < 0.0 {
            v = -v;
        }
        c_hat = Some(v);
    }
    Ok(NullSpaceReport {
        identifiable: null_dim == 1,
        basis,
        raw_null_dim,
        null_dim,
        mass_direction_excluded,
        c_hat,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SaturationRecord {
    pub task_id: String,
    pub expert_value: f64,
    pub optimal_value: f64,
    pub gap: f64,
    pub saturated: bool,
}

/// Compare each task's expert value against the unconstrained optimum for
/// its reward. A positive gap is evidence the constraint binds for that
/// task. Expert values are exact when the bundle stores the policy,
/// empirical otherwise.
pub fn verify_saturation(bundle: &TaskBundle, _c: &ScalarSignal) -> Result<Vec<SaturationRecord>> {
    bundle.validate()?;
    let mut out = Vec::with_capacity(bundle.tasks.len());
    for task in &bundle.tasks {
        let optimal_value = rl_optimal_value(&bundle.mdp, &task.reward)?;
        let expert_value = match &task.expert_policy {
            Some(p) => value(&bundle.mdp, p, &task.reward)?,
            None => crate::mdp::empirical_value(&task.expert_trajs, &task.reward)?,
        };
        let gap = optimal_value - expert_value;
        out.push(SaturationRecord {
            task_id: task.id.clone(),
            expert_value,
            optimal_value,
            gap,
            saturated: gap > 1e-6,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct MixtureIndependenceRecord {
    pub index: usize,
    pub residual: f64,
    /// True when this expert's occupancy is (numerically) a convex
    /// combination of the others, violating the lemma's independence
    /// condition.
    pub violated: bool,
}

/// For each expert, fit its aggregate occupancy by a convex combination of
/// the others (nonnegative weights summing to one) and report the residual.
pub fn check_mixture_independence(
    experts: &[AggregateOccupancy],
    tol: f64,
) -> Result<Vec<MixtureIndependenceRecord>> {
    if experts.len() < 2 {
        return Err(Error::argument("need at least 2 experts"));
    }
    let dim = experts[0].rho.len();
    let mut out = Vec::with_capacity(experts.len());
    for i in 0..experts.len() {
        let others: Vec<&Array1<f64>> =
            experts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, e)| &e.rho).collect();
        let residual = convex_fit_residual(&experts[i].rho, &others, dim);
        out.push(MixtureIndependenceRecord { index: i, residual, violated: residual < tol });
    }
    Ok(out)
}

/// `min_theta |A theta - target|_2` over the probability simplex, by
/// projected gradient descent. Scales here are tiny (a handful of experts),
/// so a fixed iteration budget is plenty.
fn convex_fit_residual(target: &Array1<f64>, others: &[&Array1<f64>], dim: usize) -> f64 {
    let m = others.len();
    if m == 1 {
        let diff = target - others[0];
        return diff.dot(&diff).sqrt();
    }
    // Lipschitz constant of the gradient: largest eigenvalue of A^T A,
    // bounded by its Frobenius norm.
    let mut frob = 0.0f64;
    for a in others {
        frob += a.dot(*a);
    }
    let step = 1.0 / frob.max(1e-12);
    let mut theta = Array1::from_elem(m, 1.0 / m as f64);
    let mut resid = Array1::<f64>::zeros(dim);
    for _ in 0..5000 {
        // residual = A theta - target
        resid.fill(0.0);
        for (j, a) in others.iter().enumerate() {
            resid.scaled_add(theta[j], a);
        }
        resid -= target;
        // gradient = A^T residual
        let grad = Array1::from_shape_fn(m, |j| others[j].dot(&resid));
        let next = project_simplex(&(&theta - &(&grad * step)));
        let moved = (&next - &theta).iter().fold(0.0f64, |mx, &v| mx.max(v.abs()));
        theta = next;
        if moved < 1e-14 {
            break;
        }
    }
    resid.fill(0.0);
    for (j, a) in others.iter().enumerate() {
        resid.scaled_add(theta[j], a);
    }
    resid -= target;
    resid.dot(&resid).sqrt()
}

/// Euclidean projection onto the probability simplex (sort-based).
fn project_simplex(x: &Array1<f64>) -> Array1<f64> {
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut rho = 0usize;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            rho = k + 1;
            theta = candidate;
        }
    }
    let _ = rho;
    x.mapv(|v| (v - theta).max(0.0))
}
