//! Per-material-class regularized estimation of BRDF weights.
//!
//! For every material class, the observation is explained with only that
//! class's basis columns, biased toward the class mean BRDF by a Tikhonov
//! term whose strength balances the image magnitude against the class size.
//! Candidates from all classes are combined per color channel and the one
//! with the smallest combined data term wins, so all three channels end up
//! indexing the same class.

use nalgebra::{DMatrix, DVector};

use crate::gmm::{ClassAssignment, GmmModel};
use crate::render::ObservationMatrix;
use crate::subspace::Subspace;
use crate::{Error, Result};

/// Estimator knobs. `lambda` is the balancing constant of the class-prior
/// term; `sigma` scales the data term when evaluating the full MAP loss
/// (selection itself fixes sigma = 1, where it only shifts the scale).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub lambda: f64,
    pub sigma: f64,
    /// Relative singular-value threshold of the rank-revealing solve.
    pub solver_tolerance: f64,
    /// Clamp weights to be non-negative (experimental, off by default).
    pub non_negative: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lambda: 0.5,
            sigma: 1.0,
            solver_tolerance: 1e-12,
            non_negative: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if !(self.solver_tolerance > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Balancing factor `lambda * ||y||^2 / c_j`: matches the magnitude of the
/// image error (which scales with lighting intensity and reflectivity) to
/// the class-prior term (which scales with the class size).
pub fn balance(lambda: f64, observation: &DVector<f64>, class_size: usize) -> Result<f64> {
    if class_size == 0 {
        return Err(Error::Argument("balancing needs a non-empty class".into()));
    }
    Ok(lambda * observation.norm_squared() / class_size as f64)
}

/// Squared data term `||Y w - y||^2` (the selection log-likelihood with
/// zero mean and unit sigma).
pub fn data_loglik(observations: &DMatrix<f64>, weights: &DVector<f64>, target: &DVector<f64>) -> f64 {
    (observations * weights - target).norm_squared()
}

/// Solves `argmin ||Y_j w - y||^2 + (lambda_j / sigma_scale^2) ||w - mean||^2`
/// with `mean = (1/c_j, ..., 1/c_j)` via the stacked augmented system and a
/// rank-revealing factorization.
pub fn solve_class(
    class_observations: &DMatrix<f64>,
    target: &DVector<f64>,
    lambda_j: f64,
    sigma_scale: f64,
    config: &EstimatorConfig,
) -> Result<DVector<f64>> {
    let (rows, cols) = class_observations.shape();
    if cols == 0 {
        return Err(Error::Argument("class has no basis columns".into()));
    }
    if target.len() != rows {
        return Err(Error::Argument(format!(
            "observation length {} does not match {} rows",
            target.len(),
            rows
        )));
    }
    if !(lambda_j >= 0.0) || !lambda_j.is_finite() {
        return Err(Error::Argument("balancing factor must be finite and >= 0".into()));
    }

    let ridge = (lambda_j / (sigma_scale * sigma_scale)).sqrt();
    let class_mean = DVector::from_element(cols, 1.0 / cols as f64);

    // Stack [Y_j; ridge * I] against [y; ridge * mean].
    let mut stacked = DMatrix::zeros(rows + cols, cols);
    stacked.view_mut((0, 0), (rows, cols)).copy_from(class_observations);
    for i in 0..cols {
        stacked[(rows + i, i)] = ridge;
    }
    let mut rhs = DVector::zeros(rows + cols);
    rhs.rows_mut(0, rows).copy_from(target);
    for i in 0..cols {
        rhs[rows + i] = ridge * class_mean[i];
    }

    if config.non_negative {
        return nnls(&stacked, &rhs);
    }

    let svd = stacked.svd(true, true);
    let max_sv = svd.singular_values.max();
    if lambda_j == 0.0 && (max_sv <= 0.0 || svd.singular_values.min() <= config.solver_tolerance * max_sv)
    {
        return Err(Error::Numerical(
            "unregularized system is rank-deficient; the solve is ill-posed".into(),
        ));
    }
    let solution = svd
        .solve(&rhs, config.solver_tolerance * max_sv.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Numerical(format!("least squares solve failed: {e}")))?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("solution contains non-finite weights".into()));
    }
    Ok(solution)
}

/// Lawson–Hanson active-set non-negative least squares.
fn nnls(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = matrix.ncols();
    let mut passive = vec![false; cols];
    let mut solution = DVector::zeros(cols);
    for _ in 0..3 * cols.max(10) {
        let residual = rhs - matrix * &solution;
        let gradient = matrix.tr_mul(&residual);
        // Most violated inactive constraint.
        let candidate = (0..cols)
            .filter(|&i| !passive[i])
            .max_by(|&a, &b| gradient[a].partial_cmp(&gradient[b]).unwrap());
        match candidate {
            Some(i) if gradient[i] > 1e-12 => passive[i] = true,
            _ => return Ok(solution),
        }
        loop {
            let active_cols: Vec<usize> = (0..cols).filter(|&i| passive[i]).collect();
            let sub = matrix.select_columns(active_cols.iter());
            let sub_solution = sub
                .svd(true, true)
                .solve(rhs, 1e-12)
                .map_err(|e| Error::Numerical(format!("nnls inner solve failed: {e}")))?;
            if sub_solution.iter().all(|v| *v > 0.0) {
                solution.fill(0.0);
                for (k, &i) in active_cols.iter().enumerate() {
                    solution[i] = sub_solution[k];
                }
                break;
            }
            // Step back to the feasible boundary and drop a variable.
            let mut alpha = 1.0f64;
            for (k, &i) in active_cols.iter().enumerate() {
                if sub_solution[k] <= 0.0 {
                    let step = solution[i] / (solution[i] - sub_solution[k]);
                    alpha = alpha.min(step);
                }
            }
            for (k, &i) in active_cols.iter().enumerate() {
                solution[i] += alpha * (sub_solution[k] - solution[i]);
                if solution[i] <= 1e-14 {
                    solution[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    Ok(solution)
}

/// Minimum-norm unregularized least squares over all basis columns (the
/// comparison baseline).
pub fn naive_ls(observations: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>> {
    if target.len() != observations.nrows() {
        return Err(Error::Argument("observation length mismatch".into()));
    }
    let svd = observations.clone().svd(true, true);
    let max_sv = svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(target, 1e-12 * max_sv)
        .map_err(|e| Error::Numerical(format!("least squares solve failed: {e}")))
}

/// Full non-linear MAP loss for one channel:
/// `||Y w - y||^2 / sigma^2 - log sum_j pi_j N(U^T B w | mu_j, Sigma_j)`.
/// Diagnostic only; the estimator never optimizes this directly.
pub fn full_map_loss(
    weights: &DVector<f64>,
    observations: &DMatrix<f64>,
    target: &DVector<f64>,
    model: &GmmModel,
    subspace: &Subspace,
    basis_matrix: &DMatrix<f64>,
    sigma: f64,
) -> Result<f64> {
    if weights.len() != basis_matrix.ncols() || weights.len() != observations.ncols() {
        return Err(Error::Argument("weight length mismatch".into()));
    }
    let data = data_loglik(observations, weights, target) / (sigma * sigma);
    let brdf = basis_matrix * weights;
    let coords = subspace.basis().tr_mul(&brdf);
    Ok(data - model.log_density(&coords))
}

/// One class's provisional solution.
#[derive(Debug, Clone)]
pub struct ClassCandidate {
    pub class_id: usize,
    /// Per-channel weights over the class's own columns.
    pub weights: [DVector<f64>; 3],
    /// Per-channel squared residuals.
    pub channel_logliks: [f64; 3],
    /// Combined data log-likelihood (sum over channels).
    pub data_loglik: f64,
    /// Norm of the combined rendered residual.
    pub residual_norm: f64,
}

/// Output of the RGB estimation.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Valid candidates in class order.
    pub candidates: Vec<ClassCandidate>,
    /// Classes whose solve failed or that had no columns.
    pub invalid_classes: Vec<usize>,
    /// Winning class id.
    pub selected: usize,
    /// Full-length weights per channel (zero outside the selected class).
    pub weights: [DVector<f64>; 3],
}

impl EstimationResult {
    pub fn candidate(&self, class_id: usize) -> Option<&ClassCandidate> {
        self.candidates.iter().find(|c| c.class_id == class_id)
    }

    pub fn selected_candidate(&self) -> &ClassCandidate {
        self.candidate(self.selected)
            .expect("selected class always has a candidate")
    }
}

/// Filters rows of the observation matrices and targets by a validity mask.
fn filter_rows(
    matrix: &DMatrix<f64>,
    target: &DVector<f64>,
    keep: &[usize],
) -> (DMatrix<f64>, DVector<f64>) {
    let m = matrix.select_rows(keep.iter());
    let t = DVector::from_iterator(keep.len(), keep.iter().map(|&r| target[r]));
    (m, t)
}

/// Estimates RGB weights: one regularized solve per class and channel,
/// candidates combined across channels, selection by the combined data term.
pub fn estimate_rgb(
    observations: &ObservationMatrix,
    targets: [&DVector<f64>; 3],
    validity: Option<&[bool]>,
    assignment: &ClassAssignment,
    config: &EstimatorConfig,
) -> Result<EstimationResult> {
    config.validate()?;
    let n = observations.len();
    if assignment.len() != n {
        return Err(Error::Argument(format!(
            "assignment covers {} columns, basis has {n}",
            assignment.len()
        )));
    }
    let rows = observations.rows();
    for t in targets {
        if t.len() != rows {
            return Err(Error::Argument("target length does not match observations".into()));
        }
    }

    // Pixels masked invalid are dropped from the rows before any solve.
    let kept_rows: Vec<usize> = match validity {
        Some(mask) => {
            if mask.len() != rows {
                return Err(Error::Argument("validity mask length mismatch".into()));
            }
            (0..rows).filter(|&r| mask[r]).collect()
        }
        None => (0..rows).collect(),
    };
    if kept_rows.is_empty() {
        return Err(Error::Argument("no valid pixels to estimate from".into()));
    }

    let mut channel_obs = Vec::with_capacity(3);
    let mut channel_targets = Vec::with_capacity(3);
    for c in 0..3 {
        let (m, t) = filter_rows(&observations.channels[c], targets[c], &kept_rows);
        channel_obs.push(m);
        channel_targets.push(t);
    }

    let mut candidates = Vec::new();
    let mut invalid = Vec::new();
    for class_id in 0..assignment.class_count() {
        let members = assignment.members(class_id);
        if members.is_empty() {
            invalid.push(class_id);
            continue;
        }
        let mut weights: [DVector<f64>; 3] =
            [DVector::zeros(0), DVector::zeros(0), DVector::zeros(0)];
        let mut channel_logliks = [0.0f64; 3];
        let mut failed = false;
        for c in 0..3 {
            let class_columns = channel_obs[c].select_columns(members.iter());
            let lambda_j = balance(config.lambda, &channel_targets[c], members.len())?;
            match solve_class(&class_columns, &channel_targets[c], lambda_j, 1.0, config) {
                Ok(w) => {
                    channel_logliks[c] = data_loglik(&class_columns, &w, &channel_targets[c]);
                    weights[c] = w;
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            invalid.push(class_id);
            continue;
        }
        let data = channel_logliks.iter().sum();
        candidates.push(ClassCandidate {
            class_id,
            weights,
            channel_logliks,
            data_loglik: data,
            residual_norm: f64::sqrt(data),
        });
    }
    if candidates.is_empty() {
        return Err(Error::Numerical(
            "every material class failed to produce a candidate".into(),
        ));
    }

    // Selection: smallest combined data term, ties to the lowest class id
    // (candidates are already in class order).
    let selected = candidates
        .iter()
        .min_by(|a, b| a.data_loglik.partial_cmp(&b.data_loglik).unwrap())
        .map(|c| c.class_id)
        .unwrap();

    let winner = candidates
        .iter()
        .find(|c| c.class_id == selected)
        .unwrap();
    let mut expanded = [
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
    ];
    for c in 0..3 {
        for (k, &col) in assignment.members(selected).iter().enumerate() {
            expanded[c][col] = winner.weights[c][k];
        }
    }

    Ok(EstimationResult {
        candidates,
        invalid_classes: invalid,
        selected,
        weights: expanded,
    })
}
