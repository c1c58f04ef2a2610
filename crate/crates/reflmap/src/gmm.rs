//! Gaussian mixture model over projected BRDF coordinates.
//!
//! Fitting runs expectation-maximization bootstrapped by seeded k-means++.
//! Components define the material classes: each basis column belongs to the
//! component with the highest responsibility. All randomness flows from one
//! explicit seed so a fit is reproducible bit for bit.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use std::f64::consts::PI;

/// Relative ridge added to every covariance each M-step.
const COV_RIDGE: f64 = 1e-6;
/// Components with a mixing weight below `1 / (RESEED_FACTOR * n)` are
/// re-seeded to prevent collapse onto a single point.
const RESEED_FACTOR: f64 = 10.0;

/// One Gaussian component.
#[derive(Debug, Clone)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GmmComponent {
    /// Log density of the component (without the mixing weight).
    pub fn log_density(&self, point: &DVector<f64>) -> f64 {
        let dim = self.mean.len() as f64;
        let chol = Cholesky::new(self.covariance.clone())
            .expect("component covariance is kept positive-definite");
        let log_det = 2.0 * chol.l().diagonal().map(f64::ln).sum();
        let centered = point - &self.mean;
        let solved = chol.solve(&centered);
        let quad = centered.dot(&solved);
        -0.5 * (dim * (2.0 * PI).ln() + log_det + quad)
    }
}

/// Fitted mixture model plus its per-iteration log-likelihood trace.
#[derive(Debug, Clone)]
pub struct GmmModel {
    components: Vec<GmmComponent>,
    fit_log: Vec<f64>,
}

/// Hard class membership derived from the fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAssignment {
    class_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClassAssignment {
    pub fn class_count(&self) -> usize {
        self.members.len()
    }

    pub fn class_of(&self, point: usize) -> usize {
        self.class_of[point]
    }

    pub fn classes(&self) -> &[usize] {
        &self.class_of
    }

    /// Column indices belonging to class `j`.
    pub fn members(&self, j: usize) -> &[usize] {
        &self.members[j]
    }

    pub fn count(&self, j: usize) -> usize {
        self.members[j].len()
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    pub(crate) fn from_classes(class_of: Vec<usize>, class_count: usize) -> Self {
        let mut members = vec![Vec::new(); class_count];
        for (i, &c) in class_of.iter().enumerate() {
            members[c].push(i);
        }
        ClassAssignment { class_of, members }
    }

    /// Assignment with every point in one class (the single-class baseline).
    pub fn single_class(point_count: usize) -> Self {
        ClassAssignment::from_classes(vec![0; point_count], 1)
    }
}

fn point_row(points: &DMatrix<f64>, i: usize) -> DVector<f64> {
    points.row(i).transpose()
}

/// Ridge that keeps a covariance positive-definite: proportional to its own
/// trace with an absolute floor derived from the data spread.
fn regularize_covariance(cov: &mut DMatrix<f64>, floor: f64) -> Result<()> {
    let dim = cov.nrows();
    let trace_scale = cov.trace() / dim as f64;
    let mut ridge = COV_RIDGE * trace_scale.max(floor).max(f64::MIN_POSITIVE);
    for _ in 0..40 {
        let candidate = cov.clone() + DMatrix::from_diagonal_element(dim, dim, ridge);
        if Cholesky::new(candidate.clone()).is_some() {
            *cov = candidate;
            return Ok(());
        }
        ridge *= 10.0;
    }
    Err(Error::Numerical(
        "covariance could not be regularized to positive-definite".into(),
    ))
}

/// Mean per-dimension variance of the data; scale floor for degenerate
/// covariances (single-point clusters).
fn variance_floor(points: &DMatrix<f64>) -> f64 {
    let n = points.nrows() as f64;
    let mean = points.row_mean();
    let mut total = 0.0;
    for i in 0..points.nrows() {
        let d = points.row(i) - &mean;
        total += d.norm_squared();
    }
    (total / (n * points.ncols() as f64)).max(1e-12)
}

/// Seeded k-means++ with Lloyd iterations; returns mixture parameters
/// (cluster fraction, centroid, within-cluster covariance).
pub fn kmeans_init(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<GmmComponent>> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::Argument(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding: first centroid uniform, then squared-distance
    // weighted draws.
    let mut centroids: Vec<DVector<f64>> = Vec::with_capacity(k);
    centroids.push(point_row(points, rng.random_range(0..n)));
    let mut dist_sq = vec![0.0f64; n];
    while centroids.len() < k {
        let mut total = 0.0;
        for i in 0..n {
            let p = point_row(points, i);
            let d = centroids
                .iter()
                .map(|c| (&p - c).norm_squared())
                .fold(f64::INFINITY, f64::min);
            dist_sq[i] = d;
            total += d;
        }
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining points coincide with a centroid.
            rng.random_range(0..n)
        };
        centroids.push(point_row(points, next));
    }

    // Lloyd iterations to convergence.
    let mut assignment = vec![0usize; n];
    for _ in 0..100 {
        for i in 0..n {
            let p = point_row(points, i);
            let mut best = (0usize, f64::INFINITY);
            for (j, c) in centroids.iter().enumerate() {
                let d = (&p - c).norm_squared();
                if d < best.1 {
                    best = (j, d);
                }
            }
            assignment[i] = best.0;
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![DVector::zeros(points.ncols()); k];
        for i in 0..n {
            counts[assignment[i]] += 1;
            sums[assignment[i]] += point_row(points, i);
        }
        // Re-seed empty clusters at the point farthest from its centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[assignment[i]] > 1)
                    .max_by(|&a, &b| {
                        let da =
                            (point_row(points, a) - &centroids[assignment[a]]).norm_squared();
                        let db =
                            (point_row(points, b) - &centroids[assignment[b]]).norm_squared();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                counts[assignment[far]] -= 1;
                sums[assignment[far]] -= point_row(points, far);
                assignment[far] = j;
                counts[j] = 1;
                sums[j] = point_row(points, far);
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            let new_c = &sums[j] / counts[j] as f64;
            shift = shift.max((&new_c - &centroids[j]).norm());
            centroids[j] = new_c;
        }
        if shift < 1e-9 {
            break;
        }
    }

    // Final hard assignment defines the initial mixture parameters.
    for i in 0..n {
        let p = point_row(points, i);
        let mut best = (0usize, f64::INFINITY);
        for (j, c) in centroids.iter().enumerate() {
            let d = (&p - c).norm_squared();
            if d < best.1 {
                best = (j, d);
            }
        }
        assignment[i] = best.0;
    }
    let floor = variance_floor(points);
    let dim = points.ncols();
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == j).collect();
        let count = members.len().max(1);
        let mut cov = DMatrix::zeros(dim, dim);
        for &i in &members {
            let d = point_row(points, i) - &centroids[j];
            cov += &d * d.transpose();
        }
        cov /= count as f64;
        regularize_covariance(&mut cov, floor)?;
        components.push(GmmComponent {
            weight: members.len() as f64 / n as f64,
            mean: centroids[j].clone(),
            covariance: cov,
        });
    }
    Ok(components)
}

/// Log of the mixture density and the per-component responsibilities,
/// computed in log space with max subtraction.
fn log_mixture(components: &[GmmComponent], point: &DVector<f64>) -> (f64, DVector<f64>) {
    let k = components.len();
    let mut logs = DVector::zeros(k);
    for (j, comp) in components.iter().enumerate() {
        logs[j] = if comp.weight > 0.0 {
            comp.weight.ln() + comp.log_density(point)
        } else {
            f64::NEG_INFINITY
        };
    }
    let max = logs.max();
    if !max.is_finite() {
        // Every component is impossibly far; fall back to uniform.
        return (f64::NEG_INFINITY, DVector::from_element(k, 1.0 / k as f64));
    }
    let mut sum = 0.0;
    for j in 0..k {
        logs[j] = (logs[j] - max).exp();
        sum += logs[j];
    }
    let log_density = max + sum.ln();
    (log_density, logs / sum)
}

/// Expectation-maximization until the relative log-likelihood change drops
/// below `tol` (or `max_iter`).
pub fn em_fit(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<GmmModel> {
    let n = points.nrows();
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("points contain non-finite coordinates".into()));
    }
    let mut components = kmeans_init(points, k, seed)?;
    let floor = variance_floor(points);
    let dim = points.ncols();

    let mut fit_log = Vec::new();
    let mut responsibilities = DMatrix::zeros(n, k);
    for iteration in 0..max_iter {
        // E-step.
        let mut log_likelihood = 0.0;
        let mut point_log_density = vec![0.0f64; n];
        for i in 0..n {
            let p = point_row(points, i);
            let (log_density, gamma) = log_mixture(&components, &p);
            point_log_density[i] = log_density;
            log_likelihood += log_density;
            responsibilities.row_mut(i).copy_from(&gamma.transpose());
        }
        if !log_likelihood.is_finite() {
            return Err(Error::Numerical(format!(
                "log-likelihood became non-finite at EM iteration {iteration}"
            )));
        }
        fit_log.push(log_likelihood);
        let converged = fit_log.len() >= 2 && {
            let prev = fit_log[fit_log.len() - 2];
            (log_likelihood - prev).abs() <= tol * (1.0 + prev.abs())
        };

        // M-step (closed form).
        for j in 0..k {
            let total: f64 = responsibilities.column(j).sum();
            if total / (n as f64) < 1.0 / (RESEED_FACTOR * n as f64) {
                // Collapsed component: re-seed at the point the mixture
                // explains worst (overfitting guard for outlier tables).
                let worst = (0..n)
                    .min_by(|&a, &b| {
                        point_log_density[a]
                            .partial_cmp(&point_log_density[b])
                            .unwrap()
                    })
                    .unwrap();
                components[j].mean = point_row(points, worst);
                components[j].covariance = DMatrix::from_diagonal_element(dim, dim, floor);
                components[j].weight = 1.0 / n as f64;
                continue;
            }
            let mut mean = DVector::zeros(dim);
            for i in 0..n {
                mean += responsibilities[(i, j)] * point_row(points, i);
            }
            mean /= total;
            let mut cov = DMatrix::zeros(dim, dim);
            for i in 0..n {
                let d = point_row(points, i) - &mean;
                cov += responsibilities[(i, j)] * &d * d.transpose();
            }
            cov /= total;
            regularize_covariance(&mut cov, floor)?;
            components[j] = GmmComponent {
                weight: total / n as f64,
                mean,
                covariance: cov,
            };
        }
        // Mixing weights must stay a distribution after any re-seeding.
        let weight_sum: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= weight_sum;
        }

        if converged {
            break;
        }
    }

    Ok(GmmModel {
        components,
        fit_log,
    })
}

impl GmmModel {
    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    /// Per-iteration log-likelihood over the training points.
    pub fn fit_log(&self) -> &[f64] {
        &self.fit_log
    }

    /// Posterior class probabilities for one point; sums to 1.
    pub fn responsibilities(&self, point: &DVector<f64>) -> DVector<f64> {
        log_mixture(&self.components, point).1
    }

    /// Log of the mixture density at a point.
    pub fn log_density(&self, point: &DVector<f64>) -> f64 {
        log_mixture(&self.components, point).0
    }

    /// Hard argmax assignment of every row; ties break to the lowest class.
    pub fn assign(&self, points: &DMatrix<f64>) -> ClassAssignment {
        let class_of: Vec<usize> = (0..points.nrows())
            .map(|i| {
                let gamma = self.responsibilities(&point_row(points, i));
                let mut best = 0usize;
                for j in 1..gamma.len() {
                    if gamma[j] > gamma[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        ClassAssignment::from_classes(class_of, self.component_count())
    }

    pub(crate) fn from_components(components: Vec<GmmComponent>, fit_log: Vec<f64>) -> Self {
        GmmModel {
            components,
            fit_log,
        }
    }
}
