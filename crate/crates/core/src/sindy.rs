//! Sparse regression of the learned coupling term on neighbor states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{model_signal, predict_with_stats, ModelKind, TargetView, TrainedModel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Library {
    /// `[1, x_1, ..., x_d]`
    LinearBias,
    /// Linear terms plus all squares and pairwise products.
    Poly2,
}

impl Library {
    pub fn n_columns(self, channels: usize) -> usize {
        match self {
            Library::LinearBias => 1 + channels,
            Library::Poly2 => 1 + channels + channels * (channels + 1) / 2,
        }
    }

    /// Writes the library row for one sample into `out`.
    pub fn row<T: Real>(self, x: &[T], out: &mut [T]) {
        out[0] = T::one();
        out[1..1 + x.len()].copy_from_slice(x);
        if self == Library::Poly2 {
            let mut k = 1 + x.len();
            for a in 0..x.len() {
                for b in a..x.len() {
                    out[k] = x[a] * x[b];
                    k += 1;
                }
            }
        }
    }

    pub fn term_names(self, channels: &[String]) -> Vec<String> {
        let mut names = vec!["1".to_string()];
        names.extend(channels.iter().cloned());
        if self == Library::Poly2 {
            for a in 0..channels.len() {
                for b in a..channels.len() {
                    names.push(if a == b {
                        format!("{}^2", channels[a])
                    } else {
                        format!("{}*{}", channels[a], channels[b])
                    });
                }
            }
        }
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Stlsq,
    Lasso,
}

/// Row-major design matrix `Theta(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub library: Library,
    pub data: Vec<T>,
}

impl<T: Real> DesignMatrix<T> {
    pub fn row(&self, k: usize) -> &[T] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.rows).map(move |k| self.data[k * self.cols + j])
    }
}

/// Evaluates `library` on every row of `x` (`rows x channels`, row-major).
pub fn build_library<T: Real>(x: &[T], channels: usize, library: Library) -> Result<DesignMatrix<T>> {
    if channels == 0 || x.is_empty() || x.len() % channels != 0 {
        return Err(Error::invalid(format!(
            "sample matrix of {} values does not split into rows of {channels}",
            x.len()
        )));
    }
    let rows = x.len() / channels;
    let cols = library.n_columns(channels);
    let mut data = vec![T::zero(); rows * cols];
    for (sample, out) in x.chunks_exact(channels).zip(data.chunks_exact_mut(cols)) {
        library.row(sample, out);
    }
    Ok(DesignMatrix {
        rows,
        cols,
        channels,
        library,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SindyRegression<T> {
    pub library: Library,
    pub method: Method,
    pub channels: usize,
    pub threshold: T,
    /// One coefficient per library column; column 0 is the bias.
    pub coefficients: Vec<T>,
    pub terms: Vec<String>,
    /// RMS residual on the training pairs.
    pub fit_residual: T,
    pub flags: Vec<String>,
}

impl<T: Real> SindyRegression<T> {
    pub fn bias(&self) -> T {
        self.coefficients[0]
    }

    /// Linear weights, one per input channel.
    pub fn weights(&self) -> &[T] {
        &self.coefficients[1..1 + self.channels]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&j| self.coefficients[j] != T::zero())
            .collect()
    }

    /// Replaces the generic `x1..xd` channel labels.
    pub fn label_channels(&mut self, names: &[String]) -> Result<()> {
        if names.len() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: self.channels,
                actual: names.len(),
            });
        }
        self.terms = self.library.term_names(names);
        Ok(())
    }

    /// `Theta(x) . xi`, using `scratch` for the library row.
    pub fn evaluate_with(&self, x: &[T], scratch: &mut Vec<T>) -> T {
        scratch.resize(self.coefficients.len(), T::zero());
        self.library.row(x, scratch);
        scratch
            .iter()
            .zip(&self.coefficients)
            .fold(T::zero(), |acc, (a, c)| acc + *a * *c)
    }

    pub fn evaluate(&self, x: &[T]) -> T {
        self.evaluate_with(x, &mut Vec::new())
    }
}

fn generic_names(channels: usize) -> Vec<String> {
    (1..=channels).map(|i| format!("x{i}")).collect()
}

fn rms_residual<T: Real>(theta: &DesignMatrix<T>, y: &[T], xi: &[T]) -> T {
    let mut acc = T::zero();
    for (k, &yk) in y.iter().enumerate() {
        let pred = theta
            .row(k)
            .iter()
            .zip(xi)
            .fold(T::zero(), |a, (t, c)| a + *t * *c);
        acc += (yk - pred) * (yk - pred);
    }
    (acc / T::from_usize_lossy(y.len())).sqrt()
}

/// Householder QR least squares on a dense `m x n` column-major matrix.
/// Returns `None` when `R` has a (numerically) zero pivot.
fn qr_solve<T: Real>(mut a: Vec<T>, m: usize, n: usize, mut b: Vec<T>) -> Option<Vec<T>> {
    let mut diag = vec![T::zero(); n];
    for k in 0..n {
        let col = &mut a[k * m..(k + 1) * m];
        let norm = col[k..].iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
        if norm == T::zero() {
            return None;
        }
        let alpha = if col[k] > T::zero() { -norm } else { norm };
        col[k] -= alpha;
        let vnorm2 = col[k..].iter().fold(T::zero(), |s, v| s + *v * *v);
        diag[k] = alpha;
        if vnorm2 == T::zero() {
            continue;
        }
        let (head, tail) = a.split_at_mut((k + 1) * m);
        let v = &head[k * m..(k + 1) * m];
        for j in 0..n - k - 1 {
            let c = &mut tail[j * m..(j + 1) * m];
            let dot = v[k..].iter().zip(&c[k..]).fold(T::zero(), |s, (x, y)| s + *x * *y);
            let f = T::lit(2.0) * dot / vnorm2;
            for (ci, vi) in c[k..].iter_mut().zip(&v[k..]) {
                *ci -= f * *vi;
            }
        }
        let dot = v[k..].iter().zip(&b[k..]).fold(T::zero(), |s, (x, y)| s + *x * *y);
        let f = T::lit(2.0) * dot / vnorm2;
        for (bi, vi) in b[k..].iter_mut().zip(&v[k..]) {
            *bi -= f * *vi;
        }
    }
    let scale = diag.iter().fold(T::zero(), |s, d| s.max(d.abs()));
    let tol = T::lit(1e-10) * scale;
    if diag.iter().any(|d| d.abs() <= tol) {
        return None;
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[j * m + k] * x[j];
        }
        x[k] = s / diag[k];
    }
    Some(x)
}

/// Least squares restricted to `active` columns. Falls back to a ridge
/// solution (relative diagonal `1e-10`) when the columns are dependent.
fn active_least_squares<T: Real>(
    theta: &DesignMatrix<T>,
    y: &[T],
    active: &[usize],
    ridged: &mut bool,
) -> Vec<T> {
    let m = theta.rows;
    let n = active.len();
    let mut xi = vec![T::zero(); theta.cols];
    if n == 0 {
        return xi;
    }
    let mut a = Vec::with_capacity(m * n);
    for &j in active {
        a.extend(theta.column(j));
    }
    let solution = qr_solve(a.clone(), m, n, y.to_vec()).unwrap_or_else(|| {
        *ridged = true;
        let mean_sq = a.iter().fold(T::zero(), |s, v| s + *v * *v) / T::from_usize_lossy(n);
        let delta = (T::lit(1e-10) * mean_sq.max(T::min_positive_value())).sqrt();
        let rows = m + n;
        let mut aug = vec![T::zero(); rows * n];
        for j in 0..n {
            aug[j * rows..j * rows + m].copy_from_slice(&a[j * m..(j + 1) * m]);
            aug[j * rows + m + j] = delta;
        }
        let mut rhs = y.to_vec();
        rhs.resize(rows, T::zero());
        qr_solve(aug, rows, n, rhs).unwrap_or_else(|| vec![T::zero(); n])
    });
    for (&j, v) in active.iter().zip(solution) {
        xi[j] = v;
    }
    xi
}

fn stlsq<T: Real>(theta: &DesignMatrix<T>, y: &[T], lambda: T, ridged: &mut bool) -> Vec<T> {
    let mut active: Vec<usize> = (0..theta.cols).collect();
    let mut xi = active_least_squares(theta, y, &active, ridged);
    for _ in 0..theta.cols {
        let next: Vec<usize> = active.iter().copied().filter(|&j| xi[j].abs() >= lambda).collect();
        if next.len() == active.len() {
            break;
        }
        active = next;
        xi = active_least_squares(theta, y, &active, ridged);
    }
    for (j, v) in xi.iter_mut().enumerate() {
        if !active.contains(&j) || v.abs() < lambda {
            *v = T::zero();
        }
    }
    xi
}

fn soft_threshold<T: Real>(z: T, t: T) -> T {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        T::zero()
    }
}

/// Coordinate descent on `1/(2m) |y - Theta xi|^2 + lambda sum_{j>0} |xi_j|`;
/// the bias column is not penalized. The active set is then refitted
/// without penalty.
fn lasso<T: Real>(theta: &DesignMatrix<T>, y: &[T], lambda: T, ridged: &mut bool) -> Vec<T> {
    let (m, n) = (theta.rows, theta.cols);
    let cols: Vec<Vec<T>> = (0..n).map(|j| theta.column(j).collect()).collect();
    let norms: Vec<T> = cols
        .iter()
        .map(|c| c.iter().fold(T::zero(), |s, v| s + *v * *v))
        .collect();
    let mut xi = vec![T::zero(); n];
    let mut resid = y.to_vec();
    let penalty = lambda * T::from_usize_lossy(m);
    let tol = T::lit(1e-13) * y.iter().fold(T::one(), |s, v| s.max(v.abs()));
    for _ in 0..10_000 {
        let mut max_step = T::zero();
        for j in 0..n {
            if norms[j] == T::zero() {
                continue;
            }
            let rho = cols[j]
                .iter()
                .zip(&resid)
                .fold(T::zero(), |s, (c, r)| s + *c * *r)
                + norms[j] * xi[j];
            let new = if j == 0 {
                rho / norms[j]
            } else {
                soft_threshold(rho, penalty) / norms[j]
            };
            let step = new - xi[j];
            if step != T::zero() {
                for (r, c) in resid.iter_mut().zip(&cols[j]) {
                    *r -= step * *c;
                }
                xi[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        if max_step <= tol {
            break;
        }
    }
    let active: Vec<usize> = (0..n).filter(|&j| xi[j] != T::zero()).collect();
    let mut refit = active_least_squares(theta, y, &active, ridged);
    for v in refit.iter_mut() {
        if v.abs() < T::min_positive_value() {
            *v = T::zero();
        }
    }
    refit
}

/// Sparse regression of `y` on the columns of `theta`.
pub fn sparse_regression<T: Real>(
    theta: &DesignMatrix<T>,
    y: &[T],
    lambda: T,
    method: Method,
) -> Result<SindyRegression<T>> {
    if y.len() != theta.rows {
        return Err(Error::DimensionMismatch {
            expected: theta.rows,
            actual: y.len(),
        });
    }
    if !(lambda >= T::zero()) {
        return Err(Error::invalid(format!("sparsity threshold must be >= 0, got {lambda}")));
    }
    if theta.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("regression inputs contain non-finite values"));
    }
    let mut ridged = false;
    let coefficients = match method {
        Method::Stlsq => stlsq(theta, y, lambda, &mut ridged),
        Method::Lasso => lasso(theta, y, lambda, &mut ridged),
    };
    let mut flags = Vec::new();
    if ridged {
        flags.push("rank-deficient active set: ridge fallback used".to_string());
    }
    Ok(SindyRegression {
        library: theta.library,
        method,
        channels: theta.channels,
        threshold: lambda,
        fit_residual: rms_residual(theta, y, &coefficients),
        terms: theta.library.term_names(&generic_names(theta.channels)),
        coefficients,
        flags,
    })
}

/// Network inputs and outputs of a SIR+UDE model at each day of `span`.
///
/// Rows of the returned `x` (`days x channels`) are normalized neighbor
/// states; `y` is the raw network output, so the coupling term is
/// `output_scale * y`.
pub fn collect_dnn_io<T: Real>(
    model: &TrainedModel<T>,
    view: &TargetView<T>,
    span: (usize, usize),
) -> Result<(Vec<T>, Vec<T>)> {
    model.expect_kind(ModelKind::SirUde)?;
    view.check_span(span)?;
    let net = model.net.as_ref().expect("SIR+UDE model has a network");
    let signal = model_signal(model, view);
    let c = signal.channels;
    let mut x = vec![T::zero(); (span.1 - span.0 + 1) * c];
    let mut ws = net.shape.workspace();
    let mut y = Vec::with_capacity(span.1 - span.0 + 1);
    for (row, day) in x.chunks_exact_mut(c).zip(span.0..=span.1) {
        signal.sample(T::from_usize_lossy(day), row);
        y.push(net.shape.forward(net.params(), row, &mut ws)[0]);
    }
    Ok((x, y))
}

/// Result of swapping a SIR+UDE network for its regression.
#[derive(Debug, Clone)]
pub struct Substitution<T> {
    pub model: TrainedModel<T>,
    pub trajectory: Vec<[T; 3]>,
    /// Right-hand-side evaluations where the regression went negative.
    pub clamps: usize,
    pub evaluations: usize,
}

/// Builds the SIR+SINDy model (rates copied from `model`) and integrates it
/// over `span`.
pub fn substitute_and_simulate<T: Real>(
    model: &TrainedModel<T>,
    reg: &SindyRegression<T>,
    view: &TargetView<T>,
    span: (usize, usize),
) -> Result<Substitution<T>> {
    model.expect_kind(ModelKind::SirUde)?;
    if reg.channels != view.neighbor_channels() {
        return Err(Error::DimensionMismatch {
            expected: view.neighbor_channels(),
            actual: reg.channels,
        });
    }
    let mut sub = model.clone();
    sub.kind = ModelKind::SirSindy;
    sub.net = None;
    sub.sindy = Some(reg.clone());
    sub.training_log.clear();
    sub.stage_boundary = None;
    let (trajectory, stats) = predict_with_stats(&sub, view, span)?;
    if stats.clamps > 0 {
        sub.diagnostics.push(format!(
            "coupling clamped at zero in {} of {} evaluations",
            stats.clamps, stats.evaluations
        ));
    }
    Ok(Substitution {
        model: sub,
        trajectory,
        clamps: stats.clamps,
        evaluations: stats.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(rows: usize, channels: usize) -> Vec<f64> {
        // deterministic, well-spread points in [0, 1]
        (0..rows * channels)
            .map(|k| (k as f64 * 0.618_033_988_749_894_9 + 0.1 * (k % 7) as f64) % 1.0)
            .collect()
    }

    #[test]
    fn column_counts() {
        assert_eq!(Library::LinearBias.n_columns(27), 28);
        assert_eq!(Library::Poly2.n_columns(2), 6);
        let t = build_library(&[2.0, 3.0], 2, Library::Poly2).unwrap();
        assert_eq!(t.row(0), &[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        let x = samples(5, 3);
        let t = build_library(&x, 3, Library::LinearBias).unwrap();
        assert!(t.column(0).all(|v| v == 1.0));
        assert!(build_library(&x[..4], 3, Library::LinearBias).is_err());
    }

    #[test]
    fn planted_linear_is_recovered_exactly() {
        let x = samples(60, 4);
        let y: Vec<f64> = x.chunks(4).map(|r| 2.0 * r[0] + 3.0).collect();
        let theta = build_library(&x, 4, Library::LinearBias).unwrap();
        for method in [Method::Stlsq, Method::Lasso] {
            let reg = sparse_regression(&theta, &y, 0.1, method).unwrap();
            assert!((reg.weights()[0] - 2.0).abs() < 1e-8, "{method:?}");
            assert!((reg.bias() - 3.0).abs() < 1e-8, "{method:?}");
            assert_eq!(reg.support(), vec![0, 1], "{method:?}");
        }
    }

    #[test]
    fn zero_target_gives_zero_coefficients() {
        let x = samples(20, 3);
        let theta = build_library(&x, 3, Library::LinearBias).unwrap();
        let reg = sparse_regression(&theta, &[0.0; 20], 1e-3, Method::Stlsq).unwrap();
        assert!(reg.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn planted_product_needs_quadratic_library() {
        let x = samples(80, 2);
        let y: Vec<f64> = x.chunks(2).map(|r| r[0] * r[1]).collect();
        let lin = build_library(&x, 2, Library::LinearBias).unwrap();
        let reg = sparse_regression(&lin, &y, 1e-3, Method::Stlsq).unwrap();
        assert!(reg.fit_residual > 1e-3);
        let quad = build_library(&x, 2, Library::Poly2).unwrap();
        let reg = sparse_regression(&quad, &y, 1e-3, Method::Stlsq).unwrap();
        assert!(reg.fit_residual < 1e-8);
        assert_eq!(reg.support(), vec![4]);
    }

    #[test]
    fn stored_residual_matches_prediction() {
        let x = samples(30, 3);
        let y: Vec<f64> = x.chunks(3).map(|r| r[0] - 0.5 * r[2] + 0.3 * r[1] * r[1]).collect();
        let theta = build_library(&x, 3, Library::LinearBias).unwrap();
        let reg = sparse_regression(&theta, &y, 1e-3, Method::Stlsq).unwrap();
        let mut acc = 0.0;
        for (row, yk) in x.chunks(3).zip(&y) {
            acc += (reg.evaluate(row) - yk).powi(2);
        }
        assert!(((acc / 30.0).sqrt() - reg.fit_residual).abs() < 1e-12);
    }

    #[test]
    fn dependent_columns_take_ridge_path() {
        // third channel duplicates the first
        let base = samples(25, 2);
        let x: Vec<f64> = base.chunks(2).flat_map(|r| [r[0], r[1], r[0]]).collect();
        let y: Vec<f64> = base.chunks(2).map(|r| r[0] + 1.0).collect();
        let theta = build_library(&x, 3, Library::LinearBias).unwrap();
        let reg = sparse_regression(&theta, &y, 1e-3, Method::Stlsq).unwrap();
        assert!(!reg.flags.is_empty());
        assert!(reg.fit_residual < 1e-6);
    }

    #[test]
    fn thresholded_entries_are_exact_zeros() {
        let x = samples(40, 5);
        let y: Vec<f64> = x.chunks(5).map(|r| r[1] + 0.01 * r[3]).collect();
        let theta = build_library(&x, 5, Library::LinearBias).unwrap();
        let reg = sparse_regression(&theta, &y, 0.05, Method::Stlsq).unwrap();
        assert_eq!(reg.coefficients[4], 0.0);
        assert_eq!(reg.support(), vec![2]);
    }
}
