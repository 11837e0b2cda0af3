use crate::ode::{DiffRhs, Rk4Tape, StepGrid};
use crate::scalar::Real;

fn grid<T: Real>(start_day: usize, len: usize, dt: T) -> StepGrid<T> {
    let t0 = T::from_usize_lossy(start_day);
    let t1 = T::from_usize_lossy(start_day + len - 1);
    StepGrid::new((t0, t1), dt, T::one()).expect("observation grid is valid")
}

fn check_observed<T>(observed: &[[T; 3]]) {
    assert!(observed.len() >= 2, "trajectory loss needs at least two days");
}

/// Mean squared error between the model integrated from `observed[0]`
/// (at `start_day`) and every observed day, over all compartments.
/// Returns `+inf` when the integration blows up.
pub fn trajectory_loss<T: Real, R: DiffRhs<T>>(
    rhs: &mut R,
    params: &[T],
    start_day: usize,
    observed: &[[T; 3]],
    dt: T,
) -> T {
    check_observed(observed);
    let g = grid(start_day, observed.len(), dt);
    match Rk4Tape::record(rhs, params, &observed[0], g) {
        Some(tape) => mse(&tape, observed),
        None => T::infinity(),
    }
}

fn mse<T: Real>(tape: &Rk4Tape<T>, observed: &[[T; 3]]) -> T {
    let mut acc = T::zero();
    for (k, obs) in observed.iter().enumerate() {
        for (p, o) in tape.report(k).iter().zip(obs) {
            acc += (*p - *o) * (*p - *o);
        }
    }
    let loss = acc / T::from_usize_lossy(3 * observed.len());
    if loss.is_finite() {
        loss
    } else {
        T::infinity()
    }
}

/// [`trajectory_loss`] together with its exact gradient through the unrolled
/// integrator. The gradient is all zeros when the loss is infinite.
pub fn trajectory_loss_grad<T: Real, R: DiffRhs<T>>(
    rhs: &mut R,
    params: &[T],
    start_day: usize,
    observed: &[[T; 3]],
    dt: T,
) -> (T, Vec<T>) {
    check_observed(observed);
    let g = grid(start_day, observed.len(), dt);
    let Some(tape) = Rk4Tape::record(rhs, params, &observed[0], g) else {
        return (T::infinity(), vec![T::zero(); params.len()]);
    };
    let loss = mse(&tape, observed);
    if !loss.is_finite() {
        return (T::infinity(), vec![T::zero(); params.len()]);
    }
    let scale = T::lit(2.0) / T::from_usize_lossy(3 * observed.len());
    let mut cot = Vec::with_capacity(3 * observed.len());
    for (k, obs) in observed.iter().enumerate() {
        for (p, o) in tape.report(k).iter().zip(obs) {
            cot.push(scale * (*p - *o));
        }
    }
    let (_, grad) = tape.backprop(rhs, params, &cot);
    (loss, grad)
}
