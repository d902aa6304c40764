use crate::error::{Error, Result};

/// States that can be advanced by an explicit Euler step.
pub trait StateSpace: Clone {
    /// `self += h * d`
    fn add_scaled(&mut self, h: f64, d: &Self);

    fn all_finite(&self) -> bool;
}

impl StateSpace for f64 {
    fn add_scaled(&mut self, h: f64, d: &Self) {
        *self += h * d;
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl StateSpace for Vec<f64> {
    fn add_scaled(&mut self, h: f64, d: &Self) {
        for (x, dx) in self.iter_mut().zip(d) {
            *x += h * dx;
        }
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl StateSpace for Vec<Vec<f64>> {
    fn add_scaled(&mut self, h: f64, d: &Self) {
        for (x, dx) in self.iter_mut().zip(d) {
            x.add_scaled(h, dx);
        }
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.all_finite())
    }
}

/// Advance `state` in place by `x += dt * f(t, x)`.
pub fn euler_step_in_place<S, F>(f: F, state: &mut S, t: f64, dt: f64) -> Result<()>
where
    S: StateSpace,
    F: FnOnce(f64, &S) -> Result<S>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let d = f(t, state)?;
    if !d.all_finite() {
        return Err(Error::NonFinite { t });
    }
    state.add_scaled(dt, &d);
    Ok(())
}

/// Forward-Euler update returning the state at `t + dt`.
pub fn euler_step<S, F>(f: F, state: &S, t: f64, dt: f64) -> Result<S>
where
    S: StateSpace,
    F: FnOnce(f64, &S) -> Result<S>,
{
    let mut next = state.clone();
    euler_step_in_place(f, &mut next, t, dt)?;
    Ok(next)
}
