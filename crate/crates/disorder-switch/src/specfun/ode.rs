//! Thin wrapper over the Dormand–Prince 8(5,3) integrator for real
//! two-dimensional first-order systems.

use ode_solvers::{Dop853, OutputType, System, Vector3};

use super::SpecfunError;

pub(crate) type State = [f64; 2];

struct Rhs<F>(F);

// The independent variable is carried as a third state component with unit
// derivative: the stage abscissa of the twelfth Dop853 stage is tabulated as
// 0 instead of 1 in ode_solvers 0.6, which corrupts non-autonomous
// right-hand sides, while the stage states themselves are correct.
impl<F: Fn(f64, State) -> State> System<f64, Vector3<f64>> for Rhs<F> {
    fn system(&self, _x: f64, y: &Vector3<f64>, dy: &mut Vector3<f64>) {
        let d = (self.0)(y[2], [y[0], y[1]]);
        dy[0] = d[0];
        dy[1] = d[1];
        dy[2] = 1.0;
    }
}

pub(crate) const DEFAULT_RTOL: f64 = 1e-13;
const MAX_STEPS: u32 = 2_000_000;

/// Integrates from `x0` to `x1` and returns every accepted step, starting
/// with `(x0, y0)` and ending at `x1`.
pub(crate) fn trajectory<F>(
    f: F,
    x0: f64,
    y0: State,
    x1: f64,
    rtol: f64,
    atol: f64,
) -> Result<Vec<(f64, State)>, SpecfunError>
where
    F: Fn(f64, State) -> State,
{
    if x0 == x1 {
        return Ok(vec![(x0, y0)]);
    }
    let mut solver = Dop853::from_param(
        Rhs(f),
        x0,
        x1,
        x1 - x0,
        Vector3::new(y0[0], y0[1], x0),
        rtol,
        atol,
        0.9,
        0.0,
        0.333,
        6.0,
        (x1 - x0).abs(),
        1e-3 * (x1 - x0),
        MAX_STEPS,
        u32::MAX,
        OutputType::Sparse,
    );
    solver
        .integrate()
        .map_err(|e| SpecfunError::Integration(e.to_string()))?;
    let (xs, ys) = solver.results().get();
    let mut out = Vec::with_capacity(xs.len() + 1);
    out.push((x0, y0));
    for (x, y) in xs.iter().zip(ys.iter()) {
        if *x != x0 {
            out.push((*x, [y[0], y[1]]));
        }
    }
    match out.last() {
        Some((x, y)) if *x == x1 && y[0].is_finite() && y[1].is_finite() => Ok(out),
        _ => Err(SpecfunError::Integration(format!(
            "did not reach x = {x1} with a finite state"
        ))),
    }
}

/// Integrates from `x0` to `x1` and returns the final state.
pub(crate) fn integrate<F>(
    f: F,
    x0: f64,
    y0: State,
    x1: f64,
    rtol: f64,
    atol: f64,
) -> Result<State, SpecfunError>
where
    F: Fn(f64, State) -> State,
{
    let tr = trajectory(f, x0, y0, x1, rtol, atol)?;
    Ok(tr.last().map(|p| p.1).unwrap_or(y0))
}

/// Accepted steps of one long integration, used as restart points for
/// short integrations to arbitrary abscissae in between.
#[derive(Debug, Clone)]
pub(crate) struct Checkpoints {
    xs: Vec<f64>,
    ys: Vec<State>,
    increasing: bool,
}

impl Checkpoints {
    pub(crate) fn new(points: Vec<(f64, State)>) -> Self {
        let increasing = points.len() < 2 || points[1].0 > points[0].0;
        let (xs, ys) = points.into_iter().unzip();
        Checkpoints { xs, ys, increasing }
    }

    /// The stored point closest to `x` among those not past it in the
    /// direction of integration.
    pub(crate) fn restart_for(&self, x: f64) -> (f64, State) {
        let idx = if self.increasing {
            self.xs.partition_point(|&p| p <= x)
        } else {
            self.xs.partition_point(|&p| p >= x)
        };
        let i = idx.saturating_sub(1);
        (self.xs[i], self.ys[i])
    }
}
