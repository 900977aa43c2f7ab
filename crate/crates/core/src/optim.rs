//! Small smooth-convex minimisers shared by the value, classifier and
//! discriminator fits.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iters: usize,
    /// Stop once the gradient's Euclidean norm falls below this.
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + t * b).collect()
}

/// Solve `(H + τI) p = -g`, raising τ until the Cholesky factorisation succeeds.
fn regularized_step(h: DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut tau = 1e-12 * scale;
    let rhs = DVector::from_iterator(n, g.iter().map(|x| -x));
    for _ in 0..40 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += tau;
        }
        if let Some(ch) = m.cholesky() {
            let p = ch.solve(&rhs);
            if p.iter().all(|v| v.is_finite()) {
                return Some(p.iter().copied().collect());
            }
        }
        tau = (tau * 10.0).max(1e-12);
    }
    None
}

/// Backtracking (Armijo) line search along `p`; `None` when no decrease is found.
fn line_search(
    f: &impl Fn(&[f64]) -> f64,
    x: &[f64],
    fx: f64,
    g: &[f64],
    p: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let slope = dot(g, p);
    if !(slope < 0.0) {
        return None;
    }
    let mut t = 1.0;
    for _ in 0..60 {
        let y = axpy(x, t, p);
        let fy = f(&y);
        if fy.is_finite() && fy <= fx + 1e-4 * t * slope {
            return Some((y, fy));
        }
        t *= 0.5;
    }
    None
}

/// Damped Newton: regularised Newton direction, Armijo backtracking, and a
/// steepest-descent fallback when the Newton direction fails to decrease `f`.
/// `fgh` returns value, gradient and Hessian; `f` returns the value only.
pub fn newton_minimize(
    x0: Vec<f64>,
    f: impl Fn(&[f64]) -> f64,
    fgh: impl Fn(&[f64]) -> (f64, Vec<f64>, DMatrix<f64>),
    opts: NewtonOptions,
) -> Outcome {
    let mut x = x0;
    let mut iterations = 0;
    loop {
        let (fx, g, h) = fgh(&x);
        let gn = norm(&g);
        if gn < opts.tol || iterations >= opts.max_iters {
            return Outcome {
                x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: gn < opts.tol,
            };
        }
        iterations += 1;
        let newton = regularized_step(h, &g).and_then(|p| line_search(&f, &x, fx, &g, &p));
        let next = newton.or_else(|| {
            let p: Vec<f64> = g.iter().map(|v| -v / gn).collect();
            line_search(&f, &x, fx, &g, &p)
        });
        match next {
            Some((y, _)) => x = y,
            // no representable decrease left: we are at numerical precision
            None => {
                return Outcome {
                    x,
                    value: fx,
                    grad_norm: gn,
                    iterations,
                    converged: gn < opts.tol.max(1e-10),
                };
            }
        }
    }
}

/// Fixed-step gradient descent returning the best iterate seen.
pub fn gradient_descent(
    x0: Vec<f64>,
    fg: impl Fn(&[f64]) -> (f64, Vec<f64>),
    step: f64,
    opts: NewtonOptions,
) -> Outcome {
    let mut x = x0;
    let mut best: Option<Outcome> = None;
    let mut iterations = 0;
    loop {
        let (fx, g) = fg(&x);
        let gn = norm(&g);
        if fx.is_finite() && best.as_ref().is_none_or(|b| fx < b.value) {
            best = Some(Outcome {
                x: x.clone(),
                value: fx,
                grad_norm: gn,
                iterations,
                converged: false,
            });
        }
        if gn < opts.tol {
            return Outcome {
                x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: true,
            };
        }
        if iterations >= opts.max_iters || !fx.is_finite() {
            let mut b = best.expect("initial iterate must be finite");
            b.iterations = iterations;
            return b;
        }
        x = axpy(&x, -step, &g);
        iterations += 1;
    }
}

/// Central finite-difference gradient, used by gradient checks.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - b_i| / max(1, max_i |b_i|)`: relative error robust to tiny gradients.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}
