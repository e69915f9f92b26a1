//! Box-constrained limited-memory BFGS with a projected backtracking line search.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    pub memory: usize,
    /// Stop when the projected gradient's largest component falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step changes the objective by less than this (relative).
    pub value_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            memory: 8,
            gradient_tolerance: 1e-6,
            value_tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn project(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(lo.iter().zip(hi.iter())).map(|(v, (l, h))| v.clamp(*l, *h)))
}

/// Gradient with components that push against an active bound removed.
fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        }),
    )
}

/// Minimizes `f` over the box `[lo, hi]`. `f` returns `None` where the
/// objective is undefined; the line search treats that as an infinite value.
pub fn minimize_bounded<F>(
    mut f: F,
    x0: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &LbfgsOptions,
) -> Option<LbfgsResult>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let mut x = project(x0, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let pg = projected_gradient(&x, &g, lo, hi);
        if pg.amax() < opts.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        // Two-loop recursion on the free variables.
        let free: Vec<bool> = (0..x.len()).map(|i| pg[i] != 0.0 || g[i] == 0.0).collect();
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * s.dot(&q);
            q -= y * a;
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            q *= s.dot(y) / y.dot(y);
        } else {
            q /= pg.norm().max(1.0);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q += s * (a - b);
        }
        let mut d = -q;
        for i in 0..d.len() {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        if d.dot(&pg) >= 0.0 {
            history.clear();
            d = -pg.clone() / pg.norm().max(1.0);
        }

        // Backtracking along the projected path.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = project(&(&x + &d * t), lo, hi);
            let step = &cand - &x;
            if step.amax() == 0.0 {
                break;
            }
            evaluations += 1;
            if let Some((fc, gc)) = f(&cand) {
                if fc.is_finite() && fc <= fx + 1e-4 * g.dot(&step) {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // No decrease possible along the search direction.
            converged = history.is_empty();
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            history.push_back((s, y, 1.0 / sy));
            if history.len() > opts.memory {
                history.pop_front();
            }
        }
        let change = (fx - fn_).abs();
        x = xn;
        fx = fn_;
        g = gn;
        if change <= opts.value_tolerance * fx.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    Some(LbfgsResult {
        x,
        value: fx,
        gradient: g,
        iterations,
        evaluations,
        converged,
    })
}
