//! Adaptive Gauss–Legendre quadrature on bounded intervals.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::Real;

/// Points per panel.
pub const PANEL_POINTS: usize = 32;
/// Default cap on accepted panels.
pub const DEFAULT_PANEL_CAP: usize = 4096;

/// Nodes and weights of the 32-point rule on [−1, 1].
fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = PANEL_POINTS;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Three-term recurrence for P_n(x) and its derivative.
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

fn panel<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> T {
    let (nodes, weights) = gauss_legendre();
    let half = (b - a) / T::of(2.0);
    let mid = (a + b) / T::of(2.0);
    let mut acc = T::zero();
    for (x, w) in nodes.iter().zip(weights) {
        acc = acc + T::of(*w) * f(mid + half * T::of(*x));
    }
    acc * half
}

/// Integral value with its estimated absolute error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub panels: usize,
}

/// ∫_a^b f with absolute tolerance `tol`, bisecting panels whose two-half refinement
/// disagrees with the whole-panel rule by more than their share of the tolerance.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T, panel_cap: usize) -> Result<QuadResult<T>> {
    let width = b - a;
    let mut stack = vec![(a, b, panel(&f, a, b))];
    let mut value = T::zero();
    let mut error = T::zero();
    let mut panels = 0usize;
    while let Some((lo, hi, whole)) = stack.pop() {
        let mid = (lo + hi) / T::of(2.0);
        let left = panel(&f, lo, mid);
        let right = panel(&f, mid, hi);
        let refined = left + right;
        let err = (refined - whole).abs();
        let share = tol * (hi - lo) / width;
        let at_resolution = (hi - lo) <= width * T::epsilon() * T::of(64.0);
        if err <= share || at_resolution {
            value = value + refined;
            error = error + err;
            panels += 1;
            continue;
        }
        if panels + stack.len() + 2 > panel_cap {
            return Err(Error::Quadrature {
                tolerance: tol.to_f64().unwrap_or(f64::NAN),
                estimate: (error + err).to_f64().unwrap_or(f64::NAN),
                cap: panel_cap,
            });
        }
        stack.push((mid, hi, right));
        stack.push((lo, mid, left));
    }
    Ok(QuadResult { value, error, panels })
}
