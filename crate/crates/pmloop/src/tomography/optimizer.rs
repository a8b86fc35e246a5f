//! Deterministic quasi-Newton minimizer for the small likelihood surfaces.
//!
//! BFGS on a dense inverse-Hessian approximation, central finite-difference
//! gradients, and Armijo backtracking. Accepted steps strictly decrease the
//! objective, so the value trace is non-increasing by construction. No
//! randomness anywhere; identical inputs give identical iterates.

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    /// Relative decrease of the objective below which we declare
    /// convergence (two consecutive times).
    pub tol_rel: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after every accepted step (starts with the initial
    /// value); non-increasing.
    pub trace: Vec<f64>,
}

const FD_STEP: f64 = 1e-6;
const ARMIJO_C1: f64 = 1e-4;

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], scratch: &mut [f64]) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    scratch.copy_from_slice(x);
    for j in 0..n {
        let h = FD_STEP * x[j].abs().max(1.0);
        scratch[j] = x[j] + h;
        let fp = f(scratch);
        scratch[j] = x[j] - h;
        let fm = f(scratch);
        scratch[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    g
}

pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &MinimizeOptions) -> MinimizeOutcome {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let initial_value = fx;
    let mut trace = vec![fx];
    let mut scratch = vec![0.0; n];

    // Dense inverse-Hessian approximation, row-major.
    let mut h_inv = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            h[j * n + j] = 1.0;
        }
    };
    reset(&mut h_inv);

    let mut g = gradient(&f, &x, &mut scratch);
    let mut stall_count = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;

        // d = -H g
        let mut d = vec![0.0; n];
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..n {
                acc += h_inv[r * n + c] * g[c];
            }
            d[r] = -acc;
        }
        let mut slope: f64 = d.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            for j in 0..n {
                d[j] = -g[j];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
            reset(&mut h_inv);
        }

        // Armijo backtracking.
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for j in 0..n {
                scratch[j] = x[j] + alpha * d[j];
            }
            let ft = f(&scratch);
            if ft <= fx + ARMIJO_C1 * alpha * slope && ft < fx {
                accepted = Some((scratch.clone(), ft));
                break;
            }
            alpha *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            // No admissible decrease in this direction; we are at a local
            // minimum to FD resolution.
            converged = true;
            break;
        };

        let g_new = gradient(&f, &x_new, &mut scratch);

        // BFGS update of the inverse Hessian.
        let mut s = vec![0.0; n];
        let mut y = vec![0.0; n];
        for j in 0..n {
            s[j] = x_new[j] - x[j];
            y[j] = g_new[j] - g[j];
        }
        let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            // H' = (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            let mut hy = vec![0.0; n];
            for r in 0..n {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += h_inv[r * n + c] * y[c];
                }
                hy[r] = acc;
            }
            let yhy: f64 = y.iter().zip(hy.iter()).map(|(a, b)| a * b).sum();
            let factor = (sy + yhy) / (sy * sy);
            for r in 0..n {
                for c in 0..n {
                    h_inv[r * n + c] += factor * s[r] * s[c] - (hy[r] * s[c] + s[r] * hy[c]) / sy;
                }
            }
        } else {
            reset(&mut h_inv);
        }

        let rel_drop = (fx - f_new) / fx.abs().max(1e-300);
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);

        if rel_drop < opts.tol_rel {
            stall_count += 1;
            if stall_count >= 2 {
                converged = true;
                break;
            }
        } else {
            stall_count = 0;
        }
    }

    MinimizeOutcome {
        x,
        value: fx,
        initial_value,
        iterations,
        converged,
        trace,
    }
}
