//! Nelder–Mead simplex minimization with deterministic restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DEFAULT_TRANSITION_Q;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
/// Multiplicative spread of restart points around the initial guess.
const RESTART_JITTER: f64 = 0.2;
/// Re-seeding the simplex at a converged point guards against the collapse
/// of a degenerate simplex; stop after this many rounds without progress.
const MAX_RESEEDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Simplex size tolerance, relative to `max(1, |x|)` per coordinate.
    pub x_tol: f64,
    /// Objective spread tolerance, relative to `max(1, |f_best|)`.
    pub f_tol: f64,
    /// Extra starts from jittered initial points.
    pub restarts: usize,
    /// Seed of the restart jitter sequence.
    #[serde(default)]
    pub seed: u64,
    /// Completion fractions for transition heights.
    #[serde(default = "default_q")]
    pub q: [f64; 3],
}

fn default_q() -> [f64; 3] {
    DEFAULT_TRANSITION_Q
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 2000,
            x_tol: 1e-8,
            f_tol: 1e-10,
            restarts: 3,
            seed: 0,
            q: DEFAULT_TRANSITION_Q,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be positive"));
        }
        if !(self.x_tol > 0.0) {
            return Err(Error::config("x_tol", format!("must be positive, got {}", self.x_tol)));
        }
        if !(self.f_tol > 0.0) {
            return Err(Error::config("f_tol", format!("must be positive, got {}", self.f_tol)));
        }
        crate::model::validate_fractions(&self.q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Simplex {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Simplex {
    fn around(x0: &[f64], f0: f64, objective: &mut impl FnMut(&[f64]) -> f64, evals: &mut usize) -> Self {
        let mut points = vec![x0.to_vec()];
        let mut values = vec![f0];
        for j in 0..x0.len() {
            let mut p = x0.to_vec();
            p[j] += if x0[j] != 0.0 { 0.05 * x0[j] } else { 0.00025 };
            values.push(eval(objective, &p, evals));
            points.push(p);
        }
        Simplex { points, values }
    }

    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        // stable, so ties keep the earlier vertex first
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.points = order.iter().map(|&i| self.points[i].clone()).collect();
        self.values = order.iter().map(|&i| self.values[i]).collect();
    }

    fn converged(&self, x_tol: f64, f_tol: f64) -> bool {
        let best = &self.points[0];
        let f_best = self.values[0];
        let f_spread = self.values[self.values.len() - 1] - f_best;
        if f_spread == 0.0 {
            return true;
        }
        let x_spread = self.points[1..]
            .iter()
            .flat_map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)))
            .fold(0.0, f64::max);
        x_spread <= x_tol && f_spread <= f_tol * f_best.abs().max(1.0)
    }
}

fn eval(objective: &mut impl FnMut(&[f64]) -> f64, x: &[f64], evals: &mut usize) -> f64 {
    *evals += 1;
    let f = objective(x);
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// `a + t·(b − a)`
fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect()
}

fn run_simplex(
    objective: &mut impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    f0: f64,
    opts: &FitOptions,
    evals: &mut usize,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x0.len();
    let mut s = Simplex::around(x0, f0, objective, evals);
    s.sort();
    let mut iters = 0;
    while iters < opts.max_iters {
        if s.converged(opts.x_tol, opts.f_tol) {
            return (s.points[0].clone(), s.values[0], iters, true);
        }
        iters += 1;

        let mut centroid = vec![0.0; n];
        for p in &s.points[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let worst = s.points[n].clone();
        let f_worst = s.values[n];
        let f_second_worst = s.values[n - 1];
        let f_best = s.values[0];

        let xr = lerp(&centroid, &worst, -REFLECT);
        let fr = eval(objective, &xr, evals);

        if fr < f_best {
            let xe = lerp(&centroid, &xr, EXPAND);
            let fe = eval(objective, &xe, evals);
            if fe < fr {
                s.points[n] = xe;
                s.values[n] = fe;
            } else {
                s.points[n] = xr;
                s.values[n] = fr;
            }
        } else if fr < f_second_worst {
            s.points[n] = xr;
            s.values[n] = fr;
        } else {
            let (xc, fc, accept) = if fr < f_worst {
                let xc = lerp(&centroid, &xr, CONTRACT);
                let fc = eval(objective, &xc, evals);
                let ok = fc <= fr;
                (xc, fc, ok)
            } else {
                let xc = lerp(&centroid, &worst, CONTRACT);
                let fc = eval(objective, &xc, evals);
                let ok = fc < f_worst;
                (xc, fc, ok)
            };
            if accept {
                s.points[n] = xc;
                s.values[n] = fc;
            } else {
                let best = s.points[0].clone();
                for i in 1..=n {
                    s.points[i] = lerp(&best, &s.points[i], SHRINK);
                    s.values[i] = eval(objective, &s.points[i], evals);
                }
            }
        }
        s.sort();
    }
    let converged = s.converged(opts.x_tol, opts.f_tol);
    (s.points[0].clone(), s.values[0], iters, converged)
}

/// Minimizes `objective` from `x0` and from `opts.restarts` jittered copies of
/// it, returning the best point found. The returned value is never worse than
/// `objective(x0)`.
pub fn nelder_mead<F>(mut objective: F, x0: &[f64], opts: &FitOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    opts.validate()?;
    if x0.is_empty() {
        return Err(Error::Input("empty parameter vector".into()));
    }
    let mut evaluations = 0;
    let f0 = eval(&mut objective, x0, &mut evaluations);
    if !f0.is_finite() {
        return Err(Error::NonFiniteStart);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![x0.to_vec()];
    for _ in 0..opts.restarts {
        starts.push(
            x0.iter()
                .map(|&v| v * (1.0 + RESTART_JITTER * rng.random_range(-1.0..=1.0)))
                .collect(),
        );
    }

    let mut best = Minimum { x: x0.to_vec(), f: f0, iterations: 0, evaluations: 0, converged: false };
    let mut iterations = 0;
    for start in starts {
        let mut f_start = eval(&mut objective, &start, &mut evaluations);
        if !f_start.is_finite() {
            continue;
        }
        let mut x = start;
        let mut converged = false;
        for _ in 0..MAX_RESEEDS {
            let (xn, fnew, it, conv) = run_simplex(&mut objective, &x, f_start, opts, &mut evaluations);
            iterations += it;
            let improved = f_start - fnew > opts.f_tol * fnew.abs().max(1.0);
            x = xn;
            f_start = fnew;
            converged = conv;
            if !improved || !conv {
                break;
            }
        }
        if f_start < best.f || (f_start == best.f && !best.converged && converged) {
            best.x = x;
            best.f = f_start;
            best.converged = converged;
        }
    }
    best.iterations = iterations;
    best.evaluations = evaluations;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_quadratic() {
        let m = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], &FitOptions::default()).unwrap();
        assert!((m.x[0] - 3.0).abs() < 1e-6, "{:?}", m);
        assert!(m.converged);
    }

    #[test]
    fn rosenbrock() {
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], &FitOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn constant_objective_returns_start() {
        let opts = FitOptions::default();
        let m = nelder_mead(|_| 4.0, &[1.5, -2.0], &opts).unwrap();
        assert_eq!(m.x, vec![1.5, -2.0]);
        assert_eq!(m.f, 4.0);
        assert_eq!(m.iterations, 0);
        assert!(m.converged);
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let err = nelder_mead(|x| x[0].ln(), &[-1.0], &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteStart));
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0].sin() * 3.0 + x[1]).abs() + 0.1 * x[0].cos();
        let x0 = [0.3, 0.7];
        let m = nelder_mead(f, &x0, &FitOptions { max_iters: 5, ..Default::default() }).unwrap();
        assert!(m.f <= f(&x0));
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(4) + (x[1] + 2.0).powi(2) + x[0] * x[1];
        let a = nelder_mead(f, &[5.0, 5.0], &FitOptions::default()).unwrap();
        let b = nelder_mead(f, &[5.0, 5.0], &FitOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
