//! Derivative-free minimization (Nelder–Mead with restarts).

/// Options for a single Nelder–Mead run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    /// Total iteration budget, shared across restarts.
    pub max_iters: usize,
    /// Converged once the simplex spread in function value is below this and a
    /// fresh restart no longer improves the best value by more than it.
    pub tol: f64,
    /// Edge length of the initial simplex.
    pub step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_iters: 2000, tol: 1e-10, step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iters: usize,
    pub evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

impl NelderMead {
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, x0: &[f64]) -> Minimum {
        let n = x0.len();
        assert!(n > 0, "need at least one parameter");
        let mut evals = 0usize;
        let mut eval = |x: &[f64]| {
            evals += 1;
            f(x)
        };

        let mut best_x = x0.to_vec();
        let mut best_f = eval(&best_x);
        let mut iters = 0usize;
        let mut step = self.step;
        let mut converged = false;
        let mut restarts = 0usize;

        while iters < self.max_iters {
            let (x, fx, spread_ok) = self.run(&mut eval, &best_x, best_f, step, &mut iters);
            let improvement = best_f - fx;
            if fx < best_f {
                best_x = x;
                best_f = fx;
            }
            if !spread_ok {
                break;
            }
            if restarts > 0 && improvement <= self.tol {
                converged = true;
                break;
            }
            restarts += 1;
            step = (step * 0.1).max(1e-4);
        }

        Minimum { x: best_x, fx: best_f, iters, evals, converged }
    }

    /// One simplex descent from `start`. Returns the best vertex and whether
    /// the spread criterion was met inside the budget.
    fn run(
        &self,
        eval: &mut impl FnMut(&[f64]) -> f64,
        start: &[f64],
        f_start: f64,
        step: f64,
        iters: &mut usize,
    ) -> (Vec<f64>, f64, bool) {
        let n = start.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.to_vec(), f_start));
        for i in 0..n {
            let mut x = start.to_vec();
            x[i] += step;
            let fx = eval(&x);
            simplex.push((x, fx));
        }

        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            if spread <= self.tol {
                let (x, fx) = simplex.swap_remove(0);
                return (x, fx, true);
            }
            if *iters >= self.max_iters {
                let (x, fx) = simplex.swap_remove(0);
                return (x, fx, false);
            }
            *iters += 1;

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let worst = simplex[n].0.clone();
            let f_worst = simplex[n].1;
            let f_best = simplex[0].1;
            let f_second = simplex[n - 1].1;

            let along = |coef: f64, out: &mut Vec<f64>| {
                for ((o, c), w) in out.iter_mut().zip(&centroid).zip(&worst) {
                    *o = c + coef * (c - w);
                }
            };

            along(REFLECT, &mut trial);
            let f_reflect = eval(&trial);
            if f_reflect < f_best {
                let reflected = trial.clone();
                along(EXPAND, &mut trial);
                let f_expand = eval(&trial);
                simplex[n] = if f_expand < f_reflect {
                    (trial.clone(), f_expand)
                } else {
                    (reflected, f_reflect)
                };
                continue;
            }
            if f_reflect < f_second {
                simplex[n] = (trial.clone(), f_reflect);
                continue;
            }
            // contraction: outside if the reflection beat the worst, else inside
            let coef = if f_reflect < f_worst { CONTRACT } else { -CONTRACT };
            along(coef, &mut trial);
            let f_contract = eval(&trial);
            if f_contract < f_worst.min(f_reflect) {
                simplex[n] = (trial.clone(), f_contract);
                continue;
            }
            let best = simplex[0].0.clone();
            for (x, fx) in simplex.iter_mut().skip(1) {
                for (xi, bi) in x.iter_mut().zip(&best) {
                    *xi = bi + SHRINK * (*xi - bi);
                }
                *fx = eval(x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let nm = NelderMead::default();
        let m = nm.minimize(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 0.5, &[0.0, 0.0]);
        assert!(m.converged);
        assert!((m.fx - 0.5).abs() < 1e-10);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] + 2.0).abs() < 1e-4);
    }

    #[test]
    fn rosenbrock() {
        let nm = NelderMead { max_iters: 20_000, ..Default::default() };
        let m = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!(m.converged);
        assert!(m.fx < 1e-9);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let nm = NelderMead { max_iters: 3, ..Default::default() };
        let m = nm.minimize(|x| x.iter().map(|v| v * v).sum(), &[3.0, -2.0, 1.0]);
        assert!(!m.converged);
        assert!(m.iters <= 3);
    }

    #[test]
    fn trigonometric_maximum() {
        let nm = NelderMead::default();
        let m = nm.minimize(|x| -(x[0].cos() + (x[0] - x[1]).sin()), &[0.3, 0.1]);
        assert!(m.converged);
        assert!((m.fx + 2.0).abs() < 1e-9);
    }
}
