//! Box-constrained Nelder–Mead minimization.

/// Result of a [`NelderMead::minimize`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Initial simplex edge length along each coordinate.
    pub step: Vec<f64>,
    /// Lower/upper bounds; trial points are clamped into the box.
    pub bounds: Vec<(f64, f64)>,
    /// Stop when the spread of simplex values drops below this.
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_iter: usize,
}

impl NelderMead {
    pub fn new(bounds: Vec<(f64, f64)>, step: Vec<f64>) -> Self {
        Self { step, bounds, f_tol: 1e-10, x_tol: 1e-8, max_iter: 2000 }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, start: &[f64], mut f: F) -> Minimum {
        let n = start.len();
        assert_eq!(self.bounds.len(), n, "one bound pair per coordinate");
        assert_eq!(self.step.len(), n, "one step per coordinate");
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut x0 = start.to_vec();
        self.clamp(&mut x0);
        simplex.push(x0.clone());
        for i in 0..n {
            let mut x = x0.clone();
            x[i] += self.step[i];
            self.clamp(&mut x);
            if x[i] == x0[i] {
                // pinned at the upper bound; step inward
                x[i] -= self.step[i];
                self.clamp(&mut x);
            }
            simplex.push(x);
        }
        let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            iterations += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[n] - values[0];
            let size = simplex[1..]
                .iter()
                .flat_map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread.abs() < self.f_tol || size < self.x_tol {
                converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
            let towards = |coef: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[n]).map(|(c, w)| c + coef * (w - c)).collect()
            };

            let mut reflected = towards(-alpha);
            self.clamp(&mut reflected);
            let fr = eval(&reflected);
            if fr < values[0] {
                let mut expanded = towards(-gamma);
                self.clamp(&mut expanded);
                let fe = eval(&expanded);
                if fe < fr {
                    simplex[n] = expanded;
                    values[n] = fe;
                } else {
                    simplex[n] = reflected;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = reflected;
                values[n] = fr;
                continue;
            }
            let (mut contracted, outside) = if fr < values[n] { (towards(-rho), true) } else { (towards(rho), false) };
            self.clamp(&mut contracted);
            let fc = eval(&contracted);
            if (outside && fc <= fr) || (!outside && fc < values[n]) {
                simplex[n] = contracted;
                values[n] = fc;
                continue;
            }
            let best = simplex[0].clone();
            for i in 1..=n {
                for j in 0..n {
                    simplex[i][j] = best[j] + sigma * (simplex[i][j] - best[j]);
                }
                values[i] = eval(&simplex[i]);
            }
        }
        let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        Minimum { x: simplex[best].clone(), value: values[best], iterations, converged }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead::new(vec![(-5.0, 5.0), (-5.0, 5.0)], vec![0.5, 0.5]);
        let m = nm.minimize(&[-1.2, 1.0], |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        assert!(m.converged);
        assert_abs_diff_eq!(m.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(m.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn respects_bounds() {
        let nm = NelderMead::new(vec![(0.0, 2.0)], vec![0.3]);
        let m = nm.minimize(&[1.0], |x| -x[0]);
        assert_abs_diff_eq!(m.x[0], 2.0, epsilon = 1e-8);
        let m = nm.minimize(&[1.0], |x| x[0]);
        assert_abs_diff_eq!(m.x[0], 0.0, epsilon = 1e-8);
    }
}
