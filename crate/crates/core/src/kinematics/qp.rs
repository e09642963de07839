//! Strictly convex box-constrained QP: minimize `x'Hx/2 - g'x` over `lo <= x <= hi`.

use nalgebra::{DMatrix, DVector};

use super::KinematicsError;

#[derive(Debug, Clone)]
pub struct BoxQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Largest violation of the first-order optimality conditions.
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Bound {
    Free,
    Lower,
    Upper,
}

impl BoxQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) - self.g.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x - &self.g
    }

    /// Max violation of stationarity, complementarity and feasibility at `x`.
    pub fn kkt_residual(&self, x: &DVector<f64>) -> f64 {
        let grad = self.gradient(x);
        let scale = 1e-12 * (1.0 + self.lo.amax().max(self.hi.amax()));
        let mut r: f64 = 0.0;
        for i in 0..x.len() {
            r = r.max(self.lo[i] - x[i]).max(x[i] - self.hi[i]);
            let at_lo = x[i] <= self.lo[i] + scale;
            let at_hi = x[i] >= self.hi[i] - scale;
            let v = match (at_lo, at_hi) {
                (true, true) => 0.0,
                (true, false) => (-grad[i]).max(0.0),
                (false, true) => grad[i].max(0.0),
                (false, false) => grad[i].abs(),
            };
            r = r.max(v);
        }
        r
    }
}

/// Primal active-set method. Finite for positive definite `H`; each
/// iteration solves the reduced system on the free coordinates.
pub fn solve_box_qp(qp: &BoxQp) -> Result<QpSolution, KinematicsError> {
    let n = qp.g.len();
    let mut state: Vec<Bound> = (0..n)
        .map(|i| {
            if qp.lo[i] >= 0.0 {
                Bound::Lower
            } else if qp.hi[i] <= 0.0 {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    let mut x = DVector::from_fn(n, |i, _| match state[i] {
        Bound::Lower => qp.lo[i],
        Bound::Upper => qp.hi[i],
        Bound::Free => 0.0,
    });

    let max_iter = 20 * n + 50;
    for iter in 0..max_iter {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        let target = if free.is_empty() {
            DVector::zeros(0)
        } else {
            // H_FF x_F = g_F - H_FB x_B
            let h_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| qp.h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                qp.g[i] - (0..n).filter(|&j| state[j] != Bound::Free).map(|j| qp.h[(i, j)] * x[j]).sum::<f64>()
            });
            h_ff.cholesky().ok_or(KinematicsError::Degenerate)?.solve(&rhs)
        };

        // Longest feasible step toward the reduced minimizer.
        let mut alpha = 1.0;
        let mut blocking = None;
        for (a, &i) in free.iter().enumerate() {
            let p = target[a] - x[i];
            if p < 0.0 && x[i] + p < qp.lo[i] {
                let s = (qp.lo[i] - x[i]) / p;
                if s < alpha {
                    alpha = s;
                    blocking = Some((i, Bound::Lower));
                }
            } else if p > 0.0 && x[i] + p > qp.hi[i] {
                let s = (qp.hi[i] - x[i]) / p;
                if s < alpha {
                    alpha = s;
                    blocking = Some((i, Bound::Upper));
                }
            }
        }
        for (a, &i) in free.iter().enumerate() {
            x[i] += alpha * (target[a] - x[i]);
        }
        if let Some((i, b)) = blocking {
            state[i] = b;
            x[i] = if b == Bound::Lower { qp.lo[i] } else { qp.hi[i] };
            continue;
        }

        // Reduced problem solved: release the bound with the worst multiplier.
        let grad = qp.gradient(&x);
        let release = (0..n)
            .filter_map(|i| {
                let wrong = match state[i] {
                    Bound::Lower if qp.lo[i] < qp.hi[i] => -grad[i],
                    Bound::Upper if qp.lo[i] < qp.hi[i] => grad[i],
                    _ => 0.0,
                };
                (wrong > 0.0).then_some((i, wrong))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match release {
            Some((i, _)) => state[i] = Bound::Free,
            None => {
                return Ok(QpSolution { kkt_residual: qp.kkt_residual(&x), x, iterations: iter + 1 });
            }
        }
    }
    Ok(QpSolution { kkt_residual: qp.kkt_residual(&x), x, iterations: max_iter })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Tries every lower/free/upper pattern and keeps the best feasible
    /// candidate. Independent of the active-set iteration.
    pub fn brute_force(qp: &BoxQp) -> DVector<f64> {
        let n = qp.g.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for code in 0..3usize.pow(n as u32) {
            let pattern: Vec<usize> = (0..n).map(|i| (code / 3usize.pow(i as u32)) % 3).collect();
            let mut x = DVector::zeros(n);
            let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 1).collect();
            for i in 0..n {
                match pattern[i] {
                    0 => x[i] = qp.lo[i],
                    2 => x[i] = qp.hi[i],
                    _ => {}
                }
            }
            if !free.is_empty() {
                let h_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| qp.h[(free[a], free[b])]);
                let rhs = DVector::from_fn(free.len(), |a, _| {
                    let i = free[a];
                    qp.g[i] - (0..n).filter(|j| !free.contains(j)).map(|j| qp.h[(i, j)] * x[j]).sum::<f64>()
                });
                let Some(sol) = h_ff.lu().solve(&rhs) else { continue };
                for (a, &i) in free.iter().enumerate() {
                    x[i] = sol[a];
                }
            }
            if (0..n).any(|i| x[i] < qp.lo[i] - 1e-12 || x[i] > qp.hi[i] + 1e-12) {
                continue;
            }
            let f = qp.objective(&x);
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
        best.expect("box is non-empty").1
    }

    fn spd(seed: &[f64], n: usize, damping: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| seed[i * n + j]);
        &a.transpose() * &a + DMatrix::identity(n, n) * damping
    }

    #[test]
    fn interior_solution_is_newton_step() {
        let h = spd(&[1.0, 0.2, 0.0, -0.3, 0.8, 0.1, 0.4, 0.0, 1.2], 3, 0.1);
        let g = DVector::from_vec(vec![0.01, -0.02, 0.005]);
        let qp = BoxQp { h: h.clone(), g: g.clone(), lo: DVector::repeat(3, -10.0), hi: DVector::repeat(3, 10.0) };
        let sol = solve_box_qp(&qp).unwrap();
        let expected = h.lu().solve(&g).unwrap();
        assert!((sol.x - expected).amax() < 1e-12);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn singular_hessian_is_degenerate() {
        let qp = BoxQp {
            h: DMatrix::zeros(2, 2),
            g: DVector::from_vec(vec![1.0, 0.0]),
            lo: DVector::repeat(2, -1.0),
            hi: DVector::repeat(2, 1.0),
        };
        assert_eq!(solve_box_qp(&qp), Err(KinematicsError::Degenerate));
    }

    #[test]
    fn zero_width_box_is_pinned() {
        let qp = BoxQp {
            h: DMatrix::identity(2, 2),
            g: DVector::from_vec(vec![1.0, -1.0]),
            lo: DVector::from_vec(vec![0.0, -0.5]),
            hi: DVector::from_vec(vec![0.0, 0.5]),
        };
        let sol = solve_box_qp(&qp).unwrap();
        assert_eq!(sol.x[0], 0.0);
        assert!((sol.x[1] + 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn matches_enumeration(
            seed in proptest::collection::vec(-1.0f64..1.0, 9),
            g in proptest::collection::vec(-2.0f64..2.0, 3),
            lo in proptest::collection::vec(-1.0f64..0.0, 3),
            hi in proptest::collection::vec(0.0f64..1.0, 3),
            damping in 1e-2f64..1.0,
        ) {
            let qp = BoxQp {
                h: spd(&seed, 3, damping),
                g: DVector::from_vec(g),
                lo: DVector::from_vec(lo),
                hi: DVector::from_vec(hi),
            };
            let sol = solve_box_qp(&qp).unwrap();
            let oracle = brute_force(&qp);
            prop_assert!((&sol.x - &oracle).amax() < 1e-8, "{} vs {}", sol.x, oracle);
            prop_assert!(sol.kkt_residual <= 1e-8);
        }
    }
}
