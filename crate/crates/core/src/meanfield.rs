//! Mean-field predictions for the reference model.
//!
//! The large-deviation variable is `x = m / 2`, half the block
//! magnetization, so that `n F(m/2) = -H~(m)` with
//!
//! ```text
//! F(x) = (beta x1^2 + beta x2^2 + 2 lambda x1 x2) / 2
//! J(x) = I(2 x1) / 2 + I(2 x2) / 2
//! ```
//!
//! and `I` the spin entropy cost from [`crate::entropy`]. The rate function is
//! `sup (F - J) - (F(x) - J(x))`. Every other public output here is in
//! `m`-coordinates.
//!
//! Stationary points satisfy `m1 = tanh((beta m1 + lambda m2) / 2)` and the
//! same with the blocks swapped.
//!
//! For a negative coupling the anti-aligned magnitude is `z*((beta + |lambda|)/2)`:
//! negating one block maps `lambda` to `-lambda` and leaves the entropy
//! unchanged, so the anti-aligned case is the mirror image of the aligned one.

use serde::{Deserialize, Serialize};

use crate::entropy::spin_entropy_cost;
use crate::error::{Error, Result};
use crate::hamiltonian::Magnetization;

/// Largest `z >= 0` with `z = tanh(b z)`; zero for `b <= 1`.
pub fn cw_fixed_point(b: f64) -> f64 {
    if !(b > 1.0) {
        return 0.0;
    }
    // f(z) = z - tanh(bz) is convex on z > 0 with f(1) > 0, so Newton from
    // z = 1 decreases monotonically to the root.
    let f = |z: f64| z - (b * z).tanh();
    let mut z = 1.0f64;
    for _ in 0..500 {
        let t = (b * z).tanh();
        let fp = 1.0 - b * (1.0 - t * t);
        if fp <= 0.0 {
            break;
        }
        let next = z - (z - t) / fp;
        if !(next < z) || next <= 0.0 {
            break;
        }
        z = next;
    }
    if z > 0.0 && f(z).abs() < 1e-15 {
        return z;
    }
    // bisection fallback on [lo, hi] with f(lo) < 0 <= f(hi)
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0f64);
    while hi - lo > 0.0 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() < f(hi).abs() {
        lo
    } else {
        hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Paramagnetic,
    FourPoint,
    AlignedTwoPoint,
    AntiAlignedTwoPoint,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Paramagnetic => "Paramagnetic",
            Phase::FourPoint => "FourPoint",
            Phase::AlignedTwoPoint => "AlignedTwoPoint",
            Phase::AntiAlignedTwoPoint => "AntiAlignedTwoPoint",
        }
    }
}

/// One atom of the limiting Dirac mixture of `(m1, m2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub m1: f64,
    pub m2: f64,
    pub weight: f64,
}

impl LimitPoint {
    pub fn magnetization(&self) -> Magnetization {
        Magnetization::new(self.m1, self.m2)
    }
}

/// Limiting law of the block magnetizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagnosis {
    pub phase: Phase,
    pub z_star: f64,
    pub limit_points: Vec<LimitPoint>,
}

impl PhaseDiagnosis {
    /// Index of the limit point nearest to `m` in Euclidean distance.
    pub fn nearest(&self, m: Magnetization) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, lp) in self.limit_points.iter().enumerate() {
            let d = m.distance(&lp.magnetization());
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }
}

/// Phase of the reference model with intra-block coupling `beta` and
/// inter-block coupling `alpha_a`. The boundary `beta + |alpha_a| = 2`
/// counts as paramagnetic.
pub fn classify_phase(beta: f64, alpha_a: f64) -> Result<PhaseDiagnosis> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if !alpha_a.is_finite() {
        return Err(Error::invalid(format!("alpha*a must be finite, got {alpha_a}")));
    }
    let point = |m1: f64, m2: f64, weight: f64| LimitPoint { m1, m2, weight };
    if beta + alpha_a.abs() <= 2.0 {
        return Ok(PhaseDiagnosis {
            phase: Phase::Paramagnetic,
            z_star: 0.0,
            limit_points: vec![point(0.0, 0.0, 1.0)],
        });
    }
    if alpha_a == 0.0 {
        let z = cw_fixed_point(beta / 2.0);
        return Ok(PhaseDiagnosis {
            phase: Phase::FourPoint,
            z_star: z,
            limit_points: vec![
                point(z, z, 0.25),
                point(z, -z, 0.25),
                point(-z, z, 0.25),
                point(-z, -z, 0.25),
            ],
        });
    }
    let z = cw_fixed_point((beta + alpha_a.abs()) / 2.0);
    let (phase, limit_points) = if alpha_a > 0.0 {
        (
            Phase::AlignedTwoPoint,
            vec![point(z, z, 0.5), point(-z, -z, 0.5)],
        )
    } else {
        (
            Phase::AntiAlignedTwoPoint,
            vec![point(z, -z, 0.5), point(-z, z, 0.5)],
        )
    };
    Ok(PhaseDiagnosis {
        phase,
        z_star: z,
        limit_points,
    })
}

/// `F(x) - J(x)` in `x`-coordinates, `|2 x_i| <= 1`.
pub fn variational_objective(x: [f64; 2], beta: f64, lambda: f64) -> f64 {
    let [x1, x2] = x;
    0.5 * (beta * x1 * x1 + beta * x2 * x2 + 2.0 * lambda * x1 * x2)
        - 0.5 * spin_entropy_cost(2.0 * x1)
        - 0.5 * spin_entropy_cost(2.0 * x2)
}

fn gradient(x: [f64; 2], beta: f64, lambda: f64) -> [f64; 2] {
    [
        beta * x[0] + lambda * x[1] - (2.0 * x[0]).atanh(),
        beta * x[1] + lambda * x[0] - (2.0 * x[1]).atanh(),
    ]
}

/// Grid resolution per axis of the initial scan.
const SCAN_POINTS: usize = 401;
const GRADIENT_TOL: f64 = 1e-12;
/// Maximizers whose objective is this close to the best are all kept.
const TIE_TOL: f64 = 1e-12;

/// The rate function at fixed `(beta, lambda)`, with its global maximizers
/// of `F - J` precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFunction {
    beta: f64,
    lambda: f64,
    sup: f64,
    maximizers: Vec<[f64; 2]>,
}

impl RateFunction {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        if !beta.is_finite() || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "beta and lambda must be finite, got {beta}, {lambda}"
            )));
        }
        let phi = |x: [f64; 2]| variational_objective(x, beta, lambda);
        let k = SCAN_POINTS - 1;
        let coord = |i: usize| (i as f64 - (k / 2) as f64) / k as f64;
        let entropy: Vec<f64> = (0..=k).map(|i| 0.5 * spin_entropy_cost(2.0 * coord(i))).collect();
        let value = |i: usize, j: usize| {
            let (x1, x2) = (coord(i), coord(j));
            0.5 * (beta * x1 * x1 + beta * x2 * x2 + 2.0 * lambda * x1 * x2) - entropy[i] - entropy[j]
        };
        let grid: Vec<f64> = (0..=k)
            .flat_map(|i| (0..=k).map(move |j| (i, j)))
            .map(|(i, j)| value(i, j))
            .collect();
        let at = |i: usize, j: usize| grid[i * SCAN_POINTS + j];

        let mut candidates = Vec::new();
        for i in 1..k {
            for j in 1..k {
                let v = at(i, j);
                let is_peak = (i - 1..=i + 1)
                    .flat_map(|a| (j - 1..=j + 1).map(move |b| (a, b)))
                    .all(|(a, b)| at(a, b) <= v);
                if is_peak {
                    candidates.push([coord(i), coord(j)]);
                }
            }
        }

        let mut found: Vec<([f64; 2], f64)> = Vec::new();
        for start in candidates {
            let x = ascend(start, beta, lambda);
            if found
                .iter()
                .all(|(y, _)| (x[0] - y[0]).hypot(x[1] - y[1]) > 1e-7)
            {
                found.push((x, phi(x)));
            }
        }
        let sup = found
            .iter()
            .map(|f| f.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut maximizers: Vec<[f64; 2]> = found
            .into_iter()
            .filter(|f| f.1 >= sup - TIE_TOL)
            .map(|f| f.0)
            .collect();
        maximizers.sort_by(|a, b| b.partial_cmp(a).expect("finite maximizers"));
        Ok(RateFunction {
            beta,
            lambda,
            sup,
            maximizers,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `sup_x (F(x) - J(x))`.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// Global maximizers of `F - J` in `x`-coordinates.
    pub fn maximizers(&self) -> &[[f64; 2]] {
        &self.maximizers
    }

    /// Zeros of the rate function in `m`-coordinates.
    pub fn minimizers(&self) -> Vec<Magnetization> {
        self.maximizers
            .iter()
            .map(|x| Magnetization::new(2.0 * x[0], 2.0 * x[1]))
            .collect()
    }

    pub fn eval(&self, x: [f64; 2]) -> Result<f64> {
        if x.iter().any(|v| !(v.abs() <= 0.5)) {
            return Err(Error::invalid(format!(
                "rate function needs |2 x_i| <= 1, got ({}, {})",
                x[0], x[1]
            )));
        }
        Ok((self.sup - variational_objective(x, self.beta, self.lambda)).max(0.0))
    }
}

/// Damped Newton ascent on `F - J`, falling back to gradient steps where the
/// Hessian is not negative definite.
fn ascend(start: [f64; 2], beta: f64, lambda: f64) -> [f64; 2] {
    let phi = |x: [f64; 2]| variational_objective(x, beta, lambda);
    let inside = |x: [f64; 2]| x.iter().all(|v| v.abs() < 0.5);
    let mut x = start;
    for _ in 0..500 {
        let g = gradient(x, beta, lambda);
        if g[0].hypot(g[1]) < GRADIENT_TOL {
            break;
        }
        let h11 = beta - 2.0 / (1.0 - 4.0 * x[0] * x[0]);
        let h22 = beta - 2.0 / (1.0 - 4.0 * x[1] * x[1]);
        let det = h11 * h22 - lambda * lambda;
        let newton = h11 < 0.0 && det > 0.0;
        let dir = if newton {
            [
                -(h22 * g[0] - lambda * g[1]) / det,
                -(h11 * g[1] - lambda * g[0]) / det,
            ]
        } else {
            g
        };
        let f0 = phi(x);
        let g0 = g[0].hypot(g[1]);
        // near the peak phi is flat to rounding, so a Newton step is also
        // accepted when it shrinks the gradient
        let accept = |y: [f64; 2]| {
            phi(y) >= f0 || (newton && {
                let gy = gradient(y, beta, lambda);
                gy[0].hypot(gy[1]) < g0
            })
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let y = [x[0] + t * dir[0], x[1] + t * dir[1]];
            if inside(y) && accept(y) {
                x = y;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

/// `J_m(x)` at a single point; builds the maximizer search each call.
pub fn rate_function(x: [f64; 2], beta: f64, lambda: f64) -> Result<f64> {
    RateFunction::new(beta, lambda)?.eval(x)
}

/// Zeros of the rate function, in `m`-coordinates.
pub fn rate_minimizers(beta: f64, lambda: f64) -> Result<Vec<Magnetization>> {
    Ok(RateFunction::new(beta, lambda)?.minimizers())
}

/// `ln 2 + sup_x (F(x) - J(x))`, the limit of `(1/n) ln Z~`.
pub fn free_energy_variational(beta: f64, lambda: f64) -> Result<f64> {
    Ok(std::f64::consts::LN_2 + RateFunction::new(beta, lambda)?.sup())
}
