//! Entropy kernels shared by the concentration checks and the mean-field code.

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Bernoulli relative entropy `x ln(x/p) + (1-x) ln((1-x)/(1-p))` for
/// `x in [0, 1]`, `p in (0, 1)`. Returns `+inf` when `x` puts mass where
/// `p` does not (e.g. `x > 0` with `p = 0`).
pub fn relative_entropy(x: f64, p: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    term(x, p) + term(1.0 - x, 1.0 - p)
}

/// `I(x) = (1+x)/2 ln(1+x) + (1-x)/2 ln(1-x)` on `[-1, 1]`, the entropy cost
/// of magnetization `x` per spin relative to `ln 2`.
pub fn spin_entropy_cost(x: f64) -> f64 {
    0.5 * xlogx(1.0 + x) + 0.5 * xlogx(1.0 - x)
}

/// Exponent of the upper tail `P(Bin(L, p) >= L p (1+gamma)) <= exp(-L I_p(p(1+gamma)))`.
/// When `p (1+gamma) > 1` the event is empty and the exponent is `+inf`.
pub fn upper_tail_exponent(p: f64, gamma: f64) -> f64 {
    let x = p * (1.0 + gamma);
    if x > 1.0 {
        return f64::INFINITY;
    }
    relative_entropy(x, p)
}

/// Exponent of the lower tail `P(Bin(L, p) <= L p (1-gamma)) <= exp(-L I_p(p(1-gamma)))`.
pub fn lower_tail_exponent(p: f64, gamma: f64) -> f64 {
    relative_entropy((p * (1.0 - gamma)).max(0.0), p)
}
