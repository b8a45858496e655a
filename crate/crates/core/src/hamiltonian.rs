//! Energies, block magnetizations and pair-count identities.
//!
//! The quenched energy of a configuration on a graph `g` is
//!
//! ```text
//! H(sigma) = -beta/(2 n p) * sum_{i~j, i!=j} eps_ij sigma_i sigma_j
//!            - alpha/(2 n p) * sum_{i!~j} delta_ij sigma_i sigma_j
//! ```
//!
//! and the fully connected reference energy with coupling `lambda` between the
//! blocks is `-(n/8) (2 lambda m1 m2 + beta m1^2 + beta m2^2)`.
//!
//! Diagonal convention: the reference energy and [`LinkCounts::lb_plus`]
//! count the pairs `(i, i)`; the quenched energy has no diagonal edges. On the
//! complete graph with `lambda = alpha` the two energies therefore differ by
//! the constant [`diagonal_offset`] `= beta / 2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blockgraph::BlockGraph;
use crate::error::{Error, Result};
use crate::spins::{signed_sum, PlusMask};

/// A decision profile in `{-1, +1}^n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(pos) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::invalid(format!(
                "spin {pos} is {}, expected +1 or -1",
                spins[pos]
            )));
        }
        Ok(SpinConfig { spins })
    }

    pub fn all_plus(n: usize) -> Self {
        SpinConfig { spins: vec![1; n] }
    }

    pub fn all_minus(n: usize) -> Self {
        SpinConfig { spins: vec![-1; n] }
    }

    /// First block set to `s1`, second block set to `s2`.
    pub fn blocks(n: usize, s1: i8, s2: i8) -> Result<Self> {
        let half = n / 2;
        Self::new((0..n).map(|i| if i < half { s1 } else { s2 }).collect())
    }

    /// Bit `i` of `mask` set means `sigma_i = +1`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        SpinConfig {
            spins: (0..n).map(|i| if (mask >> i) & 1 == 1 { 1 } else { -1 }).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SpinConfig {
            spins: (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        self.spins[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, s: i8) {
        debug_assert!(s == 1 || s == -1);
        self.spins[i] = s;
    }

    pub fn flip(&mut self, i: usize) {
        self.spins[i] = -self.spins[i];
    }

    pub fn negated(&self) -> Self {
        SpinConfig {
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }

    /// Spin sums `(sum_{i in S} sigma_i, sum_{i in S^c} sigma_i)`.
    pub fn block_sums(&self) -> (i64, i64) {
        let half = self.spins.len() / 2;
        let s1 = self.spins[..half].iter().map(|&s| i64::from(s)).sum();
        let s2 = self.spins[half..].iter().map(|&s| i64::from(s)).sum();
        (s1, s2)
    }

    pub(crate) fn plus_mask(&self) -> PlusMask {
        PlusMask::from_spins(&self.spins)
    }
}

/// Interaction parameters `(beta, alpha, p, q, a)`.
///
/// `a` is the limiting ratio `q/p` used by the reference model; it defaults
/// to `q/p` itself and `lambda = alpha * a` is the reference coupling
/// between the blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub a: f64,
}

impl ModelParams {
    /// Checks `beta > 0`, `p, q in (0, 1]`, `p >= q` and `|alpha| q/p <= beta`.
    pub fn new(beta: f64, alpha: f64, p: f64, q: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be finite, got {alpha}")));
        }
        for (name, v) in [("p", p), ("q", q)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if p < q {
            return Err(Error::invalid(format!("need p >= q, got p={p}, q={q}")));
        }
        if alpha.abs() * q / p > beta * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "need |alpha| q/p <= beta, got |{alpha}| * {q}/{p} > {beta}"
            )));
        }
        Ok(ModelParams {
            beta,
            alpha,
            p,
            q,
            a: q / p,
        })
    }

    /// Parameters whose `p`, `q` are taken from the graph.
    pub fn for_graph(g: &BlockGraph, beta: f64, alpha: f64) -> Result<Self> {
        Self::new(beta, alpha, g.p(), g.q())
    }

    /// Replaces the limiting ratio `a` (must lie in `[0, 1]`).
    pub fn with_a(mut self, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid(format!("a must lie in [0, 1], got {a}")));
        }
        self.a = a;
        Ok(self)
    }

    /// Reference-model coupling between the blocks, `alpha * a`.
    pub fn lambda(&self) -> f64 {
        self.alpha * self.a
    }
}

/// Block magnetizations `m1 = (2/n) sum_{S} sigma`, `m2 = (2/n) sum_{S^c} sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Magnetization {
    pub m1: f64,
    pub m2: f64,
}

impl Magnetization {
    pub fn new(m1: f64, m2: f64) -> Self {
        Magnetization { m1, m2 }
    }

    pub fn from_block_sums(n: usize, s1: i64, s2: i64) -> Self {
        let scale = 2.0 / n as f64;
        Magnetization {
            m1: s1 as f64 * scale,
            m2: s2 as f64 * scale,
        }
    }

    /// Block spin sums `(n/2) m_i`, if both are integers.
    pub fn block_sums(&self, n: usize) -> Option<(i64, i64)> {
        let half = n as f64 / 2.0;
        let round = |m: f64| {
            let s = m * half;
            let r = s.round();
            ((s - r).abs() < 1e-9).then_some(r as i64)
        };
        Some((round(self.m1)?, round(self.m2)?))
    }

    /// True when both block sums are integers in `[-n/2, n/2]` with the parity
    /// of `n/2`.
    pub fn is_admissible(&self, n: usize) -> bool {
        let half = (n / 2) as i64;
        match self.block_sums(n) {
            Some((s1, s2)) => [s1, s2]
                .iter()
                .all(|&s| s.abs() <= half && (s - half).rem_euclid(2) == 0),
            None => false,
        }
    }

    pub fn distance(&self, other: &Magnetization) -> f64 {
        (self.m1 - other.m1).hypot(self.m2 - other.m2)
    }
}

pub fn magnetization(sigma: &SpinConfig) -> Magnetization {
    let (s1, s2) = sigma.block_sums();
    Magnetization::from_block_sums(sigma.len(), s1, s2)
}

/// Ordered-pair counts of aligned and unaligned spins.
///
/// `lb_plus` counts within-block pairs `(i, j)` with `sigma_i = sigma_j`,
/// including `i = j`; `lnb_plus` / `lnb_minus` count between-block ordered
/// pairs with equal / opposite spins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounts {
    pub lb_plus: u64,
    pub lnb_plus: u64,
    pub lnb_minus: u64,
}

impl LinkCounts {
    /// Checks the three magnetization identities exactly in integer
    /// arithmetic, with `s_i = (n/2) m_i`:
    /// `8 lb_plus = n^2 (m1^2 + m2^2 + 2)`, `4 lnb_plus = n^2 (m1 m2 + 1)`,
    /// `4 lnb_minus = n^2 (1 - m1 m2)`.
    pub fn satisfies_identities(&self, n: usize, s1: i64, s2: i64) -> bool {
        let n = n as i128;
        let (s1, s2) = (i128::from(s1), i128::from(s2));
        let (lb, lp, lm) = (
            i128::from(self.lb_plus),
            i128::from(self.lnb_plus),
            i128::from(self.lnb_minus),
        );
        // n^2 m_i^2 = 4 s_i^2 and n^2 m1 m2 = 4 s1 s2
        8 * lb == 4 * s1 * s1 + 4 * s2 * s2 + 2 * n * n
            && 4 * lp == 4 * s1 * s2 + n * n
            && 4 * lm == n * n - 4 * s1 * s2
    }
}

pub fn link_counts(sigma: &SpinConfig) -> LinkCounts {
    let n = sigma.len();
    let half = (n / 2) as u64;
    let (s1, s2) = sigma.block_sums();
    // plus spins per block
    let k1 = (half as i64 + s1) as u64 / 2;
    let k2 = (half as i64 + s2) as u64 / 2;
    let (u1, u2) = (half - k1, half - k2);
    LinkCounts {
        lb_plus: k1 * k1 + u1 * u1 + k2 * k2 + u2 * u2,
        lnb_plus: 2 * (k1 * k2 + u1 * u2),
        lnb_minus: 2 * (k1 * u2 + u1 * k2),
    }
}

fn check_dims(g: &BlockGraph, sigma: &SpinConfig) -> Result<()> {
    if g.n() != sigma.len() {
        return Err(Error::invalid(format!(
            "graph has {} agents but configuration has {}",
            g.n(),
            sigma.len()
        )));
    }
    Ok(())
}

fn check_params(g: &BlockGraph, params: &ModelParams) -> Result<()> {
    if params.p != g.p() || params.q != g.q() {
        return Err(Error::invalid(format!(
            "parameters (p={}, q={}) do not match graph (p={}, q={})",
            params.p,
            params.q,
            g.p(),
            g.q()
        )));
    }
    Ok(())
}

/// Integer interaction sums `(sum eps_ij s_i s_j, sum delta_ij s_i s_j)`
/// over ordered pairs.
pub fn interaction_sums(g: &BlockGraph, sigma: &SpinConfig) -> Result<(i64, i64)> {
    check_dims(g, sigma)?;
    let plus = sigma.plus_mask();
    let mut within = 0i64;
    let mut between = 0i64;
    for i in 0..g.n() {
        let s = i64::from(sigma.get(i));
        within += s * signed_sum(g.eps(), i, &plus);
        between += s * signed_sum(g.delta(), i, &plus);
    }
    Ok((within, between))
}

/// Quenched energy of `sigma` on `g`.
pub fn energy_random(g: &BlockGraph, params: &ModelParams, sigma: &SpinConfig) -> Result<f64> {
    check_params(g, params)?;
    let (within, between) = interaction_sums(g, sigma)?;
    Ok(energy_from_sums(g.n(), params, within, between))
}

#[inline]
pub(crate) fn energy_from_sums(n: usize, params: &ModelParams, within: i64, between: i64) -> f64 {
    -(params.beta * within as f64 + params.alpha * between as f64) / (2.0 * n as f64 * params.p)
}

/// Fully connected reference energy written through the block magnetizations.
pub fn energy_complete(n: usize, beta: f64, lambda: f64, m: Magnetization) -> f64 {
    -(n as f64 / 8.0) * (2.0 * lambda * m.m1 * m.m2 + beta * m.m1 * m.m1 + beta * m.m2 * m.m2)
}

/// `energy_random - energy_complete` on the complete graph (`p = q = 1`,
/// `lambda = alpha`): the missing diagonal terms, `beta / 2`.
pub fn diagonal_offset(beta: f64) -> f64 {
    beta / 2.0
}

/// Uniform bound `beta gamma n + 2 |alpha a| kappa n` on the gap between the
/// quenched and reference energies, valid for graphs whose edge counts
/// concentrate at relative precision `gamma` (within) and `kappa` (between).
pub fn energy_gap_bound(params: &ModelParams, n: usize, gamma: f64, kappa: f64) -> Result<f64> {
    if !(gamma >= 0.0) || !(kappa >= 0.0) {
        return Err(Error::invalid(format!(
            "gamma and kappa must be non-negative, got {gamma}, {kappa}"
        )));
    }
    let n = n as f64;
    Ok(params.beta * gamma * n + 2.0 * params.lambda().abs() * kappa * n)
}

/// Edge counts split by whether the edge joins equal spins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeAlignment {
    /// `sum eps_ij`
    pub within_edges: u64,
    /// `sum eps_ij 1{sigma_i = sigma_j}`
    pub within_aligned: u64,
    /// `sum delta_ij`
    pub between_edges: u64,
    /// `sum delta_ij 1{sigma_i = sigma_j}`
    pub between_aligned: u64,
    /// `sum delta_ij 1{sigma_i != sigma_j}`
    pub between_antialigned: u64,
}

pub fn edge_alignment(g: &BlockGraph, sigma: &SpinConfig) -> Result<EdgeAlignment> {
    check_dims(g, sigma)?;
    let plus = sigma.plus_mask();
    let mut out = EdgeAlignment {
        within_edges: 0,
        within_aligned: 0,
        between_edges: 0,
        between_aligned: 0,
        between_antialigned: 0,
    };
    for i in 0..g.n() {
        let up = sigma.get(i) > 0;
        let count = |row: &[u64]| -> (u64, u64) {
            let mut total = 0u64;
            let mut same = 0u64;
            for (r, p) in row.iter().zip(plus.words()) {
                total += u64::from(r.count_ones());
                let aligned = if up { r & p } else { r & !p };
                same += u64::from(aligned.count_ones());
            }
            (total, same)
        };
        let (we, wa) = count(g.eps().row(i));
        let (be, ba) = count(g.delta().row(i));
        out.within_edges += we;
        out.within_aligned += wa;
        out.between_edges += be;
        out.between_aligned += ba;
        out.between_antialigned += be - ba;
    }
    Ok(out)
}

/// Energy assembled from aligned-edge counts. With `use_antialigned == false`
/// the between-block part is written through the aligned count
/// (`2 sum delta 1{aligned} - sum delta`), otherwise through the anti-aligned
/// count (`sum delta - 2 sum delta 1{anti-aligned}`).
pub fn energy_from_alignment(
    n: usize,
    params: &ModelParams,
    al: &EdgeAlignment,
    use_antialigned: bool,
) -> f64 {
    // exact integer combinations before scaling
    let within = 2 * al.within_aligned as i64 - al.within_edges as i64;
    let between = if use_antialigned {
        al.between_edges as i64 - 2 * al.between_antialigned as i64
    } else {
        2 * al.between_aligned as i64 - al.between_edges as i64
    };
    energy_from_sums(n, params, within, between)
}

/// Quenched energy through the aligned-link decomposition, choosing the
/// aligned form when `m1 m2 >= 0` and the anti-aligned form otherwise.
pub fn energy_via_links(g: &BlockGraph, params: &ModelParams, sigma: &SpinConfig) -> Result<f64> {
    check_params(g, params)?;
    let al = edge_alignment(g, sigma)?;
    let (s1, s2) = sigma.block_sums();
    Ok(energy_from_alignment(g.n(), params, &al, s1 * s2 < 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockgraph::gen_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(v: &[i8]) -> SpinConfig {
        SpinConfig::new(v.to_vec()).unwrap()
    }

    #[test]
    fn magnetization_examples() {
        assert_eq!(magnetization(&cfg(&[1, 1, 1, 1])), Magnetization::new(1.0, 1.0));
        assert_eq!(magnetization(&cfg(&[1, 1, -1, -1])), Magnetization::new(1.0, -1.0));
        assert_eq!(magnetization(&cfg(&[1, -1, 1, -1])), Magnetization::new(0.0, 0.0));
    }

    #[test]
    fn spin_config_rejects_zero() {
        assert!(SpinConfig::new(vec![1, 0, -1, 1]).is_err());
    }

    #[test]
    fn link_count_examples() {
        let c = link_counts(&cfg(&[1, 1, -1, -1]));
        assert_eq!((c.lb_plus, c.lnb_plus, c.lnb_minus), (8, 0, 8));
        let c = link_counts(&cfg(&[1, 1, 1, 1]));
        assert_eq!((c.lb_plus, c.lnb_plus, c.lnb_minus), (8, 8, 0));
    }

    #[test]
    fn admissibility() {
        // n = 4: block sums in {-2, 0, 2}
        assert!(Magnetization::new(0.0, 1.0).is_admissible(4));
        assert!(!Magnetization::new(0.5, 1.0).is_admissible(4));
        // n = 6: block sums in {-3, -1, 1, 3}
        assert!(Magnetization::new(1.0 / 3.0, -1.0).is_admissible(6));
        assert!(!Magnetization::new(0.0, 1.0).is_admissible(6));
        assert!(!Magnetization::new(0.1, 0.0).is_admissible(6));
    }

    #[test]
    fn complete_graph_energy_example() {
        let g = gen_graph(4, 1.0, 1.0, 0, true).unwrap();
        let params = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let e = energy_random(&g, &params, &SpinConfig::all_plus(4)).unwrap();
        assert!((e + 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_graph_has_zero_energy() {
        let g = BlockGraph::empty(6, 0.5, 0.5).unwrap();
        let params = ModelParams::new(2.0, 1.0, 0.5, 0.5).unwrap();
        for mask in 0..64u64 {
            assert_eq!(energy_random(&g, &params, &SpinConfig::from_mask(6, mask)).unwrap(), 0.0);
        }
    }

    #[test]
    fn energy_complete_examples() {
        assert_eq!(energy_complete(10, 2.0, 1.0, Magnetization::new(0.0, 0.0)), 0.0);
        assert!((energy_complete(4, 2.0, 1.0, Magnetization::new(1.0, -1.0)) + 1.0).abs() < 1e-15);
        assert!((energy_complete(4, 2.0, 1.0, Magnetization::new(1.0, 1.0)) + 3.0).abs() < 1e-15);
    }

    #[test]
    fn gap_bound_examples() {
        let params = ModelParams::new(2.0, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(energy_gap_bound(&params, 100, 0.0, 0.0).unwrap(), 0.0);
        // alpha a = 0.5
        let b = energy_gap_bound(&params, 100, 0.1, 0.1).unwrap();
        assert!((b - 30.0).abs() < 1e-12);
        assert!(energy_gap_bound(&params, 100, -0.1, 0.1).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = gen_graph(4, 1.0, 1.0, 0, true).unwrap();
        let params = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            energy_random(&g, &params, &SpinConfig::all_plus(6)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 0.0, 0.5, 0.5).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.3, 0.5).is_err());
        assert!(ModelParams::new(1.0, 3.0, 0.5, 0.25).is_err());
        let ok = ModelParams::new(1.0, 2.0, 0.5, 0.25).unwrap();
        assert_eq!(ok.a, 0.5);
        assert_eq!(ok.lambda(), 1.0);
        assert_eq!(ok.with_a(0.25).unwrap().lambda(), 0.5);
        assert!(ok.with_a(1.5).is_err());
    }

    #[test]
    fn both_link_forms_agree_with_popcount_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gen_graph(14, 0.7, 0.4, 21, true).unwrap();
        let params = ModelParams::new(1.3, -0.9, 0.7, 0.4).unwrap();
        for _ in 0..200 {
            let s = SpinConfig::random(14, &mut rng);
            let e = energy_random(&g, &params, &s).unwrap();
            let al = edge_alignment(&g, &s).unwrap();
            for anti in [false, true] {
                let r = energy_from_alignment(14, &params, &al, anti);
                assert!((e - r).abs() <= 1e-12 * e.abs().max(1.0));
            }
        }
    }
}
