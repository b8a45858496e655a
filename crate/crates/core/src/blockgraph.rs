//! Random two-block communication graphs.
//!
//! Agents `0..n/2` form block `S` and `n/2..n` form block `S^c`. Within-block
//! ordered pairs `(i, j)`, `i != j`, carry an edge indicator `eps[i][j]` that is
//! one with probability `p`; between-block ordered pairs carry `delta[i][j]`
//! with probability `q`. Row `i` of a matrix is the set of agents `i` listens to.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with `seed_from_u64`, so a
//! graph is a pure function of `(n, p, q, seed, directed)` on every platform.
//! Pairs are visited in row-major order and each visited pair consumes exactly
//! one `f64` draw; an edge is present iff the draw is `< p` (resp. `< q`).

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// Square bit matrix with 64-bit words, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    n: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(n: usize) -> Self {
        let words_per_row = n.div_ceil(64);
        BitMatrix {
            n,
            words_per_row,
            words: vec![0; n * words_per_row],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        let w = self.words[i * self.words_per_row + j / 64];
        (w >> (j % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        let idx = i * self.words_per_row + j / 64;
        let bit = 1u64 << (j % 64);
        if value {
            self.words[idx] |= bit;
        } else {
            self.words[idx] &= !bit;
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn row_count(&self, i: usize) -> u32 {
        self.row(i).iter().map(|w| w.count_ones()).sum()
    }

    /// Column indices of the set bits in row `i`, ascending.
    pub fn row_iter(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(k, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let tz = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(k * 64 + tz)
                }
            })
        })
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in self.row_iter(i) {
                t.set(j, i, true);
            }
        }
        t
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row_iter(i).all(|j| self.get(j, i)))
    }

    /// Packs the matrix as `n * n` bits, row-major, least significant bit first
    /// within each byte. Trailing bits of the last byte are zero.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let total = self.n * self.n;
        let mut out = vec![0u8; total.div_ceil(8)];
        for i in 0..self.n {
            for j in self.row_iter(i) {
                let k = i * self.n + j;
                out[k / 8] |= 1 << (k % 8);
            }
        }
        out
    }

    pub fn from_packed_bytes(n: usize, bytes: &[u8]) -> Result<Self> {
        let total = n * n;
        if bytes.len() != total.div_ceil(8) {
            return Err(Error::Format(format!(
                "bit matrix for n={n} needs {} bytes, got {}",
                total.div_ceil(8),
                bytes.len()
            )));
        }
        let mut m = BitMatrix::zeros(n);
        for k in 0..total {
            if (bytes[k / 8] >> (k % 8)) & 1 == 1 {
                m.set(k / n, k % n, true);
            }
        }
        if total % 8 != 0 && bytes[total / 8] >> (total % 8) != 0 {
            return Err(Error::Format("nonzero padding bits in bit matrix".into()));
        }
        Ok(m)
    }
}

/// Which of the two blocks an agent belongs to.
#[inline]
pub fn block_of(n: usize, i: usize) -> usize {
    usize::from(i >= n / 2)
}

/// A quenched realisation of the two-block communication structure.
///
/// Immutable after construction. The transposed matrices are kept alongside
/// the originals because the Gibbs conditional of agent `i` depends on both
/// the agents it listens to (row `i`) and the agents listening to it
/// (column `i`).
#[derive(Clone, Debug)]
pub struct BlockGraph {
    n: usize,
    p: f64,
    q: f64,
    seed: u64,
    directed: bool,
    eps: BitMatrix,
    delta: BitMatrix,
    eps_t: BitMatrix,
    delta_t: BitMatrix,
}

impl PartialEq for BlockGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.p == other.p
            && self.q == other.q
            && self.seed == other.seed
            && self.directed == other.directed
            && self.eps == other.eps
            && self.delta == other.delta
    }
}

fn check_size(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::invalid(format!(
            "number of agents must be even and at least 2, got {n}"
        )));
    }
    Ok(())
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::invalid(format!("{name} must lie in (0, 1], got {v}")));
    }
    Ok(())
}

impl BlockGraph {
    /// Assembles a graph from explicit edge matrices, checking every structural
    /// invariant. Used for deserialisation and for hand-built fixtures.
    pub fn from_parts(
        n: usize,
        p: f64,
        q: f64,
        seed: u64,
        directed: bool,
        eps: BitMatrix,
        delta: BitMatrix,
    ) -> Result<Self> {
        check_size(n)?;
        check_probability("p", p)?;
        check_probability("q", q)?;
        if eps.dim() != n || delta.dim() != n {
            return Err(Error::invalid("edge matrix dimension does not match n"));
        }
        for i in 0..n {
            if eps.row_iter(i).any(|j| j == i || block_of(n, j) != block_of(n, i)) {
                return Err(Error::invalid(format!(
                    "eps row {i} has a self edge or a between-block entry"
                )));
            }
            if delta.row_iter(i).any(|j| block_of(n, j) == block_of(n, i)) {
                return Err(Error::invalid(format!(
                    "delta row {i} has a within-block entry"
                )));
            }
        }
        if !directed && !(eps.is_symmetric() && delta.is_symmetric()) {
            return Err(Error::invalid("undirected graph with asymmetric edges"));
        }
        let eps_t = eps.transpose();
        let delta_t = delta.transpose();
        Ok(BlockGraph {
            n,
            p,
            q,
            seed,
            directed,
            eps,
            delta,
            eps_t,
            delta_t,
        })
    }

    /// Graph with every admissible edge present (the fully connected model).
    pub fn complete(n: usize) -> Result<Self> {
        gen_graph(n, 1.0, 1.0, 0, true)
    }

    /// Graph with no edges but nominal edge probabilities `p`, `q`.
    pub fn empty(n: usize, p: f64, q: f64) -> Result<Self> {
        Self::from_parts(n, p, q, 0, true, BitMatrix::zeros(n), BitMatrix::zeros(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn half(&self) -> usize {
        self.n / 2
    }

    pub fn eps(&self) -> &BitMatrix {
        &self.eps
    }

    pub fn delta(&self) -> &BitMatrix {
        &self.delta
    }

    pub fn eps_transposed(&self) -> &BitMatrix {
        &self.eps_t
    }

    pub fn delta_transposed(&self) -> &BitMatrix {
        &self.delta_t
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            format_version: GRAPH_FORMAT_VERSION,
            n: self.n,
            p: self.p,
            q: self.q,
            seed: self.seed,
            directed: self.directed,
            eps: BASE64.encode(self.eps.to_packed_bytes()),
            delta: BASE64.encode(self.delta.to_packed_bytes()),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        if file.format_version != GRAPH_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported graph format version {}",
                file.format_version
            )));
        }
        check_size(file.n)?;
        let decode = |s: &str| {
            BASE64
                .decode(s)
                .map_err(|e| Error::Format(format!("bad base64 edge matrix: {e}")))
        };
        let eps = BitMatrix::from_packed_bytes(file.n, &decode(&file.eps)?)?;
        let delta = BitMatrix::from_packed_bytes(file.n, &decode(&file.delta)?)?;
        Self::from_parts(file.n, file.p, file.q, file.seed, file.directed, eps, delta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        Self::from_file(&file)
    }
}

/// On-disk representation: a JSON header plus base64 bit matrices
/// (see [`BitMatrix::to_packed_bytes`] for the bit layout).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub format_version: u32,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub directed: bool,
    pub eps: String,
    pub delta: String,
}

/// Draws a two-block graph. Every within-block ordered pair is an edge
/// independently with probability `p`, every between-block ordered pair with
/// probability `q`. With `directed == false` only pairs `i < j` are drawn and
/// mirrored.
pub fn gen_graph(n: usize, p: f64, q: f64, seed: u64, directed: bool) -> Result<BlockGraph> {
    check_size(n)?;
    check_probability("p", p)?;
    check_probability("q", q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = BitMatrix::zeros(n);
    let mut delta = BitMatrix::zeros(n);
    for i in 0..n {
        let start = if directed { 0 } else { i + 1 };
        for j in start..n {
            if i == j {
                continue;
            }
            let within = block_of(n, i) == block_of(n, j);
            let threshold = if within { p } else { q };
            if rng.gen::<f64>() < threshold {
                let m = if within { &mut eps } else { &mut delta };
                m.set(i, j, true);
                if !directed {
                    m.set(j, i, true);
                }
            }
        }
    }
    BlockGraph::from_parts(n, p, q, seed, directed, eps, delta)
}

/// Number of (within-block, between-block) directed edges.
pub fn edge_counts(g: &BlockGraph) -> (u64, u64) {
    (g.eps.count_ones(), g.delta.count_ones())
}

/// Edge-probability schedules for a growing population.
///
/// `p_seq[k]` and `q_seq[k]` are the edge probabilities at population size
/// `k + 1`. Both must start at one and never increase.
///
/// Agents carry global labels `0, 1, 2, ...`; even labels belong to `S`, odd
/// labels to `S^c`, so an agent never changes block as the population grows.
/// In the level-`N` graph agent `a` occupies vertex [`GraphSequence::vertex_of`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSequence {
    pub p_seq: Vec<f64>,
    pub q_seq: Vec<f64>,
    pub seed: u64,
}

fn check_schedule(name: &str, seq: &[f64]) -> Result<()> {
    match seq.first() {
        Some(&first) if first == 1.0 => {}
        _ => return Err(Error::invalid(format!("{name} must start at 1"))),
    }
    for (k, w) in seq.windows(2).enumerate() {
        if !(w[1] > 0.0) {
            return Err(Error::invalid(format!(
                "{name}[{}] = {} is not a positive probability",
                k + 1,
                w[1]
            )));
        }
        if w[1] > w[0] {
            return Err(Error::invalid(format!(
                "{name} increases at index {}: {} -> {}",
                k + 1,
                w[0],
                w[1]
            )));
        }
    }
    Ok(())
}

impl GraphSequence {
    pub fn new(p_seq: Vec<f64>, q_seq: Vec<f64>, seed: u64) -> Result<Self> {
        check_schedule("p_seq", &p_seq)?;
        check_schedule("q_seq", &q_seq)?;
        Ok(GraphSequence { p_seq, q_seq, seed })
    }

    /// Edge probabilities `(p_N, q_N)` at population size `level`.
    pub fn probs_at(&self, level: usize) -> (f64, f64) {
        (self.p_seq[level - 1], self.q_seq[level - 1])
    }

    /// Vertex index of global agent `agent` in the graph with `level` agents.
    pub fn vertex_of(level: usize, agent: usize) -> usize {
        if agent % 2 == 0 {
            agent / 2
        } else {
            level / 2 + agent / 2
        }
    }

    /// Global agent label sitting at `vertex` of the graph with `level` agents.
    pub fn agent_at(level: usize, vertex: usize) -> usize {
        let half = level / 2;
        if vertex < half {
            2 * vertex
        } else {
            2 * (vertex - half) + 1
        }
    }
}

/// One realisation of the edge survival chain `X_1, X_2, ...` with `X_1 = 1`
/// and `P(X_N = 1 | X_{N-1} = 1) = probs[N-1] / probs[N-2]`. An absent edge
/// never reappears. Entry `k` of the result is `X_{k+1}`.
pub fn survival_chain<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<Vec<bool>> {
    check_schedule("probs", probs)?;
    let mut alive = true;
    let mut out = Vec::with_capacity(probs.len());
    out.push(true);
    for w in probs.windows(2) {
        if alive {
            alive = rng.gen::<f64>() < w[1] / w[0];
        }
        out.push(alive);
    }
    Ok(out)
}

/// Graphs for population sizes `2, 4, ..., upto` coupled through per-pair
/// survival chains: an edge present at size `N - 2` survives to size `N`
/// with probability `p_N / p_{N-2}` (resp. `q`), a pair that first appears at
/// size `N` is present with probability `p_N`, and absent edges never
/// reappear. The marginal edge probability at size `N` is therefore `p_N`.
///
/// Pairs are keyed by global agent labels, so `eps`/`delta` membership of a
/// pair is the same at every level.
pub fn gen_nested(seq: &GraphSequence, upto: usize) -> Result<Vec<BlockGraph>> {
    check_schedule("p_seq", &seq.p_seq)?;
    check_schedule("q_seq", &seq.q_seq)?;
    if upto < 2 || upto % 2 != 0 {
        return Err(Error::invalid(format!(
            "upto must be an even integer >= 2, got {upto}"
        )));
    }
    if seq.p_seq.len() < upto || seq.q_seq.len() < upto {
        return Err(Error::invalid(format!(
            "schedules must cover sizes 1..={upto}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seq.seed);
    // alive[a * upto + b]: edge a -> b in global labels
    let mut alive = vec![false; upto * upto];
    let mut graphs = Vec::with_capacity(upto / 2);
    let mut prev_level = 0usize;
    for level in (2..=upto).step_by(2) {
        let (p_now, q_now) = seq.probs_at(level);
        for a in 0..level {
            for b in 0..level {
                if a == b {
                    continue;
                }
                let same_block = a % 2 == b % 2;
                let now = if same_block { p_now } else { q_now };
                let slot = &mut alive[a * upto + b];
                if a < prev_level && b < prev_level {
                    if *slot {
                        let (p_prev, q_prev) = seq.probs_at(prev_level);
                        let before = if same_block { p_prev } else { q_prev };
                        *slot = rng.gen::<f64>() < now / before;
                    }
                } else {
                    *slot = rng.gen::<f64>() < now;
                }
            }
        }
        let mut eps = BitMatrix::zeros(level);
        let mut delta = BitMatrix::zeros(level);
        for a in 0..level {
            for b in 0..level {
                if a != b && alive[a * upto + b] {
                    let (i, j) = (
                        GraphSequence::vertex_of(level, a),
                        GraphSequence::vertex_of(level, b),
                    );
                    if a % 2 == b % 2 {
                        eps.set(i, j, true);
                    } else {
                        delta.set(i, j, true);
                    }
                }
            }
        }
        graphs.push(BlockGraph::from_parts(
            level, p_now, q_now, seq.seed, true, eps, delta,
        )?);
        prev_level = level;
    }
    Ok(graphs)
}
