//! Bernoulli(p) bit streams, the coupled PATRICIA trie and query
//! refinement tree, and the Monte Carlo trial harness.
//!
//! The coupling follows the construction that makes the query refinement
//! tree and the PATRICIA trie isomorphic pathwise, not just in
//! distribution: every string carries its own bit cursor, a query consumes
//! one bit from each string of every block it must split, and an
//! inconclusive decision for a block is resampled by consuming fresh bits
//! from that block's strings only. Skipping positions on which a whole
//! block agrees is then exactly PATRICIA path compression.
//!
//! Bits come from a counter-based generator (ChaCha12 keyed by the trial
//! seed, one stream per string, position = word counter), so identical
//! `(seed, stream_index, position)` always yields the identical bit and
//! trials are reproducible independent of thread count. Cross-build bit
//! compatibility is not promised; within-build determinism is.

use rand_chacha::ChaCha12Rng;
use rug::ops::Pow;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::numerics::Bias;
use crate::{Error, Result};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed, schedule-independent.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial).rotate_left(17))
}

/// Anything that can serve as a string's bit source.
pub trait BitSource {
    /// The next unconsumed bit of this string.
    fn next_bit(&mut self) -> Result<bool>;
}

/// Production bit source: one ChaCha12 stream per string.
#[derive(Clone)]
pub struct ChaChaBits {
    rng: ChaCha12Rng,
    threshold: u64,
    consumed: u64,
    guard: u64,
}

impl ChaChaBits {
    fn new(seed: u64, stream_index: u64, threshold: u64, guard: u64) -> Self {
        let mut key = [0u8; 32];
        let mut x = splitmix64(seed);
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&x.to_le_bytes());
            x = splitmix64(x);
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(stream_index);
        ChaChaBits { rng, threshold, consumed: 0, guard }
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }
}

impl BitSource for ChaChaBits {
    fn next_bit(&mut self) -> Result<bool> {
        if self.consumed >= self.guard {
            return Err(Error::Internal(format!(
                "bit stream exceeded its guard of {} bits; the tree failed to separate",
                self.guard
            )));
        }
        self.consumed += 1;
        Ok(self.rng.next_u64() < self.threshold)
    }
}

/// Fixed bits for forcing specific instances in tests; errors when
/// exhausted.
pub struct FixedBits(pub std::vec::IntoIter<bool>);

impl FixedBits {
    pub fn from_bits(bits: &[u8]) -> Self {
        FixedBits(bits.iter().map(|&b| b != 0).collect::<Vec<_>>().into_iter())
    }
}

impl BitSource for FixedBits {
    fn next_bit(&mut self) -> Result<bool> {
        self.0.next().ok_or_else(|| Error::Internal("fixed bit stream exhausted".into()))
    }
}

/// `floor(p 2^64)`: the acceptance threshold for one uniform word.
fn bias_threshold(bias: &Bias) -> u64 {
    let prec = bias.prec();
    let scaled = crate::numerics::hp(prec, bias.p()) * crate::numerics::hp(prec, 2).pow(64u32);
    scaled
        .floor()
        .to_integer()
        .and_then(|i| i.to_u64())
        .expect("p in [1/2,1) scales into u64")
}

/// Bit budget per string before declaring the build stuck:
/// `64 (log_{1/p} n + 64)`.
fn stream_guard(n: usize, bias: &Bias) -> u64 {
    let p = bias.p_f64();
    let lead = (n as f64).ln() / (1.0 / p).ln();
    (64.0 * (lead + 64.0)).ceil() as u64
}

/// `n` reproducible Bernoulli(p) streams; stream `i` is derived from
/// `(seed, i)` and owns its own position counter.
pub fn draw_streams(n: usize, bias: &Bias, seed: u64) -> Vec<ChaChaBits> {
    let threshold = bias_threshold(bias);
    let guard = stream_guard(n, bias);
    (0..n).map(|i| ChaChaBits::new(seed, i as u64, threshold, guard)).collect()
}

/// A binary plane tree with string ids at the leaves. Zero-bit children on
/// the left, one-bit children on the right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Leaf(u32),
    Internal(Box<Node>, Box<Node>),
}

/// Compressed binary trie over the streams; exactly `n` leaves and no unary
/// internal node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatriciaTrie {
    pub root: Node,
    pub leaf_count: usize,
}

/// The query refinement tree: per-level partitions (singletons retired) and
/// the induced plane tree.
#[derive(Debug, Clone)]
pub struct RefinementTree {
    /// Partition after each accepted query; level 0 is the trivial partition.
    pub levels: Vec<Vec<Vec<u32>>>,
    pub root: Node,
    pub leaf_count: usize,
}

/// Build the PATRICIA trie by recursive block splitting: a block consumes
/// one bit per member string until the split is nontrivial (agreeing
/// positions are the compressed unary paths).
pub fn build_patricia<B: BitSource>(streams: &mut [B]) -> Result<PatriciaTrie> {
    let n = streams.len();
    if n == 0 {
        return Err(Error::Domain("build_patricia: need at least one stream".into()));
    }
    let ids: Vec<u32> = (0..n as u32).collect();
    let root = split_block(&ids, streams)?;
    Ok(PatriciaTrie { root, leaf_count: n })
}

fn split_block<B: BitSource>(block: &[u32], streams: &mut [B]) -> Result<Node> {
    if block.len() == 1 {
        return Ok(Node::Leaf(block[0]));
    }
    loop {
        let mut zeros = Vec::new();
        let mut ones = Vec::new();
        for &id in block {
            if streams[id as usize].next_bit()? {
                ones.push(id);
            } else {
                zeros.push(id);
            }
        }
        if !zeros.is_empty() && !ones.is_empty() {
            let left = split_block(&zeros, streams)?;
            let right = split_block(&ones, streams)?;
            return Ok(Node::Internal(Box::new(left), Box::new(right)));
        }
        // inconclusive for this block: burn and redraw
    }
}

/// Run the query process level-synchronously: every accepted query splits
/// every nontrivial block, with per-block resampling of inconclusive
/// decisions.
pub fn run_renyi<B: BitSource>(streams: &mut [B]) -> Result<RefinementTree> {
    let n = streams.len();
    if n == 0 {
        return Err(Error::Domain("run_renyi: need at least one stream".into()));
    }
    let all: Vec<u32> = (0..n as u32).collect();
    let mut levels = vec![vec![all.clone()]];
    // slot map from block-id to its eventual children, for tree assembly
    #[derive(Clone)]
    struct Open {
        members: Vec<u32>,
    }
    // the plane tree is rebuilt from the split log afterwards
    enum Split {
        Leaf(u32),
        Pair(usize, usize), // indices into the log
    }
    let mut log: Vec<Split> = Vec::new();
    fn alloc(log: &mut Vec<Split>, members: &[u32]) -> usize {
        let idx = log.len();
        if members.len() == 1 {
            log.push(Split::Leaf(members[0]));
        } else {
            log.push(Split::Pair(usize::MAX, usize::MAX));
        }
        idx
    }
    let root_idx = alloc(&mut log, &all);
    let mut active: Vec<(usize, Open)> = if n == 1 {
        Vec::new()
    } else {
        vec![(root_idx, Open { members: all })]
    };
    while !active.is_empty() {
        let mut next_active = Vec::new();
        let mut level_partition = Vec::new();
        for (idx, open) in active {
            // resample until this block splits nontrivially
            let (zeros, ones) = loop {
                let mut zeros = Vec::new();
                let mut ones = Vec::new();
                for &id in &open.members {
                    if streams[id as usize].next_bit()? {
                        ones.push(id);
                    } else {
                        zeros.push(id);
                    }
                }
                if !zeros.is_empty() && !ones.is_empty() {
                    break (zeros, ones);
                }
            };
            let li = alloc(&mut log, &zeros);
            let ri = alloc(&mut log, &ones);
            log[idx] = Split::Pair(li, ri);
            level_partition.push(zeros.clone());
            level_partition.push(ones.clone());
            if zeros.len() > 1 {
                next_active.push((li, Open { members: zeros }));
            }
            if ones.len() > 1 {
                next_active.push((ri, Open { members: ones }));
            }
        }
        levels.push(level_partition);
        active = next_active;
    }
    fn assemble(log: &[Split], idx: usize) -> Node {
        match &log[idx] {
            Split::Leaf(id) => Node::Leaf(*id),
            Split::Pair(l, r) => {
                Node::Internal(Box::new(assemble(log, *l)), Box::new(assemble(log, *r)))
            }
        }
    }
    let root = assemble(&log, root_idx);
    Ok(RefinementTree { levels, root, leaf_count: n })
}

/// Height, fillup, leaf depths, and both profiles of a plane tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub n: usize,
    pub height: u32,
    /// `(min leaf depth) - 1`; equals -1 for n = 1.
    pub fillup: i64,
    /// depth per string id
    pub leaf_depths: Vec<u32>,
    /// leaves per depth
    pub external_profile: Vec<u64>,
    /// internal nodes per depth
    pub internal_profile: Vec<u64>,
}

pub fn stats(root: &Node, n: usize) -> TreeStats {
    let mut leaf_depths = vec![0u32; n];
    let mut external = Vec::new();
    let mut internal = Vec::new();
    fn grow(v: &mut Vec<u64>, d: usize) {
        if v.len() <= d {
            v.resize(d + 1, 0);
        }
        v[d] += 1;
    }
    fn walk(
        node: &Node,
        depth: u32,
        leaf_depths: &mut [u32],
        external: &mut Vec<u64>,
        internal: &mut Vec<u64>,
    ) {
        match node {
            Node::Leaf(id) => {
                leaf_depths[*id as usize] = depth;
                grow(external, depth as usize);
            }
            Node::Internal(l, r) => {
                grow(internal, depth as usize);
                walk(l, depth + 1, leaf_depths, external, internal);
                walk(r, depth + 1, leaf_depths, external, internal);
            }
        }
    }
    walk(root, 0, &mut leaf_depths, &mut external, &mut internal);
    let height = *leaf_depths.iter().max().unwrap();
    let fillup = *leaf_depths.iter().min().unwrap() as i64 - 1;
    TreeStats { n, height, fillup, leaf_depths, external_profile: external, internal_profile: internal }
}

/// Order-independent aggregate over trials: exact integer accumulators for
/// the per-level profile moments and the H/F/D histograms.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub n: usize,
    pub p: String,
    pub trials: u64,
    pub seed: u64,
    /// `sum over trials of B_{n,k}` per level k
    pub sum_b: Vec<u64>,
    /// `sum of B_{n,k}^2`
    pub sum_b2: Vec<u128>,
    pub hist_height: Vec<u64>,
    /// histogram of F_n + 1 (so the n = 1 value -1 lands in slot 0)
    pub hist_fillup_plus1: Vec<u64>,
    pub hist_depth: Vec<u64>,
}

impl SimulationSummary {
    pub fn mean_b(&self, k: usize) -> f64 {
        self.sum_b.get(k).map(|&s| s as f64 / self.trials as f64).unwrap_or(0.0)
    }

    pub fn var_b(&self, k: usize) -> f64 {
        let m = self.mean_b(k);
        let sq = self.sum_b2.get(k).map(|&s| s as f64 / self.trials as f64).unwrap_or(0.0);
        sq - m * m
    }

    /// Empirical `Pr[H <= k]`-style tail: `Pr[H > k]`.
    pub fn height_tail_prob(&self, k: usize) -> f64 {
        let above: u64 = self.hist_height.iter().skip(k + 1).sum();
        above as f64 / self.trials as f64
    }

    /// Empirical `Pr[F < k]` = `Pr[F + 1 < k + 1]`.
    pub fn fillup_below_prob(&self, k: i64) -> f64 {
        let below: u64 = self
            .hist_fillup_plus1
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as i64) < k + 1)
            .map(|(_, &c)| c)
            .sum();
        below as f64 / self.trials as f64
    }

    pub fn mean_depth(&self) -> f64 {
        let total: u64 = self.hist_depth.iter().enumerate().map(|(d, &c)| d as u64 * c).sum();
        total as f64 / self.trials as f64
    }
}


#[derive(Default, Clone)]
struct Accum {
    sum_b: Vec<u64>,
    sum_b2: Vec<u128>,
    hist_h: Vec<u64>,
    hist_f: Vec<u64>,
    hist_d: Vec<u64>,
}

impl Accum {
    fn absorb_stats(&mut self, st: &TreeStats, d_n: u32) {
        if self.sum_b.len() < st.external_profile.len() {
            self.sum_b.resize(st.external_profile.len(), 0);
            self.sum_b2.resize(st.external_profile.len(), 0);
        }
        for (k, &b) in st.external_profile.iter().enumerate() {
            self.sum_b[k] += b;
            self.sum_b2[k] += (b as u128) * (b as u128);
        }
        let h = st.height as usize;
        if self.hist_h.len() <= h {
            self.hist_h.resize(h + 1, 0);
        }
        self.hist_h[h] += 1;
        let f = (st.fillup + 1) as usize;
        if self.hist_f.len() <= f {
            self.hist_f.resize(f + 1, 0);
        }
        self.hist_f[f] += 1;
        let d = d_n as usize;
        if self.hist_d.len() <= d {
            self.hist_d.resize(d + 1, 0);
        }
        self.hist_d[d] += 1;
    }

    fn merge(mut self, other: Accum) -> Accum {
        merge_u64(&mut self.sum_b, &other.sum_b);
        merge_u128(&mut self.sum_b2, &other.sum_b2);
        merge_u64(&mut self.hist_h, &other.hist_h);
        merge_u64(&mut self.hist_f, &other.hist_f);
        merge_u64(&mut self.hist_d, &other.hist_d);
        self
    }
}

fn merge_u64(into: &mut Vec<u64>, from: &[u64]) {
    if into.len() < from.len() {
        into.resize(from.len(), 0);
    }
    for (i, &v) in from.iter().enumerate() {
        into[i] += v;
    }
}

fn merge_u128(into: &mut Vec<u128>, from: &[u128]) {
    if into.len() < from.len() {
        into.resize(from.len(), 0);
    }
    for (i, &v) in from.iter().enumerate() {
        into[i] += v;
    }
}

/// Run `trials` independent trials; the summary is deterministic for a
/// fixed `(n, bias, trials, seed)` regardless of parallelism (per-trial
/// seeds are derived from the trial index, and all accumulation is exact
/// integer arithmetic).
pub fn run_trials(n: usize, bias: &Bias, trials: u64, seed: u64) -> Result<SimulationSummary> {
    if trials < 1 {
        return Err(Error::Domain("run_trials: trials >= 1".into()));
    }
    let acc = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Accum> {
            let ts = trial_seed(seed, t);
            let mut streams = draw_streams(n, bias, ts);
            let trie = build_patricia(&mut streams)?;
            let st = stats(&trie.root, n);
            // depth of a uniformly random leaf, from a dedicated stream
            let mut chooser = ChaCha12Rng::from_seed({
                let mut key = [0u8; 32];
                let mut x = splitmix64(ts ^ 0xD1F3_5A7E_9B2C_4E68);
                for chunk in key.chunks_exact_mut(8) {
                    chunk.copy_from_slice(&x.to_le_bytes());
                    x = splitmix64(x);
                }
                key
            });
            chooser.set_stream(u64::MAX);
            let leaf = uniform_below(&mut chooser, n as u64) as usize;
            let mut acc = Accum::default();
            acc.absorb_stats(&st, st.leaf_depths[leaf]);
            Ok(acc)
        })
        .try_reduce(Accum::default, |a, b| Ok(a.merge(b)))?;
    Ok(SimulationSummary {
        n,
        p: bias.p().to_string(),
        trials,
        seed,
        sum_b: acc.sum_b,
        sum_b2: acc.sum_b2,
        hist_height: acc.hist_h,
        hist_fillup_plus1: acc.hist_f,
        hist_depth: acc.hist_d,
    })
}

/// Unbiased uniform draw in `[0, n)` by rejection.
fn uniform_below(rng: &mut ChaCha12Rng, n: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bias(p: &str) -> Bias {
        Bias::from_str(p, 128).unwrap()
    }

    #[test]
    fn streams_deterministic() {
        let b = bias("0.7");
        let mut s1 = draw_streams(3, &b, 42);
        let mut s2 = draw_streams(3, &b, 42);
        for i in 0..3 {
            for _ in 0..200 {
                assert_eq!(s1[i].next_bit().unwrap(), s2[i].next_bit().unwrap());
            }
        }
        let mut s3 = draw_streams(1, &b, 43);
        let different = (0..200).any(|_| {
            s3[0].next_bit().unwrap() != s1[0].next_bit().unwrap()
        });
        assert!(different, "different seeds should decorrelate");
    }

    #[test]
    fn stream_empirical_mean() {
        let b = bias("0.7");
        let mut s = draw_streams(1, &b, 42);
        // raise the guard: this test reads far more bits than a tree build
        s[0].guard = 2_000_000;
        let n = 1_000_000u64;
        let mut ones = 0u64;
        for _ in 0..n {
            if s[0].next_bit().unwrap() {
                ones += 1;
            }
        }
        let mean = ones as f64 / n as f64;
        let sigma = (0.7f64 * 0.3 / n as f64).sqrt();
        assert!((mean - 0.7).abs() < 3.0 * sigma, "bit mean {mean} outside 3 sigma");
    }

    #[test]
    fn degenerate_sizes() {
        let b = bias("0.7");
        let mut s = draw_streams(1, &b, 1);
        let trie = build_patricia(&mut s).unwrap();
        let st = stats(&trie.root, 1);
        assert_eq!(st.height, 0);
        assert_eq!(st.fillup, -1);
        assert_eq!(st.external_profile, vec![1]);
        // n = 2: both leaves at depth 1, whatever the bits
        let mut s = draw_streams(2, &b, 7);
        let trie = build_patricia(&mut s).unwrap();
        let st = stats(&trie.root, 2);
        assert_eq!(st.height, 1);
        assert_eq!(st.fillup, 0);
        assert_eq!(st.external_profile, vec![0, 2]);
        // renyi side: exactly one accepted query above singletons
        let mut s = draw_streams(2, &b, 7);
        let rt = run_renyi(&mut s).unwrap();
        assert_eq!(rt.levels.len(), 2);
    }

    #[test]
    fn patricia_structural_invariants() {
        let b = bias("0.7");
        let mut s = draw_streams(3, &b, 123);
        let trie = build_patricia(&mut s).unwrap();
        let st = stats(&trie.root, 3);
        assert_eq!(st.external_profile.iter().sum::<u64>(), 3);
        // no unary path: every internal node has two children by construction;
        // profile count of internal nodes is n - 1
        assert_eq!(st.internal_profile.iter().sum::<u64>(), 2);
    }

    #[test]
    fn forced_five_string_instance() {
        // Streams forcing the worked five-object example: first query splits
        // {1,5} | {2,3,4}; the second query is inconclusive on {1,5} (both
        // draw 1) and resampled; depths end up (2,3,2,3,2).
        let raw: [&[u8]; 5] = [
            &[1, 1, 1],
            &[0, 0, 0],
            &[0, 1],
            &[0, 0, 1],
            &[1, 1, 0],
        ];
        let mut renyi_streams: Vec<FixedBits> =
            raw.iter().map(|b| FixedBits::from_bits(b)).collect();
        let rt = run_renyi(&mut renyi_streams).unwrap();
        let rs = stats(&rt.root, 5);
        assert_eq!(rs.leaf_depths, vec![2, 3, 2, 3, 2]);
        assert_eq!(rs.external_profile, vec![0, 0, 3, 2]);
        assert_eq!(rs.height, 3);
        assert_eq!(rs.fillup, 1);
        // the number of accepted queries equals the height
        assert_eq!(rt.levels.len() as u32 - 1, rs.height);
        // coupled PATRICIA on the same bits is the identical plane tree
        let mut pat_streams: Vec<FixedBits> =
            raw.iter().map(|b| FixedBits::from_bits(b)).collect();
        let trie = build_patricia(&mut pat_streams).unwrap();
        assert_eq!(trie.root, rt.root);
    }

    #[test]
    fn coupling_isomorphism_random() {
        let b = bias("0.6");
        for seed in 0..50u64 {
            let mut s1 = draw_streams(16, &b, seed);
            let mut s2 = s1.clone();
            let trie = build_patricia(&mut s1).unwrap();
            let rt = run_renyi(&mut s2).unwrap();
            assert_eq!(trie.root, rt.root, "coupling broken at seed {seed}");
            // refinement property: each level refines the previous one
            for w in rt.levels.windows(2) {
                for blk in &w[1] {
                    assert!(
                        w[0].iter().any(|sup| blk.iter().all(|x| sup.contains(x))),
                        "level not a refinement"
                    );
                }
            }
        }
    }

    #[test]
    fn summary_deterministic_and_consistent() {
        let b = bias("0.7");
        let s1 = run_trials(64, &b, 50, 9).unwrap();
        let s2 = run_trials(64, &b, 50, 9).unwrap();
        assert_eq!(s1.sum_b, s2.sum_b);
        assert_eq!(s1.hist_depth, s2.hist_depth);
        // conservation: sum_k B = n per trial
        let total: u64 = s1.sum_b.iter().sum();
        assert_eq!(total, 64 * 50);
        // trials = 1 equals the stats of the single tree
        let single = run_trials(8, &b, 1, 33).unwrap();
        let mut streams = draw_streams(8, &b, trial_seed(33, 0));
        let st = stats(&build_patricia(&mut streams).unwrap().root, 8);
        assert_eq!(single.sum_b, st.external_profile);
    }

    proptest::proptest! {
        // conservation and pathwise ordering on arbitrary (n, p, seed)
        #[test]
        fn conservation_and_ordering(n in 1usize..40, pf in 0.5f64..0.95, seed in 0u64..1000) {
            let b = Bias::from_f64(pf, 128).unwrap();
            let mut streams = draw_streams(n, &b, seed);
            let trie = build_patricia(&mut streams).unwrap();
            let st = stats(&trie.root, n);
            proptest::prop_assert_eq!(st.external_profile.iter().sum::<u64>(), n as u64);
            let min_d = *st.leaf_depths.iter().min().unwrap() as i64;
            let max_d = *st.leaf_depths.iter().max().unwrap();
            proptest::prop_assert_eq!(st.fillup + 1, min_d);
            proptest::prop_assert_eq!(st.height, max_d);
            proptest::prop_assert!(st.fillup + 1 <= st.height as i64);
        }
    }

    #[test]
    fn pathwise_ordering() {
        let b = bias("0.5");
        let sum = run_trials(1024, &b, 200, 4).unwrap();
        // F + 1 <= D <= H pathwise implies the histograms cannot put mass
        // below min(F+1) or above max(H); check the aggregate version
        let min_f1 = sum.hist_fillup_plus1.iter().position(|&c| c > 0).unwrap();
        let max_h = sum.hist_height.iter().rposition(|&c| c > 0).unwrap();
        let min_d = sum.hist_depth.iter().position(|&c| c > 0).unwrap();
        let max_d = sum.hist_depth.iter().rposition(|&c| c > 0).unwrap();
        assert!(min_d >= min_f1);
        assert!(max_d <= max_h);
    }
}
