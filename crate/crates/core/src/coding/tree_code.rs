use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CodingError;
use crate::util::{ceil_log2, from_bits, gcd, hash_words, mix64, mod_inverse, to_bits};

/// Identifies a tree node. Derived from the root seed and the child indices
/// along the path, so labels never need to be materialized.
pub type NodeKey = u64;

const CHILD_STEP: u64 = 0xD6E8_FEB8_6659_FD93;

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Alphabet size sufficient for a tree code of arity `d` and distance `alpha`:
/// `2·floor((2^h(α)·2d)^(1/(1-α))) - 1`.
pub fn default_alphabet_size(d: u32, alpha: f64) -> u64 {
    let base = 2f64.powf(binary_entropy(alpha)) * 2.0 * f64::from(d);
    let inner = base.powf(1.0 / (1.0 - alpha));
    // Guard against 143.99999 style rounding before the floor.
    2 * (inner + 1e-9).floor() as u64 - 1
}

/// A pair of equal-length paths whose labels are closer than the distance
/// property allows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub depth: usize,
    pub lca: usize,
    pub first: Vec<u32>,
    pub second: Vec<u32>,
    pub distance: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeCodeOptions {
    /// Output alphabet size. Defaults to the existence bound.
    pub symbols: Option<u32>,
    /// Depth up to which encoding and decoding are allowed. Defaults to the
    /// verified depth; may exceed it when exhaustive checking is infeasible.
    pub depth: Option<usize>,
    /// Total number of node resamplings before giving up.
    pub max_resamples: usize,
}

impl Default for TreeCodeOptions {
    fn default() -> Self {
        Self { symbols: None, depth: None, max_resamples: 20_000 }
    }
}

/// Serializable description from which a [`TreeCode`] is rebuilt bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCodeDescriptor {
    pub arity: u32,
    pub alpha: f64,
    pub symbols: u32,
    pub seed: u64,
    pub depth: usize,
    pub verified_depth: usize,
    pub overrides: Vec<(u64, u32)>,
}

/// A lazily labelled `arity`-ary tree code over an alphabet of `symbols`
/// labels.
///
/// The children of every node get distinct labels through a per-node affine
/// map `a ↦ (mult·a + add) mod |S|` with `mult` invertible, so the child
/// carrying a given label is found in constant time. Resampling a node only
/// bumps its salt in `overrides`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCode {
    arity: u32,
    alpha: f64,
    symbols: u32,
    seed: u64,
    depth: usize,
    verified_depth: usize,
    overrides: BTreeMap<u64, u32>,
}

/// Build a tree code whose distance property is verified exhaustively up to
/// `depth`, with the default alphabet size.
pub fn build_tree_code(arity: u32, alpha: f64, depth: usize, seed: u64) -> Result<TreeCode, CodingError> {
    TreeCode::build(arity, alpha, depth, seed, TreeCodeOptions::default())
}

#[derive(Clone, Copy)]
struct NodeMap {
    mult: u64,
    inv: u64,
    add: u64,
}

impl TreeCode {
    pub fn build(
        arity: u32,
        alpha: f64,
        verify_depth: usize,
        seed: u64,
        opts: TreeCodeOptions,
    ) -> Result<TreeCode, CodingError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CodingError::InvalidParameter(format!("alpha {alpha} outside (0,1)")));
        }
        if arity < 2 {
            return Err(CodingError::InvalidParameter(format!("arity {arity} below 2")));
        }
        let symbols = match opts.symbols {
            Some(s) => s,
            None => u32::try_from(default_alphabet_size(arity, alpha)).map_err(|_| {
                CodingError::InvalidParameter("default alphabet does not fit in 32 bits".into())
            })?,
        };
        if symbols < arity {
            return Err(CodingError::InvalidParameter(format!(
                "alphabet of {symbols} labels cannot separate {arity} children"
            )));
        }
        let depth = opts.depth.unwrap_or(verify_depth).max(verify_depth);
        let mut tc = TreeCode {
            arity,
            alpha,
            symbols,
            seed,
            depth,
            verified_depth: 0,
            overrides: BTreeMap::new(),
        };
        let mut resamples = 0usize;
        for level in 1..=verify_depth {
            loop {
                match tc.first_violation_at(level) {
                    None => break,
                    Some(v) => {
                        resamples += 1;
                        if resamples > opts.max_resamples {
                            return Err(CodingError::ConstructionFailed {
                                what: "tree code",
                                attempts: opts.max_resamples,
                            });
                        }
                        // Relabel the children of the deepest node on the
                        // offending path; shallower levels stay intact.
                        let key = tc.key_of(&v.second[..level - 1]);
                        *tc.overrides.entry(key).or_insert(0) += 1;
                    }
                }
            }
            tc.verified_depth = level;
        }
        log::debug!("tree code built after {resamples} resamples");
        Ok(tc)
    }

    pub fn from_descriptor(d: &TreeCodeDescriptor) -> TreeCode {
        TreeCode {
            arity: d.arity,
            alpha: d.alpha,
            symbols: d.symbols,
            seed: d.seed,
            depth: d.depth,
            verified_depth: d.verified_depth,
            overrides: d.overrides.iter().copied().collect(),
        }
    }

    pub fn descriptor(&self) -> TreeCodeDescriptor {
        TreeCodeDescriptor {
            arity: self.arity,
            alpha: self.alpha,
            symbols: self.symbols,
            seed: self.seed,
            depth: self.depth,
            verified_depth: self.verified_depth,
            overrides: self.overrides.iter().map(|(k, v)| (*k, *v)).collect(),
        }
    }

    pub fn arity(&self) -> u32 {
        self.arity
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn symbols(&self) -> u32 {
        self.symbols
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn verified_depth(&self) -> usize {
        self.verified_depth
    }

    /// Same labels, but allow encoding and decoding down to `depth`.
    pub fn with_depth(mut self, depth: usize) -> TreeCode {
        self.depth = depth.max(self.verified_depth);
        self
    }

    /// Width in bits of one packed output symbol.
    pub fn symbol_bits(&self) -> u32 {
        ceil_log2(u64::from(self.symbols)).max(1)
    }

    pub fn symbol_to_bits(&self, label: u32) -> Vec<u8> {
        to_bits(u64::from(label), self.symbol_bits() as usize)
    }

    /// Unused codepoints are clamped to the largest valid label.
    pub fn symbol_from_bits(&self, bits: &[u8]) -> u32 {
        (from_bits(bits).min(u64::from(self.symbols - 1))) as u32
    }

    pub fn root(&self) -> NodeKey {
        mix64(self.seed)
    }

    pub fn child_key(&self, key: NodeKey, child: u32) -> NodeKey {
        mix64(key ^ (u64::from(child) + 1).wrapping_mul(CHILD_STEP))
    }

    fn key_of(&self, path: &[u32]) -> NodeKey {
        path.iter().fold(self.root(), |k, &c| self.child_key(k, c))
    }

    fn node_map(&self, key: NodeKey) -> NodeMap {
        let n = u64::from(self.symbols);
        let salt = self.overrides.get(&key).copied().unwrap_or(0);
        let mut h = hash_words(key, &[u64::from(salt)]);
        let add = h % n;
        loop {
            h = mix64(h);
            let mult = if n == 1 { 0 } else { 1 + h % (n - 1) };
            if gcd(mult, n) == 1 {
                let inv = mod_inverse(mult, n).expect("unit has an inverse");
                return NodeMap { mult, inv, add };
            }
        }
    }

    /// Label on the edge from node `key` to its child `child`.
    pub fn label(&self, key: NodeKey, child: u32) -> u32 {
        let m = self.node_map(key);
        ((m.mult * u64::from(child) + m.add) % u64::from(self.symbols)) as u32
    }

    /// The child of `key` whose edge carries `label`, if any.
    pub fn child_for_label(&self, key: NodeKey, label: u32) -> Option<u32> {
        let m = self.node_map(key);
        let n = u64::from(self.symbols);
        let l = u64::from(label) % n;
        let a = ((l + n - m.add) % n) * m.inv % n;
        (a < u64::from(self.arity)).then_some(a as u32)
    }

    fn check_depth(&self, len: usize) -> Result<(), CodingError> {
        if len > self.depth {
            Err(CodingError::DepthExceeded { requested: len, max: self.depth })
        } else {
            Ok(())
        }
    }

    pub fn encode(&self, path: &[u32]) -> Result<Vec<u32>, CodingError> {
        self.check_depth(path.len())?;
        let mut key = self.root();
        let mut out = Vec::with_capacity(path.len());
        for &c in path {
            debug_assert!(c < self.arity);
            out.push(self.label(key, c));
            key = self.child_key(key, c);
        }
        Ok(out)
    }

    /// Minimum-distance decoding by branch and bound; ties go to the
    /// lexicographically smallest path. Agrees with [`Self::decode_exhaustive`].
    pub fn decode(&self, y: &[u32]) -> Result<Vec<u32>, CodingError> {
        self.check_depth(y.len())?;
        let mut greedy = Vec::with_capacity(y.len());
        let mut key = self.root();
        let mut cost = 0usize;
        for &label in y {
            let c = self.child_for_label(key, label).unwrap_or_else(|| {
                cost += 1;
                0
            });
            greedy.push(c);
            key = self.child_key(key, c);
        }
        if cost == 0 {
            return Ok(greedy);
        }
        let mut search = Search {
            tc: self,
            y,
            best: greedy,
            best_cost: cost,
            found: false,
            path: Vec::with_capacity(y.len()),
        };
        search.dfs(self.root(), 0);
        Ok(search.best)
    }

    /// Reference decoder: enumerate every path of length `|y|`.
    pub fn decode_exhaustive(&self, y: &[u32]) -> Result<Vec<u32>, CodingError> {
        self.check_depth(y.len())?;
        let mut best = (usize::MAX, Vec::new());
        let mut path = Vec::with_capacity(y.len());
        self.enumerate(self.root(), y, 0, &mut path, &mut best);
        Ok(best.1)
    }

    fn enumerate(&self, key: NodeKey, y: &[u32], cost: usize, path: &mut Vec<u32>, best: &mut (usize, Vec<u32>)) {
        let t = path.len();
        if t == y.len() {
            if cost < best.0 {
                *best = (cost, path.clone());
            }
            return;
        }
        for c in 0..self.arity {
            let extra = usize::from(self.label(key, c) != y[t]);
            path.push(c);
            self.enumerate(self.child_key(key, c), y, cost + extra, path, best);
            path.pop();
        }
    }

    /// All paths of length `level` in lexicographic order with their labels.
    fn paths_at(&self, level: usize) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
        let mut paths = vec![Vec::new()];
        let mut labels = vec![Vec::new()];
        let mut keys = vec![self.root()];
        for _ in 0..level {
            let mut np = Vec::with_capacity(paths.len() * self.arity as usize);
            let mut nl = Vec::with_capacity(np.capacity());
            let mut nk = Vec::with_capacity(np.capacity());
            for ((p, l), &k) in paths.iter().zip(&labels).zip(&keys) {
                for c in 0..self.arity {
                    let mut p2 = p.clone();
                    p2.push(c);
                    let mut l2 = l.clone();
                    l2.push(self.label(k, c));
                    np.push(p2);
                    nl.push(l2);
                    nk.push(self.child_key(k, c));
                }
            }
            paths = np;
            labels = nl;
            keys = nk;
        }
        (paths, labels)
    }

    fn first_violation_at(&self, level: usize) -> Option<Violation> {
        let (paths, labels) = self.paths_at(level);
        for i in 0..paths.len() {
            for j in i + 1..paths.len() {
                let lca = paths[i].iter().zip(&paths[j]).take_while(|(a, b)| a == b).count();
                if lca + 1 >= level {
                    // Siblings always differ in their final label.
                    continue;
                }
                let distance = labels[i][lca..].iter().zip(&labels[j][lca..]).filter(|(a, b)| a != b).count();
                if (distance as f64) + 1e-9 < self.alpha * (level - lca) as f64 {
                    return Some(Violation {
                        depth: level,
                        lca,
                        first: paths[i].clone(),
                        second: paths[j].clone(),
                        distance,
                    });
                }
            }
        }
        None
    }

    /// Check every pair of equal-length paths up to `depth`.
    pub fn verify_exhaustive(&self, depth: usize) -> Result<(), Violation> {
        for level in 1..=depth {
            if let Some(v) = self.first_violation_at(level) {
                return Err(v);
            }
        }
        Ok(())
    }

    /// Spot-check random path pairs of length `depth` that diverge at a
    /// random level. Useful past the exhaustively verified depth.
    pub fn verify_sampled(&self, depth: usize, samples: usize, seed: u64) -> Result<(), Violation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let lca = rng.gen_range(0..depth);
            let prefix: Vec<u32> = (0..lca).map(|_| rng.gen_range(0..self.arity)).collect();
            let a0 = rng.gen_range(0..self.arity);
            let b0 = (a0 + rng.gen_range(1..self.arity)) % self.arity;
            let mut first = prefix.clone();
            let mut second = prefix;
            first.push(a0);
            second.push(b0);
            for _ in lca + 1..depth {
                first.push(rng.gen_range(0..self.arity));
                second.push(rng.gen_range(0..self.arity));
            }
            let la = self.labels_unchecked(&first);
            let lb = self.labels_unchecked(&second);
            let distance = la[lca..].iter().zip(&lb[lca..]).filter(|(a, b)| a != b).count();
            if (distance as f64) + 1e-9 < self.alpha * (depth - lca) as f64 {
                return Err(Violation { depth, lca, first, second, distance });
            }
        }
        Ok(())
    }

    fn labels_unchecked(&self, path: &[u32]) -> Vec<u32> {
        let mut key = self.root();
        path.iter()
            .map(|&c| {
                let l = self.label(key, c);
                key = self.child_key(key, c);
                l
            })
            .collect()
    }
}

struct Search<'a> {
    tc: &'a TreeCode,
    y: &'a [u32],
    best: Vec<u32>,
    best_cost: usize,
    /// Whether the depth-first walk has reached a leaf yet. Before that, the
    /// greedy bound may be matched by a lexicographically smaller path.
    found: bool,
    path: Vec<u32>,
}

impl Search<'_> {
    fn allowed(&self, cost: usize) -> bool {
        if self.found {
            cost < self.best_cost
        } else {
            cost <= self.best_cost
        }
    }

    fn dfs(&mut self, key: NodeKey, partial: usize) {
        let t = self.path.len();
        if t == self.y.len() {
            if !self.found || partial < self.best_cost {
                self.best.clone_from(&self.path);
                self.best_cost = partial;
            }
            self.found = true;
            return;
        }
        let matched = self.tc.child_for_label(key, self.y[t]);
        if !self.allowed(partial + 1) {
            if let Some(c) = matched {
                if self.allowed(partial) {
                    self.path.push(c);
                    self.dfs(self.tc.child_key(key, c), partial);
                    self.path.pop();
                }
            }
            return;
        }
        for c in 0..self.tc.arity {
            let cost = partial + usize::from(Some(c) != matched);
            if !self.allowed(cost) {
                continue;
            }
            self.path.push(c);
            self.dfs(self.tc.child_key(key, c), cost);
            self.path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_bound_for_ternary_half() {
        assert_eq!(default_alphabet_size(3, 0.5), 287);
        assert_eq!(ceil_log2(287), 9);
    }

    #[test]
    fn siblings_get_distinct_labels() {
        let tc = TreeCode::build(5, 0.5, 1, 3, TreeCodeOptions { symbols: Some(8), ..Default::default() }).unwrap();
        let root = tc.root();
        let mut labels: Vec<u32> = (0..5).map(|c| tc.label(root, c)).collect();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 5);
        for c in 0..5 {
            assert_eq!(tc.child_for_label(root, tc.label(root, c)), Some(c));
        }
    }

    #[test]
    fn binary_depth_one_is_always_fine() {
        let tc = build_tree_code(2, 0.9, 1, 11).unwrap();
        assert!(tc.verify_exhaustive(1).is_ok());
    }

    #[test]
    fn depth_is_enforced() {
        let tc = build_tree_code(3, 0.5, 2, 1).unwrap();
        assert!(matches!(tc.encode(&[0, 1, 2]), Err(CodingError::DepthExceeded { .. })));
        let tc = tc.with_depth(5);
        assert_eq!(tc.encode(&[0, 1, 2]).unwrap().len(), 3);
    }

    #[test]
    fn descriptor_round_trip() {
        let tc = TreeCode::build(3, 0.5, 4, 9, TreeCodeOptions { symbols: Some(16), ..Default::default() }).unwrap();
        let json = serde_json::to_string(&tc.descriptor()).unwrap();
        let back = TreeCode::from_descriptor(&serde_json::from_str(&json).unwrap());
        assert_eq!(back, tc);
    }

    #[test]
    fn clamps_unused_codepoints() {
        let tc = TreeCode::build(3, 0.5, 1, 0, TreeCodeOptions { symbols: Some(5), ..Default::default() }).unwrap();
        assert_eq!(tc.symbol_bits(), 3);
        assert_eq!(tc.symbol_from_bits(&[1, 1, 1]), 4);
        assert_eq!(tc.symbol_from_bits(&tc.symbol_to_bits(3)), 3);
    }
}
