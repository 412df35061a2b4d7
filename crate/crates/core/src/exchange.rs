//! The inner layer: all `n1 + 1` members of one link learn each other's
//! payloads within a fixed number of fully-utilized rounds.
//!
//! Four strategies are available:
//! * `naive` codes each whole payload with a block code and decodes every
//!   sender independently;
//! * `var` is the two-phase group scheme (repetition inside groups, then a
//!   GV-coded group estimate broadcast slice by slice), with group size
//!   driven by `log n2`;
//! * `basic` is the same structure with group size driven by `log n1`;
//! * `repeat` runs `basic` several times and takes a per-pair majority.
//!
//! The group strategies move one bit per member per run, so a payload of `c`
//! bits costs `c` sequential runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::{build_bsc_code, build_gv_code, BscCode, CodingError, GvCode};
use crate::model::Topology;
use crate::network::LinkChannel;
use crate::util::{ceil_log2, loglog2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExchangeError {
    #[error("invalid exchange configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Coding(#[from] CodingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Naive,
    Basic,
    Var,
    Repeat,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] =
        [StrategyKind::Naive, StrategyKind::Basic, StrategyKind::Var, StrategyKind::Repeat];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Asymptotic,
}

/// Constants of the asymptotic analysis. Only `phase1_c`, `rho`,
/// `group_c_*`, `expansion` and `delta` drive the simulator; the rest are
/// carried for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub naive_c: f64,
    pub phase1_c: f64,
    pub group_c_basic: f64,
    pub group_c_var: f64,
    pub rho: usize,
    /// `None` means `ceil(10/δ²)`.
    pub expansion: Option<usize>,
    pub delta: f64,
    pub repeat_c: f64,
    pub c1: f64,
    pub c2: f64,
    pub small_c: f64,
}

impl Profile {
    pub fn constants(self) -> Constants {
        match self {
            Profile::Desk => Constants {
                naive_c: 20.0,
                phase1_c: 3.0,
                group_c_basic: 1.0,
                group_c_var: 1.0,
                rho: 5,
                expansion: Some(8),
                delta: 0.025,
                repeat_c: 2.0,
                c1: 2.1,
                c2: 1.0 / 100_251.0,
                small_c: 162.0,
            },
            Profile::Asymptotic => {
                let small_c = 162.0;
                Constants {
                    naive_c: 20.0,
                    phase1_c: 3.0,
                    group_c_basic: 250.0 * (2.0 * small_c + 1.0),
                    group_c_var: 250.0 * (2.0 * small_c + 1.0),
                    rho: 5,
                    expansion: None,
                    delta: 0.025,
                    repeat_c: 2.0,
                    c1: 2.1,
                    c2: 1.0 / 100_251.0,
                    small_c,
                }
            }
        }
    }
}

/// Per-field overrides on top of a profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyOverrides {
    pub naive_c: Option<f64>,
    /// Explicit block length of the naive code.
    pub naive_width: Option<usize>,
    pub phase1_c: Option<f64>,
    /// Explicit number of phase-one repetitions.
    pub phase1_reps: Option<usize>,
    pub group_c: Option<f64>,
    pub group_size: Option<usize>,
    pub rho: Option<usize>,
    pub expansion: Option<usize>,
    pub delta: Option<f64>,
    pub repeat_c: Option<f64>,
    pub repeat_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub overrides: StrategyOverrides,
    /// Seed for code construction.
    #[serde(default)]
    pub seed: u64,
}

impl StrategyConfig {
    pub fn desk(kind: StrategyKind) -> Self {
        Self { kind, profile: Profile::Desk, overrides: StrategyOverrides::default(), seed: 0 }
    }
}

/// The two-phase group scheme with concrete parameters.
#[derive(Debug, Clone)]
pub struct Grouped {
    members: usize,
    group_size: usize,
    phase1: usize,
    rho: usize,
    gv: GvCode,
}

/// A strategy resolved for one topology and payload width.
#[derive(Debug, Clone)]
pub enum BitExchange {
    Naive { code: BscCode },
    Basic(Grouped),
    Var(Grouped),
    Repeat { inner: Grouped, count: usize },
}

fn ceil_pos(x: f64) -> usize {
    (x - 1e-9).ceil().max(1.0) as usize
}

impl Grouped {
    pub fn new(members: usize, group_size: usize, phase1: usize, rho: usize, gv: GvCode) -> Result<Self, ExchangeError> {
        if group_size == 0 || group_size > members {
            return Err(ExchangeError::Config(format!(
                "group size {group_size} must lie in 1..={members}"
            )));
        }
        if gv.message_len() != group_size {
            return Err(ExchangeError::Config("GV message length differs from group size".into()));
        }
        if rho == 0 {
            return Err(ExchangeError::Config("rho must be positive".into()));
        }
        Ok(Self { members, group_size, phase1, rho, gv })
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn groups(&self) -> usize {
        self.members.div_ceil(self.group_size)
    }

    pub fn phase1(&self) -> usize {
        self.phase1
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn gv(&self) -> &GvCode {
        &self.gv
    }

    pub fn rounds(&self) -> usize {
        self.phase1 + self.rho * self.gv.expansion()
    }

    /// Exchange one bit per member. Returns `out[q][s]`, member `q`'s
    /// estimate of member `s`'s bit.
    pub fn exchange_bits(&self, link: &mut dyn LinkChannel, bits: &[u8]) -> Vec<Vec<u8>> {
        self.exchange_bits_tampered(link, bits, |_, _| {})
    }

    /// As [`Self::exchange_bits`], but `tamper(q, estimate)` may rewrite
    /// member `q`'s phase-one group estimate before it is encoded.
    pub fn exchange_bits_tampered(
        &self,
        link: &mut dyn LinkChannel,
        bits: &[u8],
        mut tamper: impl FnMut(usize, &mut Vec<u8>),
    ) -> Vec<Vec<u8>> {
        let n = self.members;
        let m = self.group_size;
        let k = self.gv.expansion();
        assert_eq!(link.size(), n, "link size");
        assert_eq!(bits.len(), n, "one bit per member");

        // Phase one: everybody repeats its own bit.
        let mut ones = vec![0usize; n * n];
        for _ in 0..self.phase1 {
            let rx = link.transmit(bits);
            for q in 0..n {
                for s in 0..n {
                    ones[q * n + s] += usize::from(rx[q][s]);
                }
            }
        }
        let heard = |q: usize, s: usize| u8::from(2 * ones[q * n + s] > self.phase1);

        // Each member's estimate of its own group, GV-encoded.
        let encoded: Vec<Vec<u8>> = (0..n)
            .map(|q| {
                let g = q / m;
                let mut est: Vec<u8> = (0..m)
                    .map(|j| {
                        let mem = g * m + j;
                        if mem >= n {
                            0
                        } else if mem == q {
                            bits[q]
                        } else {
                            heard(q, mem)
                        }
                    })
                    .collect();
                tamper(q, &mut est);
                self.gv.encode(&est)
            })
            .collect();

        // Phase two: member q repeats its own K-bit slice rho times.
        let mut slice_ones = vec![0usize; n * n * k];
        let mut sends = vec![0u8; n];
        for t in 0..self.rho * k {
            let b = t % k;
            for q in 0..n {
                sends[q] = encoded[q][(q % m) * k + b];
            }
            let rx = link.transmit(&sends);
            for q in 0..n {
                for s in 0..n {
                    slice_ones[(q * n + s) * k + b] += usize::from(rx[q][s]);
                }
            }
        }

        let mut out = vec![vec![0u8; n]; n];
        for q in 0..n {
            for g in 0..self.groups() {
                let mut u: Vec<Option<u8>> = Vec::with_capacity(m * k);
                for j in 0..m {
                    let mem = g * m + j;
                    for b in 0..k {
                        u.push(if mem >= n {
                            None
                        } else if mem == q {
                            Some(encoded[q][j * k + b])
                        } else {
                            Some(u8::from(2 * slice_ones[(q * n + mem) * k + b] > self.rho))
                        });
                    }
                }
                let v = self.gv.decode_masked(&u);
                for j in 0..m {
                    let mem = g * m + j;
                    if mem < n {
                        out[q][mem] = v[j];
                    }
                }
            }
            out[q][q] = bits[q];
        }
        out
    }
}

impl BitExchange {
    /// Resolve `config` for links of `topology` carrying `payload_bits`-bit
    /// payloads. Returns the strategy and any precondition warnings.
    pub fn resolve(
        config: &StrategyConfig,
        topology: &Topology,
        payload_bits: usize,
    ) -> Result<(BitExchange, Vec<String>), ExchangeError> {
        if payload_bits == 0 || payload_bits > 63 {
            return Err(ExchangeError::Config(format!("payload width {payload_bits} outside 1..=63")));
        }
        let base = config.profile.constants();
        let o = &config.overrides;
        let n1 = topology.n1() as f64;
        let n2 = topology.n2() as f64;
        let members = topology.n1() + 1;
        let mut warnings = Vec::new();

        let grouped = |group_c: f64, log_arg: f64, loglog_arg: f64, warnings: &mut Vec<String>| {
            let group_c = o.group_c.unwrap_or(group_c);
            let mut m = o.group_size.unwrap_or_else(|| ceil_pos(group_c * log_arg.log2()));
            if m > members {
                let msg = format!("group size {m} exceeds link size {members}; clamped to a single group");
                log::warn!("{msg}");
                warnings.push(msg);
                m = members;
            }
            let phase1 = o.phase1_reps.unwrap_or_else(|| {
                let c = o.phase1_c.unwrap_or(base.phase1_c);
                ceil_pos(c * loglog2(loglog_arg).ceil().max(1.0))
            });
            let rho = o.rho.unwrap_or(base.rho);
            let delta = o.delta.unwrap_or(base.delta);
            let expansion = o.expansion.or(base.expansion);
            let gv = build_gv_code(m, delta, expansion, config.seed ^ 0x6756)?;
            Grouped::new(members, m, phase1, rho, gv)
        };

        let strategy = match config.kind {
            StrategyKind::Naive => {
                let width = o.naive_width.unwrap_or_else(|| {
                    let c = o.naive_c.unwrap_or(base.naive_c);
                    ceil_pos(c * (topology.n() as f64).log2())
                });
                if width < payload_bits {
                    return Err(ExchangeError::Config(format!(
                        "naive width {width} is shorter than the {payload_bits}-bit payload"
                    )));
                }
                BitExchange::Naive { code: build_bsc_code(payload_bits, width, config.seed ^ 0x4E41)? }
            }
            StrategyKind::Basic => BitExchange::Basic(grouped(base.group_c_basic, n1, n1, &mut warnings)?),
            StrategyKind::Var => BitExchange::Var(grouped(base.group_c_var, n2, n2, &mut warnings)?),
            StrategyKind::Repeat => {
                let inner = grouped(base.group_c_basic, n1, n1, &mut warnings)?;
                let count = o.repeat_count.unwrap_or_else(|| {
                    let c = o.repeat_c.unwrap_or(base.repeat_c);
                    ceil_pos(c * n2.log2() / n1.log2().max(1.0))
                });
                if count == 0 {
                    return Err(ExchangeError::Config("repeat count must be positive".into()));
                }
                BitExchange::Repeat { inner, count }
            }
        };
        Ok((strategy, warnings))
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            BitExchange::Naive { .. } => StrategyKind::Naive,
            BitExchange::Basic(_) => StrategyKind::Basic,
            BitExchange::Var(_) => StrategyKind::Var,
            BitExchange::Repeat { .. } => StrategyKind::Repeat,
        }
    }

    /// Network rounds spent exchanging one `payload_bits`-bit payload.
    pub fn rounds_per_symbol(&self, payload_bits: usize) -> usize {
        match self {
            BitExchange::Naive { code } => code.block_len(),
            BitExchange::Basic(g) | BitExchange::Var(g) => payload_bits * g.rounds(),
            BitExchange::Repeat { inner, count } => payload_bits * count * inner.rounds(),
        }
    }

    /// Exchange one payload per member. `out[q][s]` is member `q`'s estimate
    /// of member `s`'s payload; own payloads are always exact.
    pub fn exchange_symbols(&self, link: &mut dyn LinkChannel, payloads: &[u64], payload_bits: usize) -> Vec<Vec<u64>> {
        let n = link.size();
        assert_eq!(payloads.len(), n);
        match self {
            BitExchange::Naive { code } => exchange_naive(link, code, payloads),
            _ => {
                let mut out = vec![vec![0u64; n]; n];
                for b in 0..payload_bits {
                    let shift = payload_bits - 1 - b;
                    let bits: Vec<u8> = payloads.iter().map(|p| ((p >> shift) & 1) as u8).collect();
                    let est = self.exchange_bits(link, &bits);
                    for q in 0..n {
                        for s in 0..n {
                            out[q][s] |= u64::from(est[q][s]) << shift;
                        }
                    }
                }
                out
            }
        }
    }

    /// One-bit exchange for the group strategies; the naive strategy codes
    /// the single bit with its block code.
    pub fn exchange_bits(&self, link: &mut dyn LinkChannel, bits: &[u8]) -> Vec<Vec<u8>> {
        match self {
            BitExchange::Naive { code } => {
                let p: Vec<u64> = bits.iter().map(|&b| u64::from(b)).collect();
                assert_eq!(code.message_len(), 1, "naive bit exchange needs a one-bit code");
                exchange_naive(link, code, &p).into_iter().map(|r| r.into_iter().map(|v| v as u8).collect()).collect()
            }
            BitExchange::Basic(g) | BitExchange::Var(g) => g.exchange_bits(link, bits),
            BitExchange::Repeat { inner, count } => exchange_repeat(link, inner, *count, bits),
        }
    }
}

/// Every member broadcasts its coded payload; receivers decode each sender
/// on its own.
pub fn exchange_naive(link: &mut dyn LinkChannel, code: &BscCode, payloads: &[u64]) -> Vec<Vec<u64>> {
    let n = link.size();
    let words: Vec<Vec<u8>> = payloads.iter().map(|&p| code.encode(p)).collect();
    let mut heard = vec![vec![Vec::with_capacity(code.block_len()); n]; n];
    let mut sends = vec![0u8; n];
    for t in 0..code.block_len() {
        for q in 0..n {
            sends[q] = words[q][t];
        }
        let rx = link.transmit(&sends);
        for q in 0..n {
            for s in 0..n {
                heard[q][s].push(rx[q][s]);
            }
        }
    }
    (0..n)
        .map(|q| (0..n).map(|s| if s == q { payloads[q] } else { code.decode(&heard[q][s]) }).collect())
        .collect()
}

/// Run the basic exchange `count` times on the same bits and take a
/// per-pair majority (ties to 0).
pub fn exchange_repeat(link: &mut dyn LinkChannel, inner: &Grouped, count: usize, bits: &[u8]) -> Vec<Vec<u8>> {
    let n = link.size();
    let mut ones = vec![vec![0usize; n]; n];
    for _ in 0..count {
        let est = inner.exchange_bits(link, bits);
        for q in 0..n {
            for s in 0..n {
                ones[q][s] += usize::from(est[q][s]);
            }
        }
    }
    (0..n)
        .map(|q| {
            (0..n)
                .map(|s| if s == q { bits[q] } else { u8::from(2 * ones[q][s] > count) })
                .collect()
        })
        .collect()
}

/// Helper for reporting: the payload width the rewind engine needs for a
/// tree code alphabet of `symbols` labels.
pub fn symbol_width(symbols: u32) -> usize {
    ceil_log2(u64::from(symbols)).max(1) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NoiseModel, NoisyLink};

    #[test]
    fn desk_round_formulas() {
        let topo = Topology::new(7, 4).unwrap();
        let (basic, _) = BitExchange::resolve(&StrategyConfig::desk(StrategyKind::Basic), &topo, 1).unwrap();
        // m = ceil(log2 7) = 3, phase one = 3·ceil(loglog 7) = 6, then 5·8.
        match &basic {
            BitExchange::Basic(g) => {
                assert_eq!(g.group_size(), 3);
                assert_eq!(g.phase1(), 6);
            }
            _ => unreachable!(),
        }
        assert_eq!(basic.rounds_per_symbol(1), 6 + 40);
        assert_eq!(basic.rounds_per_symbol(9), 9 * 46);
        let (naive, _) = BitExchange::resolve(&StrategyConfig::desk(StrategyKind::Naive), &topo, 9).unwrap();
        assert_eq!(naive.rounds_per_symbol(9), (20.0 * 29f64.log2()).ceil() as usize);
    }

    #[test]
    fn clamping_warns() {
        let topo = Topology::new(1, 1).unwrap();
        let mut cfg = StrategyConfig::desk(StrategyKind::Var);
        cfg.overrides.group_size = Some(5);
        let (s, warnings) = BitExchange::resolve(&cfg, &topo, 1).unwrap();
        assert_eq!(warnings.len(), 1);
        match s {
            BitExchange::Var(g) => assert_eq!(g.group_size(), 2),
            _ => unreachable!(),
        }
    }

    #[test]
    fn noiseless_exchange_is_exact_for_all_strategies() {
        let topo = Topology::new(3, 4).unwrap();
        let noise = NoiseModel::noiseless();
        for kind in StrategyKind::ALL {
            let (s, _) = BitExchange::resolve(&StrategyConfig::desk(kind), &topo, 3).unwrap();
            let mut link = NoisyLink::new(&topo, &noise, 1, 0, None);
            let payloads = [5u64, 0, 7, 2];
            let out = s.exchange_symbols(&mut link, &payloads, 3);
            for row in &out {
                assert_eq!(row, &payloads.to_vec(), "{kind:?}");
            }
            assert_eq!(link.rounds_used() as usize, s.rounds_per_symbol(3), "{kind:?}");
        }
    }
}
