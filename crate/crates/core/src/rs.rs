//! The rewind simulation over the ternary alphabet `{0, 1, BK}`.
//!
//! Every step, each party re-decodes the full history it received from each
//! neighbour, checks it against its own simulated transcript, and either
//! extends the simulation by one round of the protocol or sends `BK` to undo
//! its last symbol. Symbols travel tree-encoded through the bit-exchange
//! layer, one symbol per link per step.
//!
//! The estimate strings `s` run one position behind the sent strings `w`.
//! They are parsed as if preceded by a placeholder data symbol, so a party
//! that backs out to an empty transcript keeps `|σ| = max(ℓ, 0)`. On a
//! passing check the party appends the decoded neighbour symbol at position
//! `ℓ + 1` of the parsed view, which keeps the estimate aligned with `z`
//! even when a neighbour's raw string ends in `BK`.

use crate::coding::{parse, NodeKey, Sym, SymbolCodec, TreeCode};
use crate::engine::{check_len, common_prefix, EngineError, EngineOutput, RunOptions};
use crate::exchange::BitExchange;
use crate::model::{run_noiseless_rounds, PartyId, Protocol, Topology, Transcript, Transcripts};
use crate::network::{Ledger, LinkChannel, NoiseModel, NoisyLink};
use crate::trace::{EngineKind, StepRecord, Trace, TraceHeader, TreeErrorEvent, TrialReport, TRACE_SCHEMA};

/// Parse an estimate string that trails its sent string by one position.
pub fn parse_estimate(s: &[Sym]) -> Option<Vec<u32>> {
    let mut v = Vec::with_capacity(s.len() + 1);
    v.push(Sym::Data(0));
    v.extend_from_slice(s);
    let mut p = parse(&v)?;
    if !p.is_empty() {
        p.remove(0);
    }
    Some(p)
}

/// Interleave per-neighbour estimates into a received transcript of `rounds`
/// rounds (neighbours in canonical order within each round).
pub(crate) fn flatten(sigma: &[Vec<u32>], rounds: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(rounds * sigma.len());
    for t in 0..rounds {
        for s in sigma {
            out.push(s[t] as u8);
        }
    }
    out
}

pub(crate) struct CheckOutcome {
    pub pass: bool,
    pub ell: i64,
    pub z_hat: Vec<Option<Vec<u32>>>,
    pub sigma: Vec<Vec<u32>>,
}

/// Consistency check at `step` for `party`.
///
/// * `decoded`: per neighbour, the decoded history of length `step - 1`;
/// * `own`: the party's sent strings (one per adjacent link), length `step - 1`;
/// * `estimates`: per neighbour, the estimate strings of length `step - 2`
///   (empty at step 1).
///
/// Returns whether the party may extend the simulation.
pub fn cons_check(
    protocol: &Protocol,
    party: PartyId,
    decoded: &[Vec<Sym>],
    own: &[Vec<Sym>],
    estimates: &[Vec<Sym>],
    step: usize,
) -> Result<bool, EngineError> {
    check_inner(protocol, party, decoded, own, estimates, step).map(|o| o.pass)
}

pub(crate) fn check_inner(
    protocol: &Protocol,
    party: PartyId,
    decoded: &[Vec<Sym>],
    own: &[Vec<Sym>],
    estimates: &[Vec<Sym>],
    step: usize,
) -> Result<CheckOutcome, EngineError> {
    let topo = protocol.topology();
    let heard = topo.heard_from(party);
    check_len("neighbour count", heard.len(), decoded.len())?;
    check_len("estimate count", heard.len(), estimates.len())?;
    check_len("own stream count", topo.send_width(party), own.len())?;
    if step == 0 {
        return Err(EngineError::Config("steps are numbered from 1".into()));
    }
    for d in decoded {
        check_len("decoded history", step - 1, d.len())?;
    }
    for w in own {
        check_len("own history", step - 1, w.len())?;
    }
    for s in estimates {
        check_len("estimate history", step.saturating_sub(2), s.len())?;
    }

    let z: Vec<Vec<u32>> = own
        .iter()
        .map(|w| parse(w).ok_or_else(|| EngineError::Config("own sent string is not parseable".into())))
        .collect::<Result<_, _>>()?;
    let ell = z[0].len() as i64 - 1;
    if z.iter().any(|zi| zi.len() != z[0].len()) {
        return Err(EngineError::Config("per-link sent strings disagree in length".into()));
    }
    let sigma: Vec<Vec<u32>> = estimates
        .iter()
        .map(|s| parse_estimate(s).ok_or_else(|| EngineError::Config("estimate string is not parseable".into())))
        .collect::<Result<_, _>>()?;
    let expect = ell.max(0) as usize;
    for s in &sigma {
        check_len("parsed estimate", expect, s.len())?;
    }
    let z_hat: Vec<Option<Vec<u32>>> = decoded.iter().map(|d| parse(d)).collect();
    // A non-parseable decode counts as length zero.
    let ell_hat = z_hat.iter().map(|z| z.as_ref().map_or(0, Vec::len)).min().unwrap_or(0) as i64;
    let mut outcome = CheckOutcome { pass: false, ell, z_hat, sigma };
    if ell_hat <= ell {
        return Ok(outcome);
    }
    for l in 1..=expect {
        for (k, zh) in outcome.z_hat.iter().enumerate() {
            let zh = zh.as_ref().expect("length test passed");
            if zh[l - 1] != outcome.sigma[k][l - 1] {
                return Ok(outcome);
            }
        }
        let prefix = flatten(&outcome.sigma, l);
        let next = protocol.next_bits(party, &prefix);
        for (i, zi) in z.iter().enumerate() {
            if zi[l] != u32::from(next[i]) {
                return Ok(outcome);
            }
        }
    }
    outcome.pass = true;
    Ok(outcome)
}

/// Where a neighbour's symbols come from: dense party index and which of its
/// sent strings (the central party has one per link).
#[derive(Debug, Clone, Copy)]
pub(crate) struct NeighborRef {
    pub party: usize,
    pub stream: usize,
}

pub(crate) fn neighbor_refs(topo: &Topology, party: PartyId) -> Vec<NeighborRef> {
    topo.heard_from(party)
        .into_iter()
        .map(|p| NeighborRef {
            party: topo.index(p),
            stream: match (p, party) {
                (PartyId::Central, PartyId::Peripheral { link, .. }) => link - 1,
                _ => 0,
            },
        })
        .collect()
}

/// Slot of link member `sender` in the neighbour list of link member
/// `receiver` (member 0 is the central party).
pub(crate) fn neighbor_slot(topo: &Topology, link: usize, receiver: usize, sender: usize) -> usize {
    debug_assert_ne!(receiver, sender);
    if receiver == 0 {
        (link - 1) * topo.n1() + (sender - 1)
    } else if sender == 0 {
        topo.n1() - 1
    } else if sender < receiver {
        sender - 1
    } else {
        sender - 2
    }
}

struct PartyState {
    party: PartyId,
    neighbors: Vec<NeighborRef>,
    w: Vec<Vec<Sym>>,
    keys: Vec<NodeKey>,
    s: Vec<Vec<Sym>>,
    recv: Vec<Vec<u32>>,
    backs: usize,
}

/// The rewind engine bound to a protocol, an inner strategy and a tree code.
pub struct RsEngine<'a> {
    protocol: &'a Protocol,
    exchange: &'a BitExchange,
    tree: &'a TreeCode,
    codec: SymbolCodec,
}

impl<'a> RsEngine<'a> {
    pub fn new(protocol: &'a Protocol, exchange: &'a BitExchange, tree: &'a TreeCode) -> Result<Self, EngineError> {
        let codec = SymbolCodec::new(1);
        if tree.arity() != codec.arity() {
            return Err(EngineError::Config(format!("tree code arity {} but the alphabet needs 3", tree.arity())));
        }
        let need = 2 * protocol.round_count() + 1;
        if tree.depth() < need {
            return Err(EngineError::Config(format!("tree code depth {} below {need}", tree.depth())));
        }
        Ok(Self { protocol, exchange, tree, codec })
    }

    pub fn steps(&self) -> usize {
        2 * self.protocol.round_count()
    }

    pub fn symbol_bits(&self) -> usize {
        self.tree.symbol_bits() as usize
    }

    pub fn per_step_rounds(&self) -> usize {
        self.exchange.rounds_per_symbol(self.symbol_bits())
    }

    pub fn run(&self, noise: &NoiseModel, opts: &RunOptions) -> Result<EngineOutput, EngineError> {
        let topo = *self.protocol.topology();
        let n = topo.n();
        let rc = self.protocol.round_count();
        let steps = self.steps();
        let c = self.symbol_bits();
        let per_step = self.per_step_rounds();

        let mut parties: Vec<PartyState> = topo
            .parties()
            .map(|p| {
                let neighbors = neighbor_refs(&topo, p);
                let k = neighbors.len();
                PartyState {
                    party: p,
                    neighbors,
                    w: vec![Vec::new(); topo.send_width(p)],
                    keys: vec![self.tree.root(); topo.send_width(p)],
                    s: vec![Vec::new(); k],
                    recv: vec![Vec::new(); k],
                    backs: 0,
                }
            })
            .collect();

        let truth = opts.record_trace.then(|| run_noiseless_rounds(self.protocol, steps + 1));
        let mut records = Vec::new();
        let mut report = TrialReport {
            seed: opts.seed,
            steps,
            per_step_rounds: per_step,
            ..TrialReport::default()
        };
        let mut ledger = opts.record_ledger.then(Ledger::default);
        let mut clock = 0u64;

        for step in 1..=steps + 1 {
            let closing = step == steps + 1;
            // Decisions use only state from before this step.
            let mut decisions = Vec::with_capacity(n);
            for q in 0..n {
                decisions.push(self.decide(&parties, q, step, opts, &mut report)?);
            }
            let mut sent_back = vec![false; n];
            for (q, d) in decisions.iter().enumerate() {
                sent_back[q] = self.apply(&mut parties[q], d, step, closing);
            }

            let mut inner_error = vec![false; n];
            if !closing {
                let mut labels: Vec<Vec<u32>> = Vec::with_capacity(n);
                for st in parties.iter_mut() {
                    let mut ls = Vec::with_capacity(st.w.len());
                    for (i, w) in st.w.iter().enumerate() {
                        let child = self.codec.child(*w.last().expect("appended this step"));
                        ls.push(self.tree.label(st.keys[i], child));
                        st.keys[i] = self.tree.child_key(st.keys[i], child);
                    }
                    labels.push(ls);
                }
                for link in 1..=topo.n2() {
                    let members: Vec<usize> = std::iter::once(0)
                        .chain((1..=topo.n1()).map(|pos| topo.index(PartyId::Peripheral { link, pos })))
                        .collect();
                    let payloads: Vec<u64> = members
                        .iter()
                        .map(|&q| u64::from(if q == 0 { labels[0][link - 1] } else { labels[q][0] }))
                        .collect();
                    let mut channel = NoisyLink::new(&topo, noise, link, clock, ledger.as_mut());
                    let est = self.exchange.exchange_symbols(&mut channel, &payloads, c);
                    debug_assert_eq!(channel.rounds_used() as usize, per_step);
                    for (rm, &rq) in members.iter().enumerate() {
                        for (sm, payload) in payloads.iter().enumerate() {
                            if rm == sm {
                                continue;
                            }
                            let got = (est[rm][sm].min(u64::from(self.tree.symbols() - 1))) as u32;
                            report.symbol_decodes += 1;
                            if u64::from(got) != *payload {
                                report.symbol_errors += 1;
                                inner_error[rq] = true;
                            }
                            let slot = neighbor_slot(&topo, link, rm, sm);
                            parties[rq].recv[slot].push(got);
                        }
                    }
                }
                clock += per_step as u64;
            }

            for (q, st) in parties.iter().enumerate() {
                let d = &decisions[q];
                self.check_invariants(st, step, &mut report);
                if truth.is_some() {
                    let (ell, est) = self.estimate_view(st);
                    records.push(StepRecord {
                        party: q,
                        step,
                        ell,
                        backs: st.backs,
                        received_estimate: est,
                        tree_error: d.tree_error,
                        suffix_mismatch: d.suffix,
                        sent_back: sent_back[q],
                        inner_error: inner_error[q],
                    });
                }
            }
        }

        report.rounds = clock;
        report.backs = parties.iter().map(|p| p.backs).collect();

        let truth_rc = crate::model::run_noiseless(self.protocol);
        let mut outputs = Vec::with_capacity(n);
        for st in &parties {
            outputs.push(self.output(st, rc));
        }
        let estimates = Transcripts { topology: topo, rounds: rc, parties: outputs };
        report.party_success = (0..n).map(|q| estimates.parties[q] == truth_rc.parties[q]).collect();
        report.success = report.party_success.iter().all(|&b| b);

        let trace = truth.map(|t| Trace {
            header: TraceHeader {
                schema: TRACE_SCHEMA,
                engine: EngineKind::Rs,
                topology: topo,
                round_count: rc,
                steps,
                ground_truth: t.parties.into_iter().map(|p| p.received).collect(),
            },
            records,
        });
        Ok(EngineOutput { estimates, report, trace, ledger })
    }

    fn decide(
        &self,
        parties: &[PartyState],
        q: usize,
        step: usize,
        opts: &RunOptions,
        report: &mut TrialReport,
    ) -> Result<Decision, EngineError> {
        let st = &parties[q];
        let mut decoded = Vec::with_capacity(st.neighbors.len());
        let mut tree_error = false;
        let mut suffix = 0usize;
        for (k, nb) in st.neighbors.iter().enumerate() {
            let path = self.tree.decode(&st.recv[k])?;
            let mut d: Vec<Sym> = path.into_iter().map(|c| self.codec.symbol(c)).collect();
            if let Some(o) = opts.overrides.iter().find(|o| o.party == st.party && o.step == step && o.neighbor == k) {
                d = o.decoded.clone();
            }
            let actual = &parties[nb.party].w[nb.stream];
            if d != *actual {
                tree_error = true;
                suffix = suffix.max(actual.len() - common_prefix(&d, actual));
            }
            decoded.push(d);
        }
        if tree_error {
            report.tree_errors.push(TreeErrorEvent { party: q, step, suffix });
        }
        let outcome = check_inner(self.protocol, st.party, &decoded, &st.w, &st.s, step)?;
        Ok(Decision { outcome, tree_error, suffix })
    }

    /// Append this step's symbols. Returns whether `BK` was sent.
    fn apply(&self, st: &mut PartyState, d: &Decision, step: usize, closing: bool) -> bool {
        let o = &d.outcome;
        if o.pass {
            if step >= 2 {
                for (k, s) in st.s.iter_mut().enumerate() {
                    let v = if o.ell >= 0 {
                        o.z_hat[k].as_ref().expect("passed")[o.ell as usize]
                    } else {
                        0
                    };
                    s.push(Sym::Data(v));
                }
            }
            let bits = if closing {
                vec![0u8; st.w.len()]
            } else {
                let sigma: Vec<Vec<u32>> = st.s.iter().map(|s| parse_estimate(s).expect("aligned")).collect();
                let rounds = (o.ell + 1) as usize;
                self.protocol.next_bits(st.party, &flatten(&sigma, rounds))
            };
            for (w, b) in st.w.iter_mut().zip(bits) {
                w.push(Sym::Data(u32::from(b)));
            }
            false
        } else {
            for s in st.s.iter_mut() {
                s.push(Sym::Back);
            }
            for w in st.w.iter_mut() {
                w.push(Sym::Back);
            }
            st.backs += 1;
            true
        }
    }

    fn estimate_view(&self, st: &PartyState) -> (i64, Vec<u8>) {
        let ell = parse(&st.w[0]).map_or(-1, |z| z.len() as i64 - 1);
        let sigma: Vec<Vec<u32>> = st.s.iter().map(|s| parse_estimate(s).unwrap_or_default()).collect();
        let rounds = sigma.iter().map(Vec::len).min().unwrap_or(0);
        (ell, flatten(&sigma, rounds))
    }

    fn check_invariants(&self, st: &PartyState, step: usize, report: &mut TrialReport) {
        let z: Vec<Option<Vec<u32>>> = st.w.iter().map(|w| parse(w)).collect();
        if z.iter().any(Option::is_none) {
            report.invariant_violations.push(format!("{} step {step}: sent string not parseable", st.party));
            return;
        }
        let lens: Vec<usize> = z.iter().map(|z| z.as_ref().map_or(0, Vec::len)).collect();
        if lens.iter().any(|&l| l != lens[0]) {
            report.invariant_violations.push(format!("{} step {step}: per-link lengths differ", st.party));
        }
        let ell = lens[0] as i64 - 1;
        if step as i64 != ell + 1 + 2 * st.backs as i64 {
            report
                .invariant_violations
                .push(format!("{} step {step}: r = ℓ + 1 + 2B fails (ℓ={ell}, B={})", st.party, st.backs));
        }
        for s in &st.s {
            match parse_estimate(s) {
                Some(sig) if sig.len() as i64 == ell.max(0) => {}
                _ => report.invariant_violations.push(format!("{} step {step}: |σ| ≠ ℓ", st.party)),
            }
        }
    }

    fn output(&self, st: &PartyState, rc: usize) -> Transcript {
        let z: Vec<Vec<u32>> = st.w.iter().map(|w| parse(w).unwrap_or_default()).collect();
        let sent_rounds = z.iter().map(Vec::len).min().unwrap_or(0).min(rc);
        let mut sent = Vec::with_capacity(sent_rounds * z.len());
        for t in 0..sent_rounds {
            for zi in &z {
                sent.push(zi[t] as u8);
            }
        }
        let sigma: Vec<Vec<u32>> = st.s.iter().map(|s| parse_estimate(s).unwrap_or_default()).collect();
        let recv_rounds = sigma.iter().map(Vec::len).min().unwrap_or(0).min(rc);
        Transcript { sent, received: flatten(&sigma, recv_rounds) }
    }
}

struct Decision {
    outcome: CheckOutcome,
    tree_error: bool,
    suffix: usize,
}

/// Run the rewind engine once.
pub fn run_rs(
    protocol: &Protocol,
    noise: &NoiseModel,
    exchange: &BitExchange,
    tree: &TreeCode,
    opts: &RunOptions,
) -> Result<EngineOutput, EngineError> {
    RsEngine::new(protocol, exchange, tree)?.run(noise, opts)
}
