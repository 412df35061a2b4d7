use crate::coding::{parse, BscCode, NodeKey, Sym, SymbolCodec, TreeCode};
use crate::engine::{common_prefix, EngineError, EngineOutput, RunOptions};
use crate::model::{run_noiseless, run_noiseless_rounds, PartyId, Protocol, Topology, Transcript, Transcripts};
use crate::network::{Ledger, LinkChannel, NoiseModel, NoisyLink};
use crate::rs::{neighbor_refs, neighbor_slot, parse_estimate, NeighborRef};
use crate::trace::{EngineKind, StepRecord, Trace, TraceHeader, TreeErrorEvent, TrialReport, TRACE_SCHEMA};

use super::check::{check_chunked, ChunkOutcome};
use super::tree::{
    bit_at, extend_central, extend_peripheral, level_offset, pack_bits, pack_payload, ProtocolTree,
};
use super::ChunkAlphabets;

const OPEN_DEPTH: usize = usize::MAX / 4;

struct PartyState {
    party: PartyId,
    neighbors: Vec<NeighborRef>,
    w: Vec<Vec<Sym>>,
    keys: Vec<NodeKey>,
    s: Vec<Vec<Sym>>,
    recv: Vec<Vec<u32>>,
    backs: usize,
}

struct Decision {
    outcome: ChunkOutcome,
    tree_error: bool,
    suffix: usize,
}

/// Send one codeword per link member over `link` (silent members send
/// zeros) and return `heard[receiver][sender]` as raw bit strings.
fn broadcast_words(
    topo: &Topology,
    noise: &NoiseModel,
    link: usize,
    start: u64,
    ledger: Option<&mut Ledger>,
    words: &[Vec<u8>],
    len: usize,
) -> Vec<Vec<Vec<u8>>> {
    let n = words.len();
    let mut channel = NoisyLink::new(topo, noise, link, start, ledger);
    let mut heard = vec![vec![Vec::with_capacity(len); n]; n];
    let mut sends = vec![0u8; n];
    for t in 0..len {
        for (s, w) in words.iter().enumerate() {
            sends[s] = w.get(t).copied().unwrap_or(0);
        }
        let rx = channel.transmit(&sends);
        for q in 0..n {
            for s in 0..n {
                heard[q][s].push(rx[q][s]);
            }
        }
    }
    debug_assert_eq!(channel.rounds_used() as usize, len);
    heard
}

fn link_members(topo: &Topology, link: usize) -> Vec<usize> {
    std::iter::once(0)
        .chain((1..=topo.n1()).map(|pos| topo.index(PartyId::Peripheral { link, pos })))
        .collect()
}

/// Replay a peripheral's estimates (mates first, central last) into its
/// received transcript.
fn peripheral_path(protocol: &Protocol, party: PartyId, sigma: &[Vec<u32>], k: usize) -> Result<Vec<u8>, EngineError> {
    let PartyId::Peripheral { link, pos } = party else { unreachable!("peripheral only") };
    let chunks = sigma.iter().map(Vec::len).min().unwrap_or(0);
    let mut address = Vec::new();
    let mut mates = vec![0u32; sigma.len() - 1];
    for l in 0..chunks {
        for (m, s) in mates.iter_mut().zip(sigma) {
            *m = s[l];
        }
        extend_peripheral(protocol, link, pos, &mut address, &mates, sigma[sigma.len() - 1][l], k)?;
    }
    Ok(address)
}

fn central_path(protocol: &Protocol, sigma: &[Vec<u32>], k: usize) -> Result<Vec<u8>, EngineError> {
    let chunks = sigma.iter().map(Vec::len).min().unwrap_or(0);
    let mut address = Vec::new();
    let mut chunk = vec![0u32; sigma.len()];
    for l in 0..chunks {
        for (c, s) in chunk.iter_mut().zip(sigma) {
            *c = s[l];
        }
        extend_central(protocol, &mut address, &chunk, k)?;
    }
    Ok(address)
}

struct ChunkedEngine<'a> {
    protocol: &'a Protocol,
    alphabets: &'a ChunkAlphabets,
    tree_nc: &'a TreeCode,
    tree_c: &'a TreeCode,
    codec_nc: SymbolCodec,
    codec_c: SymbolCodec,
    k: usize,
}

impl<'a> ChunkedEngine<'a> {
    fn coder(&self, sender: PartyId) -> (&'a TreeCode, SymbolCodec) {
        if sender == PartyId::Central {
            (self.tree_c, self.codec_c)
        } else {
            (self.tree_nc, self.codec_nc)
        }
    }

    fn sigma(st: &PartyState) -> Vec<Vec<u32>> {
        st.s.iter()
            .map(|s| if st.party == PartyId::Central { parse(s) } else { parse_estimate(s) }.unwrap_or_default())
            .collect()
    }

    fn path(&self, st: &PartyState) -> Result<Vec<u8>, EngineError> {
        let sigma = Self::sigma(st);
        match st.party {
            PartyId::Central => central_path(self.protocol, &sigma, self.k),
            p => peripheral_path(self.protocol, p, &sigma, self.k),
        }
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
        let topo = self.protocol.topology();
        let mut decoded = Vec::with_capacity(st.neighbors.len());
        let mut tree_error = false;
        let mut suffix = 0usize;
        for (slot, nb) in st.neighbors.iter().enumerate() {
            let (tree, codec) = self.coder(topo.party(nb.party));
            let mut d: Vec<Sym> = tree.decode(&st.recv[slot])?.into_iter().map(|c| codec.symbol(c)).collect();
            if let Some(o) = opts.overrides.iter().find(|o| o.party == st.party && o.step == step && o.neighbor == slot) {
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
        let outcome = check_chunked(self.protocol, st.party, self.k, &decoded, &st.w, &st.s, step)?;
        Ok(Decision { outcome, tree_error, suffix })
    }

    /// Returns whether `BK` was sent.
    fn apply_peripheral(&self, st: &mut PartyState, d: &Decision, step: usize, closing: bool) -> Result<bool, EngineError> {
        let o = &d.outcome;
        if o.pass {
            if step >= 2 {
                for (slot, s) in st.s.iter_mut().enumerate() {
                    let v = if o.ell >= 0 { o.z_hat[slot].as_ref().expect("passed")[o.ell as usize] } else { 0 };
                    s.push(Sym::Data(v));
                }
            }
            if !closing {
                let address = self.path(st)?;
                let payload = ProtocolTree::new(self.protocol, st.party, OPEN_DEPTH).next_levels(&address, self.k)?;
                st.w[0].push(Sym::Data(pack_payload(&payload)));
            }
            Ok(false)
        } else {
            for s in st.s.iter_mut() {
                s.push(Sym::Back);
            }
            if !closing {
                st.w[0].push(Sym::Back);
            }
            st.backs += 1;
            Ok(true)
        }
    }

    fn apply_central(&self, st: &mut PartyState, d: &Decision) -> Result<bool, EngineError> {
        let o = &d.outcome;
        // With nothing simulated yet there is nothing to undo: move forward
        // with placeholders for any empty decode.
        if o.pass || o.ell == 0 {
            let at = o.ell as usize;
            for (slot, s) in st.s.iter_mut().enumerate() {
                let v = o.z_hat[slot].as_ref().and_then(|z| z.get(at).copied()).unwrap_or(0);
                s.push(Sym::Data(v));
            }
            let address = self.path(st)?;
            let answer = ProtocolTree::new(self.protocol, PartyId::Central, OPEN_DEPTH).central_levels(&address, self.k)?;
            for (w, a) in st.w.iter_mut().zip(answer) {
                w.push(Sym::Data(a));
            }
            Ok(false)
        } else {
            for s in st.s.iter_mut() {
                s.push(Sym::Back);
            }
            for w in st.w.iter_mut() {
                w.push(Sym::Back);
            }
            st.backs += 1;
            Ok(true)
        }
    }

    fn encode_next(&self, st: &mut PartyState) -> Vec<u32> {
        let (tree, codec) = self.coder(st.party);
        let mut labels = Vec::with_capacity(st.w.len());
        for (i, w) in st.w.iter().enumerate() {
            let child = codec.child(*w.last().expect("appended this step"));
            labels.push(tree.label(st.keys[i], child));
            st.keys[i] = tree.child_key(st.keys[i], child);
        }
        labels
    }

    fn ell(st: &PartyState) -> i64 {
        let z = parse(&st.w[0]).map_or(0, |z| z.len() as i64);
        if st.party == PartyId::Central {
            z
        } else {
            z - 1
        }
    }

    fn check_invariants(&self, st: &PartyState, step: usize, ell: i64, report: &mut TrialReport) {
        let lens: Vec<Option<usize>> = st.w.iter().map(|w| parse(w).map(|z| z.len())).collect();
        if lens.iter().any(|l| l.is_none() || *l != lens[0]) {
            report.invariant_violations.push(format!("{} step {step}: sent strings malformed", st.party));
        }
        let offset = i64::from(st.party != PartyId::Central);
        if step as i64 != ell + offset + 2 * st.backs as i64 {
            report
                .invariant_violations
                .push(format!("{} step {step}: step law fails (ℓ={ell}, B={})", st.party, st.backs));
        }
        let parsed: Vec<Option<Vec<u32>>> = st
            .s
            .iter()
            .map(|s| if st.party == PartyId::Central { parse(s) } else { parse_estimate(s) })
            .collect();
        if parsed.iter().any(|p| p.as_ref().map(|p| p.len() as i64) != Some(ell.max(0))) {
            report.invariant_violations.push(format!("{} step {step}: |σ| ≠ ℓ", st.party));
        }
    }

    fn output(&self, st: &PartyState) -> Result<Transcript, EngineError> {
        let topo = self.protocol.topology();
        let rc = self.protocol.round_count();
        let k = self.k;
        let address = self.path(st)?;
        let width = topo.receive_width(st.party);
        let path_rounds = address.len() / width;
        let received = address[..path_rounds.min(rc) * width].to_vec();
        let z: Vec<Vec<u32>> = st.w.iter().map(|w| parse(w).unwrap_or_default()).collect();
        let sent = match st.party {
            PartyId::Central => {
                let rounds = (z.iter().map(Vec::len).min().unwrap_or(0) * k).min(rc);
                let mut out = Vec::with_capacity(rounds * z.len());
                for t in 0..rounds {
                    for zi in &z {
                        out.push(bit_at(zi[t / k], k, t % k));
                    }
                }
                out
            }
            _ => {
                let n1 = topo.n1();
                let p = self.alphabets.payload_nc;
                let rounds = (z[0].len() * k).min(path_rounds).min(rc);
                (0..rounds)
                    .map(|t| {
                        let (c, d) = (t / k, t % k);
                        let e = pack_bits(&address[c * k * n1..t * n1]) as usize;
                        bit_at(z[0][c], p, level_offset(n1, d) + e)
                    })
                    .collect()
            }
        };
        Ok(Transcript { sent, received })
    }

    fn run(&self, noise: &NoiseModel, opts: &RunOptions) -> Result<EngineOutput, EngineError> {
        let topo = *self.protocol.topology();
        let n = topo.n();
        let n1 = topo.n1();
        let steps = self.alphabets.steps(self.protocol.round_count());
        let ecc_nc: &BscCode = &self.alphabets.ecc_nc;
        let ecc_c: &BscCode = &self.alphabets.ecc_c;
        let per_step = self.alphabets.per_step_rounds();

        let mut parties: Vec<PartyState> = topo
            .parties()
            .map(|p| {
                let neighbors = neighbor_refs(&topo, p);
                let (tree, _) = self.coder(p);
                PartyState {
                    party: p,
                    w: vec![Vec::new(); topo.send_width(p)],
                    keys: vec![tree.root(); topo.send_width(p)],
                    s: vec![Vec::new(); neighbors.len()],
                    recv: vec![Vec::new(); neighbors.len()],
                    neighbors,
                    backs: 0,
                }
            })
            .collect();

        let mut report = TrialReport { seed: opts.seed, steps, per_step_rounds: per_step, ..TrialReport::default() };
        let mut ledger = opts.record_ledger.then(Ledger::default);
        let mut records = Vec::new();
        let mut clock = 0u64;

        for step in 1..=steps + 1 {
            let closing = step == steps + 1;
            let mut inner_error = vec![false; n];
            let mut flags = vec![(false, 0usize, false); n];

            // First half: peripherals decide and speak.
            let mut decisions = Vec::with_capacity(n - 1);
            for q in 1..n {
                decisions.push(self.decide(&parties, q, step, opts, &mut report)?);
            }
            for (q, d) in (1..n).zip(&decisions) {
                let back = self.apply_peripheral(&mut parties[q], d, step, closing)?;
                flags[q] = (d.tree_error, d.suffix, back);
            }
            if closing {
                for q in 1..n {
                    let st = &parties[q];
                    let ell = Self::ell(st) + if flags[q].2 { -1 } else { 1 };
                    self.check_invariants(st, step, ell, &mut report);
                    if opts.record_trace {
                        records.push(self.record(st, q, step, ell, flags[q], false)?);
                    }
                }
                break;
            }
            let labels: Vec<Vec<u32>> = parties.iter_mut().skip(1).map(|st| self.encode_next(st)).collect();
            for link in 1..=topo.n2() {
                let members = link_members(&topo, link);
                let words: Vec<Vec<u8>> = members
                    .iter()
                    .map(|&q| if q == 0 { Vec::new() } else { ecc_nc.encode(u64::from(labels[q - 1][0])) })
                    .collect();
                let heard = broadcast_words(&topo, noise, link, clock, ledger.as_mut(), &words, ecc_nc.block_len());
                for (rm, &rq) in members.iter().enumerate() {
                    for (sm, &sq) in members.iter().enumerate().skip(1) {
                        if rm == sm {
                            continue;
                        }
                        let got = ecc_nc.decode(&heard[rm][sm]).min(u64::from(self.tree_nc.symbols() - 1)) as u32;
                        report.symbol_decodes += 1;
                        if got != labels[sq - 1][0] {
                            report.symbol_errors += 1;
                            inner_error[rq] = true;
                        }
                        parties[rq].recv[neighbor_slot(&topo, link, rm, sm)].push(got);
                    }
                }
            }
            clock += ecc_nc.block_len() as u64;

            // Second half: the central party decides and answers.
            let d = self.decide(&parties, 0, step, opts, &mut report)?;
            let back = self.apply_central(&mut parties[0], &d)?;
            flags[0] = (d.tree_error, d.suffix, back);
            let central_labels = self.encode_next(&mut parties[0]);
            for link in 1..=topo.n2() {
                let members = link_members(&topo, link);
                let mut words = vec![Vec::new(); members.len()];
                words[0] = ecc_c.encode(u64::from(central_labels[link - 1]));
                let heard = broadcast_words(&topo, noise, link, clock, ledger.as_mut(), &words, ecc_c.block_len());
                for (rm, &rq) in members.iter().enumerate().skip(1) {
                    let got = ecc_c.decode(&heard[rm][0]).min(u64::from(self.tree_c.symbols() - 1)) as u32;
                    report.symbol_decodes += 1;
                    if got != central_labels[link - 1] {
                        report.symbol_errors += 1;
                        inner_error[rq] = true;
                    }
                    parties[rq].recv[n1 - 1].push(got);
                }
            }
            clock += ecc_c.block_len() as u64;

            for (q, st) in parties.iter().enumerate() {
                let ell = Self::ell(st);
                self.check_invariants(st, step, ell, &mut report);
                if opts.record_trace {
                    records.push(self.record(st, q, step, ell, flags[q], inner_error[q])?);
                }
            }
        }

        report.rounds = clock;
        report.backs = parties.iter().map(|p| p.backs).collect();
        let truth = run_noiseless(self.protocol);
        let outputs = parties.iter().map(|st| self.output(st)).collect::<Result<Vec<_>, _>>()?;
        let estimates = Transcripts { topology: topo, rounds: self.protocol.round_count(), parties: outputs };
        report.party_success = (0..n).map(|q| estimates.parties[q] == truth.parties[q]).collect();
        report.success = report.party_success.iter().all(|&b| b);

        let trace = opts.record_trace.then(|| Trace {
            header: TraceHeader {
                schema: TRACE_SCHEMA,
                engine: EngineKind::Chunked { k: self.k },
                topology: topo,
                round_count: self.protocol.round_count(),
                steps,
                ground_truth: run_noiseless_rounds(self.protocol, self.k * (steps + 1))
                    .parties
                    .into_iter()
                    .map(|t| t.received)
                    .collect(),
            },
            records,
        });
        Ok(EngineOutput { estimates, report, trace, ledger })
    }

    fn record(
        &self,
        st: &PartyState,
        q: usize,
        step: usize,
        ell: i64,
        (tree_error, suffix_mismatch, sent_back): (bool, usize, bool),
        inner_error: bool,
    ) -> Result<StepRecord, EngineError> {
        Ok(StepRecord {
            party: q,
            step,
            ell,
            backs: st.backs,
            received_estimate: self.path(st)?,
            tree_error,
            suffix_mismatch,
            sent_back,
            inner_error,
        })
    }
}

/// Run the chunked engine once. Dispatches to [`run_simple`] when the
/// alphabets were built for the simple variant.
pub fn run_chunked(
    protocol: &Protocol,
    noise: &NoiseModel,
    alphabets: &ChunkAlphabets,
    opts: &RunOptions,
) -> Result<EngineOutput, EngineError> {
    let (Some(tree_nc), Some(tree_c)) = (&alphabets.tree_nc, &alphabets.tree_c) else {
        return run_simple(protocol, noise, alphabets, opts);
    };
    let steps = alphabets.steps(protocol.round_count());
    for t in [tree_nc, tree_c] {
        if t.depth() < steps + 1 {
            return Err(EngineError::Config(format!("tree code depth {} below {}", t.depth(), steps + 1)));
        }
    }
    let engine = ChunkedEngine {
        protocol,
        alphabets,
        tree_nc,
        tree_c,
        codec_nc: SymbolCodec::new(alphabets.payload_nc as u32),
        codec_c: SymbolCodec::new(alphabets.k as u32),
        k: alphabets.k,
    };
    if tree_nc.arity() != engine.codec_nc.arity() || tree_c.arity() != engine.codec_c.arity() {
        return Err(EngineError::Config("tree code arity does not match the chunk alphabet".into()));
    }
    engine.run(noise, opts)
}

/// The simple variant: every chunk message is block-coded once, with no
/// tree codes and no rewinding.
pub fn run_simple(
    protocol: &Protocol,
    noise: &NoiseModel,
    alphabets: &ChunkAlphabets,
    opts: &RunOptions,
) -> Result<EngineOutput, EngineError> {
    let topo = *protocol.topology();
    let (n, n1, k) = (topo.n(), topo.n1(), alphabets.k);
    let (ecc_nc, ecc_c) = (&alphabets.ecc_nc, &alphabets.ecc_c);
    if ecc_nc.message_len() != alphabets.payload_nc || ecc_c.message_len() != k {
        return Err(EngineError::Config("block codes were not built for raw chunk messages".into()));
    }
    let rc = protocol.round_count();
    let chunks = rc.div_ceil(k);
    let mut report = TrialReport {
        seed: opts.seed,
        steps: chunks,
        per_step_rounds: alphabets.per_step_rounds(),
        backs: vec![0; n],
        ..TrialReport::default()
    };
    let mut ledger = opts.record_ledger.then(Ledger::default);
    let mut clock = 0u64;
    let mut addr: Vec<Vec<u8>> = vec![Vec::new(); n];
    for _ in 0..chunks {
        let payloads: Vec<u32> = topo
            .parties()
            .enumerate()
            .skip(1)
            .map(|(q, p)| ProtocolTree::new(protocol, p, OPEN_DEPTH).next_levels(&addr[q], k).map(|b| pack_payload(&b)))
            .collect::<Result<_, _>>()?;
        let mut at_central = vec![0u32; n - 1];
        // What each peripheral decoded from its mates, in slot order.
        let mut at_mates = vec![vec![0u32; n1 - 1]; n];
        for link in 1..=topo.n2() {
            let members = link_members(&topo, link);
            let words: Vec<Vec<u8>> = members
                .iter()
                .map(|&q| if q == 0 { Vec::new() } else { ecc_nc.encode(u64::from(payloads[q - 1])) })
                .collect();
            let heard = broadcast_words(&topo, noise, link, clock, ledger.as_mut(), &words, ecc_nc.block_len());
            for (rm, &rq) in members.iter().enumerate() {
                for (sm, &sq) in members.iter().enumerate().skip(1) {
                    if rm == sm {
                        continue;
                    }
                    let got = ecc_nc.decode(&heard[rm][sm]) as u32;
                    report.symbol_decodes += 1;
                    if got != payloads[sq - 1] {
                        report.symbol_errors += 1;
                    }
                    if rm == 0 {
                        at_central[sq - 1] = got;
                    } else {
                        at_mates[rq][neighbor_slot(&topo, link, rm, sm)] = got;
                    }
                }
            }
        }
        clock += ecc_nc.block_len() as u64;

        extend_central(protocol, &mut addr[0], &at_central, k)?;
        let answer = ProtocolTree::new(protocol, PartyId::Central, OPEN_DEPTH).central_levels(&addr[0], k)?;
        for link in 1..=topo.n2() {
            let members = link_members(&topo, link);
            let mut words = vec![Vec::new(); members.len()];
            words[0] = ecc_c.encode(u64::from(answer[link - 1]));
            let heard = broadcast_words(&topo, noise, link, clock, ledger.as_mut(), &words, ecc_c.block_len());
            for (rm, &rq) in members.iter().enumerate().skip(1) {
                let got = ecc_c.decode(&heard[rm][0]) as u32;
                report.symbol_decodes += 1;
                if got != answer[link - 1] {
                    report.symbol_errors += 1;
                }
                let PartyId::Peripheral { link, pos } = topo.party(rq) else { unreachable!() };
                extend_peripheral(protocol, link, pos, &mut addr[rq], &at_mates[rq], got, k)?;
            }
        }
        clock += ecc_c.block_len() as u64;
    }
    report.rounds = clock;
    let truth = run_noiseless(protocol);
    let parties: Vec<Transcript> = topo
        .parties()
        .zip(&addr)
        .map(|(p, a)| Transcript {
            sent: super::tree::sent_along(protocol, p, a, rc),
            received: a[..rc * topo.receive_width(p)].to_vec(),
        })
        .collect();
    let estimates = Transcripts { topology: topo, rounds: rc, parties };
    report.party_success = (0..n).map(|q| estimates.parties[q] == truth.parties[q]).collect();
    report.success = report.party_success.iter().all(|&b| b);
    Ok(EngineOutput { estimates, report, trace: None, ledger })
}
