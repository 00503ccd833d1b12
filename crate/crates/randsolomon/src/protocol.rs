//! The per-process RandSolomon state machine.
//!
//! A process moves through three phases, driven entirely by delivered
//! events:
//!
//! 1. **Generation and commitment** — sample a local random number, encode
//!    it, encrypt block `k` under process `k`'s public key, sign the vector
//!    and broadcast it as `GENERATED`. When commitments from `N-f` distinct
//!    origins have been seen, propose the snapshot to consensus.
//! 2. **Reveal** — once consensus decides the `RNL` set, decrypt the one
//!    block of each RNL number addressed to us and broadcast the column as
//!    `REVEAL`. Incoming reveal cells are accepted only if re-encrypting the
//!    claimed plaintext under the revealer's public key reproduces the
//!    committed ciphertext bit for bit.
//! 3. **Result computation** — when every usable RNL number has `N-f`
//!    verified blocks, decode each one, retrace it (re-encode, re-encrypt,
//!    compare against the commitment; mismatch nullifies the contribution to
//!    zero), accumulate the cyclic-shifted XOR and fold the blocks pairwise,
//!    folding the odd last block into the final pair.
//!
//! The state machine is single-threaded and event-driven: each entry point
//! consumes one event and returns the actions (broadcasts, a consensus
//! proposal, the decision) for the driver to carry out. All cross-process
//! concurrency lives in the simulator.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{
    bytes_to_symbols, symbols_to_bytes, CodeParams, CodecError, RawRandom, ReedSolomon,
};
use crate::crypto::{
    sign, verify, EncryptionBackend, EncryptedBlock, PrivateKey, ProcessId, PublicKey, Signature,
};

pub mod wire;

/// A process's signed vector of per-recipient encrypted codeword blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commitment {
    pub origin: ProcessId,
    /// Exactly `N` blocks; block `k` is encrypted under process `k`'s key.
    pub enc_blocks: Vec<EncryptedBlock>,
    /// Signature over the canonical (origin, blocks) payload.
    pub sig: Signature,
}

impl Commitment {
    pub fn signed_payload(&self) -> Vec<u8> {
        wire::commitment_payload(self.origin, &self.enc_blocks)
    }
}

/// One entry of a reveal column: the decrypted block, or a marker saying the
/// committed ciphertext at this position was not decryptable at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevealCell {
    Block(Vec<u8>),
    Undecryptable,
}

/// The column `sigma[:][i]` revealed by process `i`: one cell per RNL
/// origin, in ascending origin order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealMsg {
    pub revealer: ProcessId,
    pub cells: Vec<(ProcessId, RevealCell)>,
    pub sig: Signature,
}

impl RevealMsg {
    pub fn signed_payload(&self) -> Vec<u8> {
        wire::reveal_payload(self.revealer, &self.cells)
    }
}

/// Tagged union of the two point-to-point wire messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    Generated(Commitment),
    Reveal(RevealMsg),
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::Generated(_) => "GENERATED",
            ProtocolMessage::Reveal(_) => "REVEAL",
        }
    }

    pub fn sender(&self) -> ProcessId {
        match self {
            ProtocolMessage::Generated(c) => c.origin,
            ProtocolMessage::Reveal(r) => r.revealer,
        }
    }
}

/// The consensus-decided set of exactly `N-f` commitments from distinct
/// origins, sorted ascending by origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnlSet {
    commitments: Vec<Commitment>,
}

impl RnlSet {
    /// Normalizes a valid proposal snapshot: keep the first entry per
    /// origin among signature-valid ones, sort by origin, truncate to the
    /// `N-f` lowest origin ids. Every correct process applies the same rule
    /// to the same decided snapshot, so all RNL sets are identical.
    pub fn normalize(
        snapshot: &[Commitment],
        publics: &[PublicKey],
        n_minus_f: usize,
    ) -> Option<RnlSet> {
        let mut by_origin: BTreeMap<ProcessId, Commitment> = BTreeMap::new();
        for c in snapshot {
            if c.origin.0 < publics.len()
                && c.enc_blocks.len() == publics.len()
                && verify(&publics[c.origin.0], &c.signed_payload(), &c.sig)
            {
                by_origin.entry(c.origin).or_insert_with(|| c.clone());
            }
        }
        if by_origin.len() < n_minus_f {
            return None;
        }
        Some(RnlSet {
            commitments: by_origin.into_values().take(n_minus_f).collect(),
        })
    }

    pub fn commitments(&self) -> &[Commitment] {
        &self.commitments
    }

    pub fn origins(&self) -> Vec<ProcessId> {
        self.commitments.iter().map(|c| c.origin).collect()
    }

    pub fn get(&self, origin: ProcessId) -> Option<&Commitment> {
        self.commitments.iter().find(|c| c.origin == origin)
    }
}

/// External validity predicate for consensus proposals: the snapshot must
/// contain at least `N-f` entries with valid signatures from `N-f` distinct
/// origins.
pub fn external_validity(snapshot: &[Commitment], publics: &[PublicKey], n_minus_f: usize) -> bool {
    let mut origins = BTreeSet::new();
    for c in snapshot {
        if c.origin.0 < publics.len()
            && c.enc_blocks.len() == publics.len()
            && verify(&publics[c.origin.0], &c.signed_payload(), &c.sig)
        {
            origins.insert(c.origin);
        }
    }
    origins.len() >= n_minus_f
}

/// The random number decided by a process: `floor((N-f)/2)` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandOutput {
    pub blocks: Vec<Vec<u8>>,
}

impl RandOutput {
    pub fn to_hex(&self) -> String {
        self.blocks.iter().map(hex::encode).collect::<Vec<_>>().join(",")
    }

    pub fn leading_byte(&self) -> u8 {
        self.blocks[0][0]
    }
}

/// Everything a process records when it decides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRecord {
    pub rand: RandOutput,
    /// The PRE accumulator, as `N-f` blocks, before the pairwise fold.
    pub pre_blocks: Vec<Vec<u8>>,
    /// RNL origins whose contribution was nullified to zero.
    pub nullified: Vec<ProcessId>,
}

/// Effects a state-machine entry point asks the driver to perform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Broadcast(ProtocolMessage),
    /// Propose this SEEN snapshot to consensus (fires exactly once).
    Propose(Vec<Commitment>),
    Decide(DecisionRecord),
    /// Trace-worthy incidents (discarded messages, rejected cells).
    Note(Incident),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Incident {
    BadSignature { from: ProcessId, kind: &'static str },
    DuplicateGenerated { origin: ProcessId },
    MalformedMessage { from: ProcessId },
    RevealBuffered { from: ProcessId },
    RevealShapeMismatch { from: ProcessId },
    CellRejected { revealer: ProcessId, origin: ProcessId },
    UnjustifiedMarker { revealer: ProcessId, origin: ProcessId },
    CommitmentPreNullified { origin: ProcessId },
}

/// Randomness source for the local number; fixed stubs keep golden runs
/// reproducible symbol for symbol.
#[derive(Debug, Clone)]
pub enum Entropy {
    Seeded(u64),
    Fixed(Vec<u32>),
}

impl Entropy {
    pub fn draw(&self, params: &CodeParams) -> RawRandom {
        match self {
            Entropy::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mask = crate::codec::Gf::new(params.z).mask();
                RawRandom((0..params.d).map(|_| rng.next_u32() & mask).collect())
            }
            Entropy::Fixed(symbols) => {
                assert_eq!(symbols.len(), params.d, "fixed entropy must supply d symbols");
                RawRandom(symbols.clone())
            }
        }
    }
}

/// Immutable per-process setup handed out by the harness.
#[derive(Clone)]
pub struct ProcessContext {
    pub id: ProcessId,
    pub params: CodeParams,
    pub publics: Arc<Vec<PublicKey>>,
    pub private: PrivateKey,
    pub backend: Arc<dyn EncryptionBackend>,
    /// Test-only switch for the result-computation integrity check; the
    /// divergence attack demo runs with it disabled.
    pub retrace_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SigmaCell {
    Plain(Vec<u8>),
    Undecryptable,
}

/// One RandSolomon process.
pub struct Process {
    ctx: ProcessContext,
    rs: ReedSolomon,
    seen: BTreeMap<ProcessId, Commitment>,
    proposed: bool,
    rnl: Option<RnlSet>,
    /// Origins whose commitment carries a structurally undecryptable block;
    /// decided deterministically from the (agreed) RNL data, so identical at
    /// every correct process. Their contribution is zero and the decision
    /// gate does not wait for their rows.
    pre_nullified: BTreeSet<ProcessId>,
    sigma: Vec<Vec<Option<SigmaCell>>>,
    pending_reveals: Vec<RevealMsg>,
    decided: Option<DecisionRecord>,
}

impl Process {
    pub fn new(ctx: ProcessContext) -> Process {
        let n = ctx.params.n;
        let rs = ReedSolomon::new(ctx.params);
        Process {
            ctx,
            rs,
            seen: BTreeMap::new(),
            proposed: false,
            rnl: None,
            pre_nullified: BTreeSet::new(),
            sigma: vec![vec![None; n]; n],
            pending_reveals: Vec::new(),
            decided: None,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.ctx.id
    }

    pub fn seen_count(&self) -> usize {
        self.seen.len()
    }

    pub fn rnl(&self) -> Option<&RnlSet> {
        self.rnl.as_ref()
    }

    pub fn decided(&self) -> Option<&DecisionRecord> {
        self.decided.as_ref()
    }

    pub fn has_proposed(&self) -> bool {
        self.proposed
    }

    /// Verified plaintext cells of one RNL origin's row, by block position.
    pub fn verified_row(&self, origin: ProcessId) -> Vec<Option<Vec<u8>>> {
        self.sigma[origin.0]
            .iter()
            .map(|c| match c {
                Some(SigmaCell::Plain(b)) => Some(b.clone()),
                _ => None,
            })
            .collect()
    }

    /// Builds the signed commitment over a freshly drawn random number and
    /// enqueues the `GENERATED` broadcast. The own commitment immediately
    /// counts toward SEEN.
    pub fn start_generation(&mut self, entropy: &Entropy) -> Vec<Action> {
        let commitment = build_commitment(
            &self.ctx.params,
            &self.rs,
            self.ctx.backend.as_ref(),
            &self.ctx.publics,
            &self.ctx.private,
            &entropy.draw(&self.ctx.params),
        );
        let mut actions = vec![Action::Broadcast(ProtocolMessage::Generated(
            commitment.clone(),
        ))];
        self.seen.insert(self.ctx.id, commitment);
        self.maybe_propose(&mut actions);
        actions
    }

    /// Handles a delivered `GENERATED` message.
    pub fn on_generated(&mut self, c: Commitment) -> Vec<Action> {
        let mut actions = Vec::new();
        if c.origin.0 >= self.ctx.params.n || c.enc_blocks.len() != self.ctx.params.n {
            actions.push(Action::Note(Incident::MalformedMessage { from: c.origin }));
            return actions;
        }
        if !verify(&self.ctx.publics[c.origin.0], &c.signed_payload(), &c.sig) {
            actions.push(Action::Note(Incident::BadSignature {
                from: c.origin,
                kind: "GENERATED",
            }));
            return actions;
        }
        if self.seen.contains_key(&c.origin) {
            actions.push(Action::Note(Incident::DuplicateGenerated { origin: c.origin }));
            return actions;
        }
        self.seen.insert(c.origin, c);
        self.maybe_propose(&mut actions);
        actions
    }

    fn maybe_propose(&mut self, actions: &mut Vec<Action>) {
        if !self.proposed && self.seen.len() == self.ctx.params.n - self.ctx.params.f {
            self.proposed = true;
            actions.push(Action::Propose(self.seen.values().cloned().collect()));
        }
    }

    /// Handles the consensus decision: decrypt our column, broadcast the
    /// `REVEAL`, then apply any reveals that arrived early.
    pub fn on_rnl_decided(&mut self, rnl: RnlSet) -> Vec<Action> {
        if self.rnl.is_some() {
            return Vec::new();
        }
        debug_assert!(external_validity(
            rnl.commitments(),
            &self.ctx.publics,
            self.ctx.params.n - self.ctx.params.f
        ));
        let mut actions = Vec::new();
        let me = self.ctx.id.0;
        let mut cells = Vec::with_capacity(rnl.commitments().len());
        for c in rnl.commitments() {
            let well_formed = c
                .enc_blocks
                .iter()
                .all(|eb| self.ctx.backend.ciphertext_well_formed(&eb.bytes));
            if !well_formed {
                self.pre_nullified.insert(c.origin);
                actions.push(Action::Note(Incident::CommitmentPreNullified {
                    origin: c.origin,
                }));
            }
            let cell = match self
                .ctx
                .backend
                .decrypt(&self.ctx.private, &c.enc_blocks[me].bytes)
            {
                Ok(plain) => {
                    self.sigma[c.origin.0][me] = Some(SigmaCell::Plain(plain.clone()));
                    RevealCell::Block(plain)
                }
                Err(_) => {
                    self.sigma[c.origin.0][me] = Some(SigmaCell::Undecryptable);
                    RevealCell::Undecryptable
                }
            };
            cells.push((c.origin, cell));
        }
        let payload = wire::reveal_payload(self.ctx.id, &cells);
        let msg = RevealMsg {
            revealer: self.ctx.id,
            cells,
            sig: sign(&self.ctx.private, &payload),
        };
        self.rnl = Some(rnl);
        actions.push(Action::Broadcast(ProtocolMessage::Reveal(msg)));
        for pending in std::mem::take(&mut self.pending_reveals) {
            self.apply_reveal(pending, &mut actions);
        }
        self.maybe_decide(&mut actions);
        actions
    }

    /// Handles a delivered `REVEAL`; buffered until the RNL set is known.
    pub fn on_reveal(&mut self, msg: RevealMsg) -> Vec<Action> {
        let mut actions = Vec::new();
        if self.rnl.is_none() {
            actions.push(Action::Note(Incident::RevealBuffered { from: msg.revealer }));
            self.pending_reveals.push(msg);
            return actions;
        }
        self.apply_reveal(msg, &mut actions);
        self.maybe_decide(&mut actions);
        actions
    }

    fn apply_reveal(&mut self, msg: RevealMsg, actions: &mut Vec<Action>) {
        let rnl = self.rnl.as_ref().expect("apply_reveal requires RNL");
        let j = msg.revealer;
        if j.0 >= self.ctx.params.n {
            actions.push(Action::Note(Incident::MalformedMessage { from: j }));
            return;
        }
        if !verify(&self.ctx.publics[j.0], &msg.signed_payload(), &msg.sig) {
            actions.push(Action::Note(Incident::BadSignature {
                from: j,
                kind: "REVEAL",
            }));
            return;
        }
        // Full columns only: the cells must be exactly the RNL origins in
        // ascending order. Anything else drops the whole message.
        let expected = rnl.origins();
        if msg.cells.len() != expected.len()
            || msg.cells.iter().map(|(o, _)| *o).ne(expected.iter().copied())
        {
            actions.push(Action::Note(Incident::RevealShapeMismatch { from: j }));
            return;
        }
        let mut updates: Vec<(ProcessId, SigmaCell)> = Vec::new();
        for (origin, cell) in &msg.cells {
            let committed = &rnl.get(*origin).expect("origin in RNL").enc_blocks[j.0];
            match cell {
                RevealCell::Block(plain) => {
                    let reencrypted = self.ctx.backend.encrypt(&self.ctx.publics[j.0], plain);
                    if reencrypted.as_deref() == Ok(&committed.bytes[..]) {
                        updates.push((*origin, SigmaCell::Plain(plain.clone())));
                    } else {
                        actions.push(Action::Note(Incident::CellRejected {
                            revealer: j,
                            origin: *origin,
                        }));
                    }
                }
                RevealCell::Undecryptable => {
                    // A marker is only honest if the committed ciphertext at
                    // this position really is undecryptable; that is
                    // publicly checkable. Justified markers stay unusable
                    // for decoding (the row is pre-nullified anyway); lying
                    // markers are rejected like any bad cell.
                    if self.ctx.backend.ciphertext_well_formed(&committed.bytes) {
                        actions.push(Action::Note(Incident::UnjustifiedMarker {
                            revealer: j,
                            origin: *origin,
                        }));
                    } else {
                        updates.push((*origin, SigmaCell::Undecryptable));
                    }
                }
            }
        }
        for (origin, cell) in updates {
            let slot = &mut self.sigma[origin.0][j.0];
            if slot.is_none() {
                *slot = Some(cell);
            }
        }
    }

    fn maybe_decide(&mut self, actions: &mut Vec<Action>) {
        if self.decided.is_some() {
            return;
        }
        let rnl = match &self.rnl {
            Some(r) => r,
            None => return,
        };
        let need = self.ctx.params.n - self.ctx.params.f;
        let gate = rnl.commitments().iter().all(|c| {
            self.pre_nullified.contains(&c.origin)
                || self.sigma[c.origin.0]
                    .iter()
                    .filter(|cell| matches!(cell, Some(SigmaCell::Plain(_))))
                    .count()
                    >= need
        });
        if !gate {
            return;
        }
        let record = self.compute_result();
        self.decided = Some(record.clone());
        actions.push(Action::Decide(record));
    }

    /// Result computation: decode, retrace, cyclic XOR, pairwise fold.
    fn compute_result(&self) -> DecisionRecord {
        let params = &self.ctx.params;
        let rnl = self.rnl.as_ref().expect("gate checked");
        let m = params.n - params.f;
        let mut pre: Vec<Vec<u8>> = vec![vec![0u8; params.block_bytes()]; m];
        let mut nullified = Vec::new();
        for (step, c) in rnl.commitments().iter().enumerate() {
            let data = if self.pre_nullified.contains(&c.origin) {
                nullified.push(c.origin);
                None
            } else {
                match self.decode_row(c.origin) {
                    Ok(data) => {
                        let keep = !self.ctx.retrace_enabled || self.retrace_ok(&data, c);
                        if keep {
                            Some(data)
                        } else {
                            nullified.push(c.origin);
                            None
                        }
                    }
                    Err(CodecError::DecodeInconsistent) => {
                        nullified.push(c.origin);
                        None
                    }
                    Err(e) => unreachable!("gate guarantees decodability: {e}"),
                }
            };
            if let Some(data) = data {
                let bytes = symbols_to_bytes(params.z, &data.0);
                let blocks: Vec<&[u8]> = bytes.chunks_exact(params.block_bytes()).collect();
                for (i, blk) in blocks.iter().enumerate() {
                    let dst = &mut pre[(i + step) % m];
                    for (d, s) in dst.iter_mut().zip(*blk) {
                        *d ^= s;
                    }
                }
            }
        }
        let rand = RandOutput {
            blocks: pairwise_triple_fold(&pre),
        };
        DecisionRecord {
            rand,
            pre_blocks: pre,
            nullified,
        }
    }

    fn decode_row(&self, origin: ProcessId) -> Result<RawRandom, CodecError> {
        let symbol_blocks: Vec<Option<Vec<u32>>> = self.sigma[origin.0]
            .iter()
            .map(|cell| match cell {
                Some(SigmaCell::Plain(bytes)) => {
                    Some(bytes_to_symbols(self.ctx.params.z, bytes).expect("verified cell"))
                }
                _ => None,
            })
            .collect();
        let borrowed: Vec<Option<&[u32]>> =
            symbol_blocks.iter().map(|b| b.as_deref()).collect();
        self.rs.decode(&borrowed)
    }

    /// The retrace check: a contribution is kept only if re-encoding and
    /// blockwise re-encrypting it reproduces the agreed commitment exactly.
    fn retrace_ok(&self, data: &RawRandom, c: &Commitment) -> bool {
        retrace_matches(
            &self.ctx.params,
            &self.rs,
            self.ctx.backend.as_ref(),
            &self.ctx.publics,
            data,
            c,
        )
    }
}

/// Encodes `data` and encrypts each block for its recipient, producing the
/// signed commitment. Shared by correct processes and by adversary
/// strategies that start from an honest commitment.
pub fn build_commitment(
    params: &CodeParams,
    rs: &ReedSolomon,
    backend: &dyn EncryptionBackend,
    publics: &[PublicKey],
    private: &PrivateKey,
    data: &RawRandom,
) -> Commitment {
    let codeword = rs.encode(data).expect("entropy draws d symbols");
    encrypt_and_sign(params, backend, publics, private, &codeword.0)
}

/// Encrypts the given codeword symbols blockwise and signs the vector.
pub fn encrypt_and_sign(
    params: &CodeParams,
    backend: &dyn EncryptionBackend,
    publics: &[PublicKey],
    private: &PrivateKey,
    codeword_symbols: &[u32],
) -> Commitment {
    let enc_blocks: Vec<EncryptedBlock> = (0..params.n)
        .map(|k| {
            let block = &codeword_symbols[k * params.b..(k + 1) * params.b];
            let bytes = backend
                .encrypt(&publics[k], &symbols_to_bytes(params.z, block))
                .expect("block length matches backend");
            EncryptedBlock {
                recipient: ProcessId(k),
                bytes,
            }
        })
        .collect();
    let origin = private.owner;
    let payload = wire::commitment_payload(origin, &enc_blocks);
    let sig = sign(private, &payload);
    Commitment {
        origin,
        enc_blocks,
        sig,
    }
}

/// True iff `data`, re-encoded and blockwise re-encrypted, reproduces the
/// committed ciphertext vector bit for bit.
pub fn retrace_matches(
    params: &CodeParams,
    rs: &ReedSolomon,
    backend: &dyn EncryptionBackend,
    publics: &[PublicKey],
    data: &RawRandom,
    c: &Commitment,
) -> bool {
    let codeword = match rs.encode(data) {
        Ok(cw) => cw,
        Err(_) => return false,
    };
    (0..params.n).all(|k| {
        let bytes = symbols_to_bytes(params.z, codeword.block(params, k));
        match backend.encrypt(&publics[k], &bytes) {
            Ok(ct) => ct == c.enc_blocks[k].bytes,
            Err(_) => false,
        }
    })
}

/// Final compression: XOR the `N-f` accumulator blocks pairwise; when the
/// count is odd the leftover last block folds into the final output block.
/// `[B1,B2,B3,B4,B5,B6,B7]` becomes `[B1^B2, B3^B4, B5^B6^B7]`.
pub fn pairwise_triple_fold(pre: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let m = pre.len();
    assert!(m >= 2, "fold needs at least two blocks");
    let half = m / 2;
    let mut out = Vec::with_capacity(half);
    for k in 0..half {
        let mut block = pre[2 * k].clone();
        for (d, s) in block.iter_mut().zip(&pre[2 * k + 1]) {
            *d ^= s;
        }
        out.push(block);
    }
    if m % 2 == 1 {
        let last = out.last_mut().expect("half >= 1");
        for (d, s) in last.iter_mut().zip(&pre[m - 1]) {
            *d ^= s;
        }
    }
    out
}
