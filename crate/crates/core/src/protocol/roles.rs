//! Buyer, seller and broker as sans-IO state machines. Each consumes
//! messages and returns the messages it wants sent; transports only move
//! bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::message::{decode_open, encode_open, MsgType, SessionHeader, SessionId, SessionMessage};
use super::ProtocolError;
use crate::ckks::{Ciphertext, CkksContext, CkksError, CkksParams, EvalKeys, KeySet, PublicKey};
use crate::influence::{
    preconditioned_eval_vector, project_gradient, EvalVector, Example, KfacState, Model, ProjectionOperator,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Buyer,
    Seller,
    Broker,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Buyer => "buyer",
            Role::Seller => "seller",
            Role::Broker => "broker",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "buyer" => Some(Role::Buyer),
            "seller" => Some(Role::Seller),
            "broker" => Some(Role::Broker),
            _ => None,
        }
    }
}

fn padded_slots(k: usize) -> usize {
    k.max(1).next_power_of_two()
}

// ----- buyer -----

pub struct BuyerConfig {
    pub params: CkksParams,
    /// Existing keys; generated from `key_seed` when absent.
    pub keys: Option<KeySet>,
    pub key_seed: u64,
    pub session_seed: u64,
    pub eval_vector: EvalVector,
    pub projection_checksum: [u8; 32],
}

impl BuyerConfig {
    /// Builds the K-FAC preconditioned evaluation vector from the buyer's
    /// model and evaluation set.
    #[allow(clippy::too_many_arguments)]
    pub fn from_model(
        params: CkksParams,
        model: &Model,
        eval_set: &[Example],
        proj: &ProjectionOperator,
        kfac: &KfacState,
        damping: f64,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        let eval_vector = preconditioned_eval_vector(model, eval_set, proj, kfac, damping)?;
        Ok(Self {
            params,
            keys: None,
            key_seed: seed,
            session_seed: seed,
            eval_vector,
            projection_checksum: proj.checksum(),
        })
    }
}

/// One decrypted score. `score` is the influence ŝ (negative = beneficial);
/// `utility` = −ŝ is the quantity a buyer ranks by.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreEntry {
    pub index: u32,
    pub score: f64,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinalScores {
    /// Sorted by index.
    pub entries: Vec<ScoreEntry>,
    /// Indices by descending utility, ties by ascending index.
    pub ranking: Vec<u32>,
}

impl FinalScores {
    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn utilities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.utility).collect()
    }
}

pub struct Buyer {
    ctx: CkksContext,
    keys: KeySet,
    session_id: SessionId,
    k: usize,
    plain: Vec<f64>,
    expected: Option<u32>,
    utilities: BTreeMap<u32, f64>,
    setup: Duration,
    busy: Duration,
}

impl Buyer {
    /// Phase 1: key generation and encryption of ṽ_eval. Returns the
    /// SessionOpen and EvalVector messages, both addressed to the broker.
    pub fn setup(cfg: BuyerConfig) -> Result<(Self, Vec<SessionMessage>), ProtocolError> {
        let start = Instant::now();
        let ctx = CkksContext::new(cfg.params)?;
        let k = cfg.eval_vector.dim();
        if padded_slots(k) > ctx.slot_count() {
            return Err(CkksError::TooManySlots {
                given: k,
                capacity: ctx.slot_count(),
            }
            .into());
        }
        let keys = match cfg.keys {
            Some(keys) => keys,
            None => ctx.keygen(cfg.key_seed),
        };
        let session_id = SessionId::from_seed(cfg.session_seed);
        let header = SessionHeader {
            params_hash: *ctx.params_hash(),
            k: k as u32,
            projection_checksum: cfg.projection_checksum,
        };
        let open = encode_open(
            &header,
            &ctx.serialize_public_key(&keys.public_key),
            &ctx.serialize_eval_keys(&keys.eval_keys),
        );
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.session_seed);
        rng.set_stream(u64::MAX);
        let pt = ctx.encode(&cfg.eval_vector.values, ctx.max_level())?;
        let ct = ctx.encrypt(&keys.public_key, &pt, &mut rng);
        let messages = vec![
            SessionMessage::new(session_id, MsgType::SessionOpen, 0, open),
            SessionMessage::new(session_id, MsgType::EvalVector, 0, ctx.serialize_ciphertext(&ct)),
        ];
        let buyer = Self {
            ctx,
            keys,
            session_id,
            k,
            plain: cfg.eval_vector.values,
            expected: None,
            utilities: BTreeMap::new(),
            setup: start.elapsed(),
            busy: Duration::ZERO,
        };
        Ok((buyer, messages))
    }

    pub fn session_id(&self) -> SessionId {
        self.session_id
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// The plaintext ṽ_eval, kept for verification columns.
    pub fn eval_values(&self) -> &[f64] {
        &self.plain
    }

    pub fn keys(&self) -> &KeySet {
        &self.keys
    }

    /// Key generation (if any) and encryption of ṽ_eval.
    pub fn setup_time(&self) -> Duration {
        self.setup
    }

    /// Per-candidate work: decrypting scores.
    pub fn busy_time(&self) -> Duration {
        self.busy
    }

    pub fn handle(&mut self, msg: &SessionMessage) -> Result<(), ProtocolError> {
        if msg.session_id != self.session_id {
            return Err(ProtocolError::ProtocolViolation(format!(
                "message for session {}",
                msg.session_id.hex()
            )));
        }
        match msg.msg_type {
            MsgType::ScoreResult => {
                let start = Instant::now();
                if self.utilities.contains_key(&msg.sequence) {
                    return Err(ProtocolError::ProtocolViolation(format!(
                        "duplicate score for candidate {}",
                        msg.sequence
                    )));
                }
                if let Some(n) = self.expected {
                    if msg.sequence >= n {
                        return Err(ProtocolError::ProtocolViolation(format!(
                            "score for candidate {} of {n}",
                            msg.sequence
                        )));
                    }
                }
                let ct = self.ctx.deserialize_ciphertext(&msg.payload)?;
                let pt = self.ctx.decrypt(&self.keys.secret_key, &ct)?;
                let u = self.ctx.decode_all(&pt)[0];
                self.utilities.insert(msg.sequence, u);
                self.busy += start.elapsed();
                Ok(())
            }
            MsgType::Ack => {
                if self.expected.is_some() {
                    return Err(ProtocolError::ProtocolViolation("second end-of-candidates ack".into()));
                }
                if let Some(&last) = self.utilities.keys().next_back() {
                    if last >= msg.sequence {
                        return Err(ProtocolError::ProtocolViolation(format!(
                            "score for candidate {last} of {}",
                            msg.sequence
                        )));
                    }
                }
                self.expected = Some(msg.sequence);
                Ok(())
            }
            MsgType::Error => Err(ProtocolError::Aborted(msg.error_text())),
            other => Err(ProtocolError::ProtocolViolation(format!(
                "buyer does not accept {}",
                other.name()
            ))),
        }
    }

    /// True once the seller's candidate count is known and every score is in.
    pub fn is_complete(&self) -> bool {
        self.expected == Some(self.utilities.len() as u32)
    }

    /// Phase 4: ŝ_i = −u_i and the utility ranking.
    pub fn finalize(&self) -> Result<FinalScores, ProtocolError> {
        let expected = self
            .expected
            .ok_or_else(|| ProtocolError::ProtocolViolation("candidate count never announced".into()))?;
        let missing: Vec<u32> = (0..expected).filter(|i| !self.utilities.contains_key(i)).collect();
        if !missing.is_empty() {
            return Err(ProtocolError::MissingScore(missing));
        }
        let entries: Vec<ScoreEntry> = self
            .utilities
            .iter()
            .map(|(&index, &u)| ScoreEntry {
                index,
                score: -u,
                utility: u,
            })
            .collect();
        let mut ranking: Vec<u32> = entries.iter().map(|e| e.index).collect();
        ranking.sort_by(|&a, &b| {
            entries[b as usize]
                .utility
                .total_cmp(&entries[a as usize].utility)
                .then(a.cmp(&b))
        });
        Ok(FinalScores { entries, ranking })
    }
}

// ----- seller -----

enum Source {
    Examples {
        model: Model,
        projection: ProjectionOperator,
        examples: Vec<Example>,
    },
    Gradients(Vec<Vec<f64>>),
}

/// Holds only public material: the model, the projection and, after
/// SessionOpen, the buyer's public key.
pub struct Seller {
    ctx: CkksContext,
    source: Source,
    checksum: [u8; 32],
    seed: u64,
    unit_norm: bool,
    public_key: Option<PublicKey>,
    session_id: Option<SessionId>,
    next: usize,
    setup: Duration,
    busy: Duration,
}

impl Seller {
    pub fn from_examples(
        params: CkksParams,
        model: Model,
        projection: ProjectionOperator,
        examples: Vec<Example>,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        if examples.is_empty() {
            return Err(ProtocolError::NoCandidates);
        }
        projection.check_model(&model)?;
        Ok(Self {
            ctx: CkksContext::new(params)?,
            checksum: projection.checksum(),
            source: Source::Examples {
                model,
                projection,
                examples,
            },
            seed,
            unit_norm: false,
            public_key: None,
            session_id: None,
            next: 0,
            setup: Duration::ZERO,
            busy: Duration::ZERO,
        })
    }

    /// Candidates given directly as projected gradients.
    pub fn from_gradients(
        params: CkksParams,
        gradients: Vec<Vec<f64>>,
        projection_checksum: [u8; 32],
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        if gradients.is_empty() {
            return Err(ProtocolError::NoCandidates);
        }
        Ok(Self {
            ctx: CkksContext::new(params)?,
            source: Source::Gradients(gradients),
            checksum: projection_checksum,
            seed,
            unit_norm: false,
            public_key: None,
            session_id: None,
            next: 0,
            setup: Duration::ZERO,
            busy: Duration::ZERO,
        })
    }

    /// Rescales every nonzero gradient to unit norm before encryption.
    pub fn with_unit_norm(mut self, on: bool) -> Self {
        self.unit_norm = on;
        self
    }

    pub fn candidate_count(&self) -> usize {
        match &self.source {
            Source::Examples { examples, .. } => examples.len(),
            Source::Gradients(g) => g.len(),
        }
    }

    pub fn setup_time(&self) -> Duration {
        self.setup
    }

    pub fn busy_time(&self) -> Duration {
        self.busy
    }

    fn dim(&self) -> usize {
        match &self.source {
            Source::Examples { projection, .. } => projection.dim(),
            Source::Gradients(g) => g[0].len(),
        }
    }

    fn gradient(&self, i: usize) -> Result<Vec<f64>, ProtocolError> {
        let mut g = match &self.source {
            Source::Examples {
                model,
                projection,
                examples,
            } => project_gradient(&model.per_example_gradient(&examples[i])?, projection)?,
            Source::Gradients(g) => g[i].clone(),
        };
        if g.len() != self.dim() {
            return Err(crate::influence::InfluenceError::DimensionMismatch {
                expected: self.dim(),
                found: g.len(),
            }
            .into());
        }
        if self.unit_norm {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                g.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(g)
    }

    /// Phase 2: checks a SessionOpen header and loads the buyer's public
    /// key. Candidates are then pulled one at a time with `next_message`.
    pub fn open(&mut self, msg: &SessionMessage) -> Result<(), ProtocolError> {
        match msg.msg_type {
            MsgType::SessionOpen => {
                if self.public_key.is_some() {
                    return Err(ProtocolError::ProtocolViolation("second SessionOpen".into()));
                }
                let start = Instant::now();
                let (header, pk, _) = decode_open(&msg.payload)?;
                if &header.params_hash != self.ctx.params_hash() {
                    return Err(CkksError::ParamsMismatch.into());
                }
                if header.k as usize != self.dim() {
                    return Err(crate::influence::InfluenceError::DimensionMismatch {
                        expected: header.k as usize,
                        found: self.dim(),
                    }
                    .into());
                }
                if header.projection_checksum != self.checksum {
                    return Err(crate::influence::InfluenceError::ProjectionMismatch.into());
                }
                self.public_key = Some(self.ctx.deserialize_public_key(pk)?);
                self.session_id = Some(msg.session_id);
                self.setup += start.elapsed();
                Ok(())
            }
            MsgType::Error => Err(ProtocolError::Aborted(msg.error_text())),
            other => Err(ProtocolError::ProtocolViolation(format!(
                "seller does not accept {}",
                other.name()
            ))),
        }
    }

    /// The next CandidateGradient, then an Ack carrying the count, then
    /// `None`. Also `None` before a session is open.
    pub fn next_message(&mut self) -> Option<Result<SessionMessage, ProtocolError>> {
        let (Some(id), Some(pk)) = (self.session_id, &self.public_key) else {
            return None;
        };
        let n = self.candidate_count();
        let i = self.next;
        if i > n {
            return None;
        }
        self.next += 1;
        if i == n {
            return Some(Ok(SessionMessage::new(id, MsgType::Ack, n as u32, Vec::new())));
        }
        let start = Instant::now();
        let msg = self.gradient(i).and_then(|g| {
            let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
            rng.set_stream(i as u64);
            let pt = self.ctx.encode(&g, self.ctx.max_level())?;
            let ct = self.ctx.encrypt(pk, &pt, &mut rng);
            Ok(SessionMessage::new(
                id,
                MsgType::CandidateGradient,
                i as u32,
                self.ctx.serialize_ciphertext(&ct),
            ))
        });
        if msg.is_err() {
            self.next = n + 1;
        }
        self.busy += start.elapsed();
        Some(msg)
    }

    /// `open` followed by every remaining message.
    pub fn handle(&mut self, msg: &SessionMessage) -> Result<Vec<SessionMessage>, ProtocolError> {
        self.open(msg)?;
        let mut out = Vec::with_capacity(self.candidate_count() + 1);
        while let Some(m) = self.next_message() {
            out.push(m?);
        }
        Ok(out)
    }
}

// ----- broker -----

/// Holds evaluation keys and ciphertexts. There is no secret key and no
/// decryption path.
pub struct Broker {
    ctx: CkksContext,
    session_id: Option<SessionId>,
    k: usize,
    eval_keys: Option<EvalKeys>,
    ct_eval: Option<Ciphertext>,
    /// SessionOpen is held back until ct_eval arrives, so the seller
    /// cannot send candidates the broker is not ready to score.
    pending_open: Option<SessionMessage>,
    scored: BTreeSet<u32>,
    aborted: Option<String>,
    setup: Duration,
    busy: Duration,
}

impl Broker {
    pub fn new(params: CkksParams) -> Result<Self, ProtocolError> {
        Ok(Self {
            ctx: CkksContext::new(params)?,
            session_id: None,
            k: 0,
            eval_keys: None,
            ct_eval: None,
            pending_open: None,
            scored: BTreeSet::new(),
            aborted: None,
            setup: Duration::ZERO,
            busy: Duration::ZERO,
        })
    }

    pub fn setup_time(&self) -> Duration {
        self.setup
    }

    pub fn busy_time(&self) -> Duration {
        self.busy
    }

    pub fn aborted(&self) -> Option<&str> {
        self.aborted.as_deref()
    }

    pub fn scored_count(&self) -> usize {
        self.scored.len()
    }

    /// Phase 3 routing and blind scoring. Failures are reported to both
    /// parties as Error messages and end the session.
    pub fn handle(&mut self, from: Role, msg: &SessionMessage) -> Vec<(Role, SessionMessage)> {
        if self.aborted.is_some() {
            return Vec::new();
        }
        match self.route(from, msg) {
            Ok(out) => out,
            Err(e) => {
                let text = e.to_string();
                self.aborted = Some(text.clone());
                let id = self.session_id.unwrap_or(msg.session_id);
                let err = SessionMessage::error(id, msg.sequence, &text);
                let mut out = Vec::new();
                for to in [Role::Buyer, Role::Seller] {
                    if to != from || msg.msg_type != MsgType::Error {
                        out.push((to, err.clone()));
                    }
                }
                out
            }
        }
    }

    fn route(&mut self, from: Role, msg: &SessionMessage) -> Result<Vec<(Role, SessionMessage)>, ProtocolError> {
        if msg.msg_type == MsgType::Error {
            return Err(ProtocolError::Aborted(format!(
                "{} reported: {}",
                from.name(),
                msg.error_text()
            )));
        }
        if let Some(id) = self.session_id {
            if id != msg.session_id {
                return Err(ProtocolError::ProtocolViolation(format!(
                    "message for session {}",
                    msg.session_id.hex()
                )));
            }
        }
        match (from, msg.msg_type) {
            (Role::Buyer, MsgType::SessionOpen) => {
                if self.session_id.is_some() {
                    return Err(ProtocolError::ProtocolViolation("second SessionOpen".into()));
                }
                let start = Instant::now();
                let (header, _, ek) = decode_open(&msg.payload)?;
                if &header.params_hash != self.ctx.params_hash() {
                    return Err(CkksError::ParamsMismatch.into());
                }
                if padded_slots(header.k as usize) > self.ctx.slot_count() {
                    return Err(CkksError::TooManySlots {
                        given: header.k as usize,
                        capacity: self.ctx.slot_count(),
                    }
                    .into());
                }
                self.eval_keys = Some(self.ctx.deserialize_eval_keys(ek)?);
                self.k = header.k as usize;
                self.session_id = Some(msg.session_id);
                self.pending_open = Some(msg.clone());
                self.setup += start.elapsed();
                Ok(Vec::new())
            }
            (Role::Buyer, MsgType::EvalVector) => {
                if self.session_id.is_none() {
                    return Err(ProtocolError::ProtocolViolation("EvalVector before SessionOpen".into()));
                }
                if self.ct_eval.is_some() {
                    return Err(ProtocolError::ProtocolViolation("second EvalVector".into()));
                }
                self.ct_eval = Some(self.ctx.deserialize_ciphertext(&msg.payload)?);
                let open = self.pending_open.take().expect("held since SessionOpen");
                Ok(vec![(Role::Seller, open)])
            }
            (Role::Seller, MsgType::CandidateGradient) => {
                let start = Instant::now();
                let (Some(ct_eval), Some(keys)) = (&self.ct_eval, &self.eval_keys) else {
                    return Err(ProtocolError::ProtocolViolation(
                        "CandidateGradient before EvalVector".into(),
                    ));
                };
                if self.scored.contains(&msg.sequence) {
                    return Err(ProtocolError::ProtocolViolation(format!(
                        "duplicate candidate {}",
                        msg.sequence
                    )));
                }
                let ct = self
                    .ctx
                    .deserialize_ciphertext(&msg.payload)
                    .map_err(|e| ProtocolError::MalformedFrame(format!("candidate {}: {e}", msg.sequence)))?;
                let score = self.score(ct_eval, &ct, keys)?;
                self.scored.insert(msg.sequence);
                let reply = SessionMessage::new(
                    msg.session_id,
                    MsgType::ScoreResult,
                    msg.sequence,
                    self.ctx.serialize_ciphertext(&score),
                );
                self.busy += start.elapsed();
                Ok(vec![(Role::Buyer, reply)])
            }
            (Role::Seller, MsgType::Ack) => {
                if msg.sequence as usize != self.scored.len() || self.scored.iter().any(|&i| i >= msg.sequence) {
                    return Err(ProtocolError::ProtocolViolation(format!(
                        "seller announced {} candidates, broker saw {}",
                        msg.sequence,
                        self.scored.len()
                    )));
                }
                Ok(vec![(Role::Buyer, msg.clone())])
            }
            (from, t) => Err(ProtocolError::ProtocolViolation(format!(
                "broker does not accept {} from {}",
                t.name(),
                from.name()
            ))),
        }
    }

    /// RotateAndSum(ct_eval ⊗ ct_i), then a slot-0 mask so the buyer sees
    /// only the inner product and not the partial sums in other slots.
    fn score(&self, ct_eval: &Ciphertext, ct: &Ciphertext, keys: &EvalKeys) -> Result<Ciphertext, ProtocolError> {
        let ip = self.ctx.inner_product(ct_eval, ct, self.k, keys)?;
        Ok(self.ctx.mask(&ip, &[1.0])?)
    }
}
