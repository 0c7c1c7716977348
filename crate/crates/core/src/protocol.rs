//! Enrollment, prover/verifier behaviour and the simulated network.
//!
//! A trusted server takes part only in enrollment: it generates the prover's
//! challenge set, tabulates the scrambled-pipeline response of every challenge
//! for every verifier, and hands each verifier a random subset. After that,
//! nodes authenticate each other directly over the [`Network`].

use std::collections::{BTreeMap, HashMap};

use log::debug;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{Bits, Challenge, NodeId, Response};
use crate::error::{Error, Result};
use crate::puf::PufInstance;
use crate::scrambler::{Scrambler, DEFAULT_SEED_VOTES};

/// One tabulated challenge-response pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrpRecord {
    pub prover_id: NodeId,
    pub verifier_id: NodeId,
    pub challenge: Challenge,
    pub expected_response: Response,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRequest {
    pub verifier_id: NodeId,
    pub challenge: Challenge,
    pub nonce: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthResponse {
    pub nonce: u64,
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Server,
    Node(NodeId),
}

impl Endpoint {
    pub fn node(&self) -> Option<&NodeId> {
        match self {
            Endpoint::Node(id) => Some(id),
            Endpoint::Server => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Request(AuthRequest),
    Response(AuthResponse),
    /// Server delivering `count` CRPs of `prover` to the recipient.
    CrpDelivery { prover: NodeId, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub seq: u64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub payload: Payload,
    pub dropped: bool,
}

/// Which traffic a tap listens to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkFilter {
    Any,
    /// Undirected link between two nodes.
    Between(NodeId, NodeId),
}

impl LinkFilter {
    fn matches(&self, a: &NodeId, b: &NodeId) -> bool {
        match self {
            LinkFilter::Any => true,
            LinkFilter::Between(x, y) => (x == a && y == b) || (x == b && y == a),
        }
    }
}

/// Passive eavesdropper on one link (or all links).
///
/// Each request/response exchange on a matching link is captured with
/// probability `capture_fraction`; decisions come from the tap's own seeded
/// generator.
#[derive(Debug, Clone)]
pub struct NetworkTap {
    link: LinkFilter,
    capture_fraction: f64,
    rng: ChaCha8Rng,
    pending: HashMap<u64, AuthRequest>,
    log: Vec<CrpRecord>,
}

impl NetworkTap {
    pub fn new(link: LinkFilter, capture_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&capture_fraction) {
            return Err(Error::Config(format!("capture_fraction must be in [0, 1], got {capture_fraction}")));
        }
        Ok(NetworkTap { link, capture_fraction, rng: ChaCha8Rng::seed_from_u64(seed), pending: HashMap::new(), log: Vec::new() })
    }

    fn observe(&mut self, msg: &Message) {
        let (Some(from), Some(to)) = (msg.from.node(), msg.to.node()) else { return };
        if !self.link.matches(from, to) {
            return;
        }
        match &msg.payload {
            Payload::Request(req) => {
                if self.rng.random_bool(self.capture_fraction) {
                    self.pending.insert(req.nonce, req.clone());
                }
            }
            Payload::Response(resp) => {
                if let Some(req) = self.pending.remove(&resp.nonce) {
                    self.log.push(CrpRecord {
                        prover_id: from.clone(),
                        verifier_id: req.verifier_id,
                        challenge: req.challenge,
                        expected_response: resp.response.clone(),
                    });
                }
            }
            Payload::CrpDelivery { .. } => {}
        }
    }

    pub fn records(&self) -> &[CrpRecord] {
        &self.log
    }

    pub fn into_records(self) -> Vec<CrpRecord> {
        self.log
    }
}

/// In-process, single-threaded message network.
#[derive(Debug)]
pub struct Network {
    drop_probability: f64,
    rng: ChaCha8Rng,
    log: Vec<Message>,
    taps: Vec<NetworkTap>,
    next_seq: u64,
}

pub type TapId = usize;

impl Network {
    pub fn new(drop_probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&drop_probability) {
            return Err(Error::Config(format!("drop probability must be in [0, 1], got {drop_probability}")));
        }
        Ok(Network { drop_probability, rng: ChaCha8Rng::seed_from_u64(seed), log: Vec::new(), taps: Vec::new(), next_seq: 0 })
    }

    pub fn set_drop_probability(&mut self, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("drop probability must be in [0, 1], got {p}")));
        }
        self.drop_probability = p;
        Ok(())
    }

    pub fn add_tap(&mut self, tap: NetworkTap) -> TapId {
        self.taps.push(tap);
        self.taps.len() - 1
    }

    pub fn tap(&self, id: TapId) -> &NetworkTap {
        &self.taps[id]
    }

    pub fn take_taps(&mut self) -> Vec<NetworkTap> {
        std::mem::take(&mut self.taps)
    }

    pub fn log(&self) -> &[Message] {
        &self.log
    }

    /// Puts a message on the air. Taps see it whether or not it arrives.
    /// Returns the payload if it was delivered.
    pub fn transmit(&mut self, from: Endpoint, to: Endpoint, payload: Payload) -> Option<Payload> {
        let dropped = self.drop_probability > 0.0 && self.rng.random_bool(self.drop_probability);
        let msg = Message { seq: self.next_seq, from, to, payload, dropped };
        self.next_seq += 1;
        for tap in &mut self.taps {
            tap.observe(&msg);
        }
        let delivered = (!dropped).then(|| msg.payload.clone());
        self.log.push(msg);
        delivered
    }
}

#[derive(Debug, Clone, Default)]
struct CrpStore {
    records: Vec<CrpRecord>,
    cursor: usize,
}

/// An IoT device: prover with an embedded PUF, and verifier holding CRPs of
/// its peers.
#[derive(Debug, Clone)]
pub struct Node {
    id: NodeId,
    puf: PufInstance,
    scrambling: bool,
    noise_rng: ChaCha8Rng,
    store: BTreeMap<NodeId, CrpStore>,
}

impl Node {
    pub fn new(id: NodeId, puf: PufInstance, noise_seed: u64) -> Self {
        Node { id, puf, scrambling: true, noise_rng: ChaCha8Rng::seed_from_u64(noise_seed), store: BTreeMap::new() }
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn puf(&self) -> &PufInstance {
        &self.puf
    }

    pub fn scrambling(&self) -> bool {
        self.scrambling
    }

    /// Bypasses the scrambler so the PUF answers the raw challenge.
    pub fn set_scrambling(&mut self, on: bool) {
        self.scrambling = on;
    }

    /// Swaps the embedded PUF, returning the old one.
    pub fn replace_puf(&mut self, puf: PufInstance) -> PufInstance {
        std::mem::replace(&mut self.puf, puf)
    }

    pub fn respond(&mut self, scrambler: &Scrambler, req: &AuthRequest) -> Result<AuthResponse> {
        let response = if self.scrambling {
            scrambler.respond_bits(&self.puf, &req.challenge, &req.verifier_id, &mut self.noise_rng)?
        } else {
            scrambler.respond_unscrambled(&self.puf, &req.challenge, &mut self.noise_rng)?
        };
        Ok(AuthResponse { nonce: req.nonce, response })
    }

    fn install(&mut self, prover: NodeId, records: Vec<CrpRecord>) {
        self.store.insert(prover, CrpStore { records, cursor: 0 });
    }

    /// Every CRP this node holds for `prover`, as a memory dump would reveal.
    pub fn stored_crps(&self, prover: &NodeId) -> &[CrpRecord] {
        self.store.get(prover).map(|s| s.records.as_slice()).unwrap_or(&[])
    }

    pub fn unused_crps(&self, prover: &NodeId) -> usize {
        self.store.get(prover).map_or(0, |s| s.records.len() - s.cursor)
    }

    fn next_crp(&mut self, prover: &NodeId) -> Result<CrpRecord> {
        let store = match self.store.get_mut(prover) {
            Some(s) if !s.records.is_empty() => s,
            _ => return Err(Error::NoCrps { verifier: self.id.clone(), prover: prover.clone() }),
        };
        let record = store
            .records
            .get(store.cursor)
            .cloned()
            .ok_or_else(|| Error::CrpsExhausted { verifier: self.id.clone(), prover: prover.clone() })?;
        store.cursor += 1;
        Ok(record)
    }
}

/// Output of enrolling one prover.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub prover_id: NodeId,
    pub challenges: Vec<Challenge>,
    /// `verifier -> subset delivered to that verifier`.
    pub distributed: BTreeMap<NodeId, Vec<CrpRecord>>,
}

/// The trusted enrollment server.
#[derive(Debug)]
pub struct Server {
    rng: ChaCha8Rng,
    votes: usize,
    tables: BTreeMap<(NodeId, NodeId), Vec<CrpRecord>>,
}

impl Server {
    pub fn new(seed: u64) -> Self {
        Server { rng: ChaCha8Rng::seed_from_u64(seed), votes: DEFAULT_SEED_VOTES, tables: BTreeMap::new() }
    }

    /// Full tabulation `CRP_{prover, verifier}`, if enrolled.
    pub fn table(&self, prover: &NodeId, verifier: &NodeId) -> Option<&[CrpRecord]> {
        self.tables.get(&(prover.clone(), verifier.clone())).map(Vec::as_slice)
    }

    /// Generates `n_challenges` random challenges, tabulates the prover's
    /// scrambled response to each for every verifier, and samples
    /// `crp_per_verifier` records per verifier without replacement.
    ///
    /// Noisy devices are measured with majority voting on every query.
    pub fn enroll(
        &mut self,
        prover: &mut Node,
        verifier_ids: &[NodeId],
        n_challenges: usize,
        crp_per_verifier: usize,
        scrambler: &Scrambler,
    ) -> Result<Enrollment> {
        if crp_per_verifier > n_challenges {
            return Err(Error::TooManyCrps { requested: crp_per_verifier, available: n_challenges });
        }
        let n = scrambler.challenge_bits();
        let challenges: Vec<Challenge> = (0..n_challenges).map(|_| Bits::random(n, &mut self.rng)).collect();
        let puf = prover.puf.clone();
        let mut distributed = BTreeMap::new();
        for vid in verifier_ids {
            let table = challenges
                .iter()
                .map(|c| {
                    let expected_response = if prover.scrambling {
                        reference_response(scrambler, &puf, c, vid, self.votes, &mut prover.noise_rng)?
                    } else {
                        scrambler.respond_unscrambled(&puf, c, &mut prover.noise_rng)?
                    };
                    Ok(CrpRecord {
                        prover_id: prover.id.clone(),
                        verifier_id: vid.clone(),
                        challenge: c.clone(),
                        expected_response,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let subset: Vec<CrpRecord> =
                index::sample(&mut self.rng, n_challenges, crp_per_verifier).into_iter().map(|i| table[i].clone()).collect();
            self.tables.insert((prover.id.clone(), vid.clone()), table);
            distributed.insert(vid.clone(), subset);
        }
        debug!("enrolled prover {} with {} challenges for {} verifiers", prover.id, n_challenges, verifier_ids.len());
        Ok(Enrollment { prover_id: prover.id.clone(), challenges, distributed })
    }
}

fn reference_response<R: Rng + ?Sized>(
    scrambler: &Scrambler,
    puf: &PufInstance,
    c: &Challenge,
    verifier: &NodeId,
    votes: usize,
    rng: &mut R,
) -> Result<Response> {
    if !puf.is_noisy() {
        return scrambler.respond_bits(puf, c, verifier, rng);
    }
    // Stabilise every query when the device is noisy.
    let seed = scrambler.derive_seed(puf, c, verifier, rng)?;
    let sc = scrambler.make_pattern(seed)?.apply(c)?;
    (0..scrambler.response_bits())
        .map(|r| puf.eval_majority(&sc.rotate_left(r), votes, rng))
        .collect::<Result<Vec<_>>>()
        .map(Bits::new)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Mismatch { bit_errors: usize },
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject(RejectReason),
}

impl Decision {
    pub fn is_accept(&self) -> bool {
        matches!(self, Decision::Accept)
    }
}

/// Result of one authentication round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthOutcome {
    pub decision: Decision,
    pub record: CrpRecord,
    pub received: Option<Response>,
}

/// A deployment of nodes, the enrollment server and the network.
#[derive(Debug)]
pub struct Simulation {
    scrambler: Scrambler,
    nodes: BTreeMap<NodeId, Node>,
    server: Server,
    network: Network,
    tolerated_bit_errors: usize,
    nonce: u64,
}

impl Simulation {
    pub fn new(scrambler: Scrambler, server_seed: u64, network: Network) -> Self {
        Simulation { scrambler, nodes: BTreeMap::new(), server: Server::new(server_seed), network, tolerated_bit_errors: 0, nonce: 0 }
    }

    pub fn scrambler(&self) -> &Scrambler {
        &self.scrambler
    }

    pub fn add_node(&mut self, node: Node) -> Result<()> {
        if node.puf.n_stages() != self.scrambler.challenge_bits() {
            return Err(Error::LengthMismatch { expected: self.scrambler.challenge_bits(), actual: node.puf.n_stages() });
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn node(&self, id: &NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or_else(|| Error::UnknownNode(id.clone()))
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Result<&mut Node> {
        self.nodes.get_mut(id).ok_or_else(|| Error::UnknownNode(id.clone()))
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().cloned().collect()
    }

    pub fn server(&self) -> &Server {
        &self.server
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn tolerated_bit_errors(&self) -> usize {
        self.tolerated_bit_errors
    }

    pub fn set_tolerated_bit_errors(&mut self, n: usize) {
        self.tolerated_bit_errors = n;
    }

    /// Zero mismatches for noiseless devices, 10% of the response width when
    /// any device is noisy.
    pub fn apply_default_tolerance(&mut self) {
        let noisy = self.nodes.values().any(|n| n.puf.is_noisy());
        self.tolerated_bit_errors = if noisy { self.scrambler.response_bits() / 10 } else { 0 };
    }

    /// Enrolls `prover` with the given verifiers and delivers each verifier
    /// its CRP subset.
    pub fn enroll(
        &mut self,
        prover: &NodeId,
        verifiers: &[NodeId],
        n_challenges: usize,
        crp_per_verifier: usize,
    ) -> Result<Enrollment> {
        for v in verifiers {
            if !self.nodes.contains_key(v) || v == prover {
                return Err(Error::UnknownNode(v.clone()));
            }
        }
        let prover_node = self.nodes.get_mut(prover).ok_or_else(|| Error::UnknownNode(prover.clone()))?;
        let enrollment = self.server.enroll(prover_node, verifiers, n_challenges, crp_per_verifier, &self.scrambler)?;
        for (vid, records) in &enrollment.distributed {
            self.network.transmit(
                Endpoint::Server,
                Endpoint::Node(vid.clone()),
                Payload::CrpDelivery { prover: prover.clone(), count: records.len() },
            );
            self.nodes.get_mut(vid).expect("checked above").install(prover.clone(), records.clone());
        }
        Ok(enrollment)
    }

    /// One authentication of `prover` by `verifier` with the honest device
    /// answering.
    pub fn authenticate(&mut self, verifier: &NodeId, prover: &NodeId) -> Result<AuthOutcome> {
        let scrambler = self.scrambler.clone();
        let mut device = self.nodes.remove(prover).ok_or_else(|| Error::UnknownNode(prover.clone()))?;
        let outcome = self.authenticate_with(verifier, prover, |req| device.respond(&scrambler, req));
        self.nodes.insert(prover.clone(), device);
        outcome
    }

    /// One authentication where `responder` plays the prover's side.
    pub fn authenticate_with<F>(&mut self, verifier: &NodeId, prover: &NodeId, mut responder: F) -> Result<AuthOutcome>
    where
        F: FnMut(&AuthRequest) -> Result<AuthResponse>,
    {
        let record = self.node_mut(verifier)?.next_crp(prover)?;
        self.nonce += 1;
        let req = AuthRequest { verifier_id: verifier.clone(), challenge: record.challenge.clone(), nonce: self.nonce };
        let (v_end, p_end) = (Endpoint::Node(verifier.clone()), Endpoint::Node(prover.clone()));

        let Some(Payload::Request(delivered)) = self.network.transmit(v_end.clone(), p_end.clone(), Payload::Request(req))
        else {
            return Ok(AuthOutcome { decision: Decision::Reject(RejectReason::Timeout), record, received: None });
        };
        let resp = responder(&delivered)?;
        let Some(Payload::Response(resp)) = self.network.transmit(p_end, v_end, Payload::Response(resp)) else {
            return Ok(AuthOutcome { decision: Decision::Reject(RejectReason::Timeout), record, received: None });
        };
        if resp.nonce != delivered.nonce || resp.response.len() != record.expected_response.len() {
            let bit_errors = record.expected_response.len();
            return Ok(AuthOutcome {
                decision: Decision::Reject(RejectReason::Mismatch { bit_errors }),
                record,
                received: Some(resp.response),
            });
        }
        let bit_errors = resp.response.hamming_distance(&record.expected_response)?;
        let decision = if bit_errors <= self.tolerated_bit_errors {
            Decision::Accept
        } else {
            Decision::Reject(RejectReason::Mismatch { bit_errors })
        };
        Ok(AuthOutcome { decision, record, received: Some(resp.response) })
    }

    /// `a` authenticates `b`, then `b` authenticates `a`.
    pub fn mutual_authenticate(&mut self, a: &NodeId, b: &NodeId) -> Result<(Decision, Decision)> {
        for (v, p) in [(a, b), (b, a)] {
            if self.node(v)?.unused_crps(p) == 0 {
                return Err(if self.node(v)?.stored_crps(p).is_empty() {
                    Error::NoCrps { verifier: v.clone(), prover: p.clone() }
                } else {
                    Error::CrpsExhausted { verifier: v.clone(), prover: p.clone() }
                });
            }
        }
        let ab = self.authenticate(a, b)?.decision;
        let ba = self.authenticate(b, a)?.decision;
        Ok((ab, ba))
    }

    /// Every verifier authenticates `prover` once per CRP it still holds.
    pub fn run_traffic(&mut self, prover: &NodeId) -> Result<Vec<AuthOutcome>> {
        let verifiers: Vec<NodeId> = self.nodes.keys().filter(|v| *v != prover).cloned().collect();
        let mut outcomes = Vec::new();
        for v in verifiers {
            for _ in 0..self.node(&v)?.unused_crps(prover) {
                outcomes.push(self.authenticate(&v, prover)?);
            }
        }
        Ok(outcomes)
    }
}

/// Per-node CRP storage in bits: `TI × AR × (ND − 1) × (N + R)`.
pub fn memory_size(ti: u64, ar: u64, nd: u64, n: u64, r: u64) -> u64 {
    ti * ar * nd.saturating_sub(1) * (n + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scrambler::{default_scrambler, ScramblerConfig};

    fn id(v: u64) -> NodeId {
        NodeId::new(v, 32)
    }

    fn sim_with(n_nodes: u64, response_bits: usize) -> Simulation {
        let scrambler = Scrambler::new(64, &ScramblerConfig { response_bits, ..Default::default() }).unwrap();
        let mut sim = Simulation::new(scrambler, 1, Network::new(0.0, 2).unwrap());
        for i in 1..=n_nodes {
            let puf = PufInstance::new(64, 0.0, 100 + i).unwrap();
            sim.add_node(Node::new(id(0x1000 + i), puf, 200 + i)).unwrap();
        }
        sim
    }

    #[test]
    fn memory_size_examples() {
        assert_eq!(memory_size(10, 10, 100, 64, 32), 950_400);
        assert_eq!(memory_size(1, 100, 100, 64, 32) as f64 / 8.0, 118_800.0);
        assert_eq!(memory_size(10, 10, 1, 64, 32), 0);
        assert_eq!(memory_size(10, 20, 100, 64, 32), 2 * memory_size(10, 10, 100, 64, 32));
    }

    #[test]
    fn enrollment_distributes_subsets() {
        let mut sim = sim_with(6, 1);
        let prover = id(0x1001);
        let verifiers: Vec<NodeId> = (2..=6).map(|i| id(0x1000 + i)).collect();
        let e = sim.enroll(&prover, &verifiers, 500, 100).unwrap();
        assert_eq!(e.challenges.len(), 500);
        for v in &verifiers {
            let stored = sim.node(v).unwrap().stored_crps(&prover);
            assert_eq!(stored.len(), 100);
            let table = sim.server().table(&prover, v).unwrap();
            assert_eq!(table.len(), 500);
            assert!(stored.iter().all(|r| table.contains(r)));
            let mut uniq: Vec<_> = stored.iter().map(|r| &r.challenge).collect();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), 100, "sampled with replacement");
        }
        assert!(matches!(sim.enroll(&prover, &verifiers, 10, 11), Err(Error::TooManyCrps { .. })));
    }

    #[test]
    fn server_tables_hold_scrambled_responses() {
        // For shared challenges, a verifier's record equals the pipeline output
        // for that verifier; two verifiers agree iff their SC coincide.
        let mut sim = sim_with(3, 1);
        let prover = id(0x1001);
        let (a, b) = (id(0x1002), id(0x1003));
        sim.enroll(&prover, &[a.clone(), b.clone()], 300, 300).unwrap();
        let puf = sim.node(&prover).unwrap().puf().clone();
        let s = sim.scrambler().clone();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let ta = sim.server().table(&prover, &a).unwrap();
        let tb = sim.server().table(&prover, &b).unwrap();
        let mut differ = 0;
        for (ra, rb) in ta.iter().zip(tb) {
            assert_eq!(ra.challenge, rb.challenge);
            let sca = s.scramble(&puf, &ra.challenge, &a, &mut r).unwrap();
            let scb = s.scramble(&puf, &rb.challenge, &b, &mut r).unwrap();
            assert_eq!(ra.expected_response[0], puf.eval_noiseless(&sca).unwrap());
            if sca == scb {
                assert_eq!(ra.expected_response, rb.expected_response);
            }
            differ += (ra.expected_response != rb.expected_response) as usize;
        }
        let rate = differ as f64 / 300.0;
        assert!((0.35..=0.65).contains(&rate), "per-verifier tables differ on {rate}");
    }

    #[test]
    fn honest_round_trip_and_server_silence() {
        let mut sim = sim_with(4, 32);
        let prover = id(0x1001);
        let verifiers: Vec<NodeId> = (2..=4).map(|i| id(0x1000 + i)).collect();
        sim.enroll(&prover, &verifiers, 50, 50).unwrap();
        let enrollment_msgs = sim.network().log().len();
        let outcomes = sim.run_traffic(&prover).unwrap();
        assert_eq!(outcomes.len(), 150);
        assert!(outcomes.iter().all(|o| o.decision.is_accept()));
        assert!(sim.network().log()[enrollment_msgs..].iter().all(|m| m.from != Endpoint::Server && m.to != Endpoint::Server));
        let err = sim.authenticate(&verifiers[0], &prover).unwrap_err();
        assert!(matches!(err, Error::CrpsExhausted { .. }));
    }

    #[test]
    fn no_crps_is_an_error() {
        let mut sim = sim_with(2, 1);
        let (a, b) = (id(0x1001), id(0x1002));
        assert!(matches!(sim.authenticate(&a, &b), Err(Error::NoCrps { .. })));
        sim.enroll(&b, &[a.clone()], 10, 0).unwrap();
        assert!(matches!(sim.authenticate(&a, &b), Err(Error::NoCrps { .. })));
        assert!(matches!(sim.mutual_authenticate(&a, &b), Err(Error::NoCrps { .. })));
    }

    #[test]
    fn dropped_messages_time_out() {
        let mut sim = sim_with(2, 1);
        let (a, b) = (id(0x1001), id(0x1002));
        sim.enroll(&b, &[a.clone()], 10, 10).unwrap();
        sim.network_mut().set_drop_probability(1.0).unwrap();
        let o = sim.authenticate(&a, &b).unwrap();
        assert_eq!(o.decision, Decision::Reject(RejectReason::Timeout));
    }

    #[test]
    fn mutual_authentication() {
        let mut sim = sim_with(2, 32);
        let (a, b) = (id(0x1001), id(0x1002));
        sim.enroll(&a, &[b.clone()], 20, 20).unwrap();
        sim.enroll(&b, &[a.clone()], 20, 20).unwrap();
        assert_eq!(sim.mutual_authenticate(&a, &b).unwrap(), (Decision::Accept, Decision::Accept));

        // b's device swapped for a foreign PUF: a rejects b.
        sim.node_mut(&b).unwrap().replace_puf(PufInstance::new(64, 0.0, 999).unwrap());
        let (ab, ba) = sim.mutual_authenticate(&a, &b).unwrap();
        assert!(!ab.is_accept());
        assert!(ba.is_accept());
    }

    #[test]
    fn replayed_response_is_rejected() {
        let mut sim = sim_with(2, 32);
        let (v, p) = (id(0x1001), id(0x1002));
        sim.enroll(&p, &[v.clone()], 20, 20).unwrap();
        let first = sim.authenticate(&v, &p).unwrap();
        assert!(first.decision.is_accept());
        let old = first.received.unwrap();
        let replay = sim.authenticate_with(&v, &p, |req| Ok(AuthResponse { nonce: req.nonce, response: old.clone() })).unwrap();
        assert_ne!(replay.record.challenge, first.record.challenge);
        assert!(!replay.decision.is_accept());
    }

    #[test]
    fn full_tap_captures_exact_exchanges() {
        let mut sim = sim_with(3, 1);
        let prover = id(0x1001);
        let verifiers = vec![id(0x1002), id(0x1003)];
        sim.enroll(&prover, &verifiers, 40, 30).unwrap();
        let all = sim.network_mut().add_tap(NetworkTap::new(LinkFilter::Any, 1.0, 5).unwrap());
        let one = sim.network_mut().add_tap(NetworkTap::new(LinkFilter::Between(prover.clone(), verifiers[0].clone()), 1.0, 6).unwrap());
        let half = sim.network_mut().add_tap(NetworkTap::new(LinkFilter::Any, 0.5, 7).unwrap());
        let outcomes = sim.run_traffic(&prover).unwrap();
        let mut exchanged: Vec<(Challenge, Response)> =
            outcomes.iter().map(|o| (o.record.challenge.clone(), o.received.clone().unwrap())).collect();
        let mut captured: Vec<(Challenge, Response)> =
            sim.network().tap(all).records().iter().map(|r| (r.challenge.clone(), r.expected_response.clone())).collect();
        exchanged.sort();
        captured.sort();
        assert_eq!(exchanged, captured);
        assert_eq!(sim.network().tap(one).records().len(), 30);
        assert!(sim.network().tap(one).records().iter().all(|r| r.verifier_id == verifiers[0]));
        let h = sim.network().tap(half).records().len();
        assert!((15..=45).contains(&h));
    }

    #[test]
    fn scrambling_can_be_bypassed() {
        let mut sim = sim_with(2, 1);
        let (v, p) = (id(0x1001), id(0x1002));
        sim.node_mut(&p).unwrap().set_scrambling(false);
        sim.enroll(&p, &[v.clone()], 50, 50).unwrap();
        let puf = sim.node(&p).unwrap().puf().clone();
        for r in sim.node(&v).unwrap().stored_crps(&p) {
            assert_eq!(r.expected_response[0], puf.eval_noiseless(&r.challenge).unwrap());
        }
        assert!(sim.run_traffic(&p).unwrap().iter().all(|o| o.decision.is_accept()));
    }

    #[test]
    fn noisy_devices_authenticate_with_tolerance() {
        let scrambler = default_scrambler().with_response_bits(32).unwrap();
        let mut sim = Simulation::new(scrambler, 3, Network::new(0.0, 4).unwrap());
        let (v, p) = (id(1), id(2));
        sim.add_node(Node::new(v.clone(), PufInstance::new(64, 0.0, 1).unwrap(), 1)).unwrap();
        sim.add_node(Node::new(p.clone(), PufInstance::new(64, 0.3, 2).unwrap(), 2)).unwrap();
        sim.apply_default_tolerance();
        assert_eq!(sim.tolerated_bit_errors(), 3);
        sim.enroll(&p, &[v.clone()], 200, 200).unwrap();
        let accepted = sim.run_traffic(&p).unwrap().iter().filter(|o| o.decision.is_accept()).count();
        assert!(accepted >= 190, "accepted {accepted}/200");
    }
}
