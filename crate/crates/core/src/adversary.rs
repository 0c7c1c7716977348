//! Attacker corpora: what an eavesdropper or a node-hacking adversary learns.
//!
//! Tapping the link between a verifier and the target and dumping that
//! verifier's memory both reveal `(C, R̂)` pairs for the target. Scrambled
//! challenges, patterns and seeds never leave the prover, so a log only ever
//! holds the raw challenge and the response the verifier expects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::NodeId;
use crate::error::{Error, Result};
use crate::protocol::{CrpRecord, LinkFilter, NetworkTap, Node, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureSource {
    Eavesdrop,
    HackedNode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scenario {
    /// One link, scrambling bypassed on the prover.
    Baseline,
    /// Scenario I: one verifier's link.
    SingleLink,
    /// Scenario II: several verifiers' links pooled.
    MultiLink,
    /// Scenario III: `percent`% of every link.
    Fraction { percent: u8 },
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Baseline => write!(f, "baseline"),
            Scenario::SingleLink => write!(f, "I"),
            Scenario::MultiLink => write!(f, "II"),
            Scenario::Fraction { percent } => write!(f, "III(L={percent})"),
        }
    }
}

/// Every exchange between the target and its verifiers during a traffic run.
#[derive(Debug, Clone)]
pub struct TrafficLog {
    pub prover: NodeId,
    pub scrambled: bool,
    pub records: Vec<CrpRecord>,
}

impl TrafficLog {
    pub fn link<'a>(&'a self, verifier: &'a NodeId) -> impl Iterator<Item = &'a CrpRecord> + 'a {
        self.records.iter().filter(move |r| &r.verifier_id == verifier)
    }

    pub fn verifiers(&self) -> BTreeSet<NodeId> {
        self.records.iter().map(|r| r.verifier_id.clone()).collect()
    }
}

/// Lets every verifier run its stored CRPs against `prover` while a
/// full-capture tap listens on all links.
pub fn record_traffic(sim: &mut Simulation, prover: &NodeId, tap_seed: u64) -> Result<TrafficLog> {
    let scrambled = sim.node(prover)?.scrambling();
    let tap = sim.network_mut().add_tap(NetworkTap::new(LinkFilter::Any, 1.0, tap_seed)?);
    sim.run_traffic(prover)?;
    let records = sim.network_mut().take_taps().swap_remove(tap).into_records();
    Ok(TrafficLog { prover: prover.clone(), scrambled, records: records.into_iter().filter(|r| &r.prover_id == prover).collect() })
}

#[derive(Debug, Clone)]
pub struct CaptureLog {
    pub entries: Vec<CrpRecord>,
    pub source: CaptureSource,
    pub scenario: Scenario,
}

impl CaptureLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn require_scrambled(traffic: &TrafficLog) -> Result<()> {
    if traffic.scrambled {
        Ok(())
    } else {
        Err(Error::Config("traffic was recorded with scrambling bypassed; use baseline_capture".into()))
    }
}

/// Scenario I: everything exchanged on the link `(verifier, target)`.
pub fn scenario_single_link(traffic: &TrafficLog, verifier: &NodeId) -> Result<CaptureLog> {
    require_scrambled(traffic)?;
    Ok(CaptureLog { entries: traffic.link(verifier).cloned().collect(), source: CaptureSource::Eavesdrop, scenario: Scenario::SingleLink })
}

/// Scenario II: the union of several links. Each link may appear once.
pub fn scenario_multi_link(traffic: &TrafficLog, verifiers: &[NodeId]) -> Result<CaptureLog> {
    require_scrambled(traffic)?;
    let mut seen = BTreeSet::new();
    for v in verifiers {
        if !seen.insert(v) {
            return Err(Error::DuplicateLink(v.clone()));
        }
    }
    let entries = verifiers.iter().flat_map(|v| traffic.link(v).cloned()).collect();
    Ok(CaptureLog { entries, source: CaptureSource::Eavesdrop, scenario: Scenario::MultiLink })
}

/// Scenario III: a uniform `percent`% sample (rounded to the nearest record)
/// of each link's traffic, drawn independently per link.
pub fn scenario_fraction(traffic: &TrafficLog, percent: u8, seed: u64) -> Result<CaptureLog> {
    require_scrambled(traffic)?;
    if percent > 100 {
        return Err(Error::Config(format!("capture percentage must be in 0..=100, got {percent}")));
    }
    let mut by_link: BTreeMap<&NodeId, Vec<&CrpRecord>> = BTreeMap::new();
    for r in &traffic.records {
        by_link.entry(&r.verifier_id).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for records in by_link.values() {
        let take = (records.len() * percent as usize + 50) / 100;
        let mut picked = index::sample(&mut rng, records.len(), take).into_vec();
        picked.sort_unstable();
        entries.extend(picked.into_iter().map(|i| records[i].clone()));
    }
    Ok(CaptureLog { entries, source: CaptureSource::Eavesdrop, scenario: Scenario::Fraction { percent } })
}

/// The unprotected reference: one link of traffic recorded with scrambling
/// bypassed on the prover.
pub fn baseline_capture(traffic: &TrafficLog, verifier: &NodeId) -> Result<CaptureLog> {
    if traffic.scrambled {
        return Err(Error::Config("baseline capture needs traffic recorded with scrambling bypassed".into()));
    }
    Ok(CaptureLog { entries: traffic.link(verifier).cloned().collect(), source: CaptureSource::Eavesdrop, scenario: Scenario::Baseline })
}

/// Memory dump of a compromised verifier: all CRPs it holds for `prover`.
pub fn hacked_node(node: &Node, prover: &NodeId, scenario: Scenario) -> CaptureLog {
    CaptureLog { entries: node.stored_crps(prover).to_vec(), source: CaptureSource::HackedNode, scenario }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Network;
    use crate::puf::PufInstance;
    use crate::scrambler::default_scrambler;

    fn deployment(scrambling: bool, per_verifier: usize) -> (Simulation, NodeId, Vec<NodeId>) {
        let mut sim = Simulation::new(default_scrambler(), 11, Network::new(0.0, 12).unwrap());
        let target = NodeId::new(0xabc0, 32);
        let mut prover = Node::new(target.clone(), PufInstance::new(64, 0.0, 1).unwrap(), 2);
        prover.set_scrambling(scrambling);
        sim.add_node(prover).unwrap();
        let verifiers: Vec<NodeId> = (1..=5).map(|i| NodeId::new(0xabc0 + i, 32)).collect();
        for (i, v) in verifiers.iter().enumerate() {
            sim.add_node(Node::new(v.clone(), PufInstance::new(64, 0.0, 10 + i as u64).unwrap(), 3)).unwrap();
        }
        sim.enroll(&target, &verifiers, 5 * per_verifier, per_verifier).unwrap();
        (sim, target, verifiers)
    }

    #[test]
    fn scenario_sizes() {
        let (mut sim, target, vs) = deployment(true, 100);
        let traffic = record_traffic(&mut sim, &target, 1).unwrap();
        assert_eq!(traffic.records.len(), 500);

        let one = scenario_single_link(&traffic, &vs[0]).unwrap();
        assert_eq!(one.len(), 100);
        assert!(one.entries.iter().all(|r| r.verifier_id == vs[0]));

        let two = scenario_multi_link(&traffic, &vs[..2]).unwrap();
        assert_eq!(two.len(), 200);
        assert!(matches!(scenario_multi_link(&traffic, &[vs[0].clone(), vs[0].clone()]), Err(Error::DuplicateLink(_))));

        assert_eq!(scenario_fraction(&traffic, 0, 1).unwrap().len(), 0);
        assert_eq!(scenario_fraction(&traffic, 50, 1).unwrap().len(), 250);
        let mut all = scenario_fraction(&traffic, 100, 1).unwrap().entries;
        let mut expected = traffic.records.clone();
        all.sort_by(|a, b| (&a.verifier_id, &a.challenge).cmp(&(&b.verifier_id, &b.challenge)));
        expected.sort_by(|a, b| (&a.verifier_id, &a.challenge).cmp(&(&b.verifier_id, &b.challenge)));
        assert_eq!(all, expected);
        assert!(scenario_fraction(&traffic, 101, 1).is_err());
    }

    #[test]
    fn fraction_sampling_is_seed_deterministic() {
        let (mut sim, target, _) = deployment(true, 40);
        let traffic = record_traffic(&mut sim, &target, 1).unwrap();
        let a = scenario_fraction(&traffic, 30, 9).unwrap().entries;
        let b = scenario_fraction(&traffic, 30, 9).unwrap().entries;
        let c = scenario_fraction(&traffic, 30, 10).unwrap().entries;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn hacked_node_dump_equals_its_store() {
        let (mut sim, target, vs) = deployment(true, 100);
        let dump = hacked_node(sim.node(&vs[2]).unwrap(), &target, Scenario::SingleLink);
        assert_eq!(dump.entries, sim.node(&vs[2]).unwrap().stored_crps(&target));
        assert_eq!(dump.source, CaptureSource::HackedNode);

        // Eavesdropping the same link yields the same set.
        let traffic = record_traffic(&mut sim, &target, 1).unwrap();
        let tapped = scenario_single_link(&traffic, &vs[2]).unwrap();
        assert_eq!(tapped.entries, dump.entries);
    }

    #[test]
    fn baseline_requires_unscrambled_traffic() {
        let (mut sim, target, vs) = deployment(false, 20);
        let traffic = record_traffic(&mut sim, &target, 1).unwrap();
        let log = baseline_capture(&traffic, &vs[0]).unwrap();
        let puf = sim.node(&target).unwrap().puf().clone();
        assert!(log.entries.iter().all(|r| r.expected_response[0] == puf.eval_noiseless(&r.challenge).unwrap()));
        assert!(scenario_single_link(&traffic, &vs[0]).is_err());

        let (mut sim, target, vs) = deployment(true, 20);
        let traffic = record_traffic(&mut sim, &target, 1).unwrap();
        assert!(baseline_capture(&traffic, &vs[0]).is_err());
    }
}
