//! Batch experiments: deployments, attack sweeps and the CSV/text reports the
//! command-line front end writes.
//!
//! Every random draw in a run descends from [`ExperimentSpec::seed`] through
//! [`derive_seed`], and results are assembled in job order, so equal specs
//! produce byte-identical output regardless of thread count.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{self, CaptureLog, TrafficLog};
use crate::bits::{Bits, NodeId};
use crate::error::{Error, Result};
use crate::ml_attack::{evaluate, train, AttackDataset, Learner, LrConfig, MlpConfig};
use crate::protocol::{memory_size, CrpRecord, Network, Node, Simulation};
use crate::puf::PufInstance;
use crate::scrambler::{Scrambler, ScramblerConfig};

/// Capture scenario selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// One link with scrambling bypassed.
    Baseline,
    /// One verifier's link.
    I,
    /// Several verifiers' links.
    Ii,
    /// A fraction of every link.
    Iii,
}

/// Where the attacker's records come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Eavesdrop,
    HackedNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverheadSpec {
    /// Time units between re-enrollments.
    pub ti: u64,
    /// Authentications per time unit.
    pub ar: u64,
    /// Nodes in the network.
    pub nd: u64,
    /// Response bits stored per CRP.
    pub r_bits: u64,
}

impl Default for OverheadSpec {
    fn default() -> Self {
        OverheadSpec { ti: 10, ar: 10, nd: 100, r_bits: 32 }
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    /// Master seed.
    pub seed: u64,
    /// One prover plus `node_count - 1` verifiers.
    pub node_count: usize,
    pub n_bits: usize,
    pub id_bits: usize,
    pub noise_sigma: f64,
    pub scrambler: ScramblerConfig,
    /// CRPs each verifier holds for the prover, one table cell value per entry.
    pub crp_sizes: Vec<usize>,
    pub training_sizes: Vec<usize>,
    pub holdout: usize,
    pub scenario: ScenarioKind,
    pub source: SourceKind,
    /// 1-based verifier indices captured in scenarios I and II.
    pub links: Vec<usize>,
    /// Capture percentage for scenario III.
    pub capture_percent: u8,
    /// Rows of the scenario III table.
    pub capture_percents: Vec<u8>,
    pub learner: Learner,
    pub repetitions: usize,
    pub lr: LrConfig,
    pub mlp: MlpConfig,
    pub overhead: OverheadSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            seed: 1,
            node_count: 6,
            n_bits: 64,
            id_bits: 32,
            noise_sigma: 0.0,
            scrambler: ScramblerConfig::default(),
            crp_sizes: vec![100, 1000],
            training_sizes: vec![100, 500, 1000, 3000, 5000, 10000, 20000],
            holdout: 2000,
            scenario: ScenarioKind::I,
            source: SourceKind::Eavesdrop,
            links: vec![1, 2],
            capture_percent: 50,
            capture_percents: vec![10, 20, 30, 40, 50],
            learner: Learner::Mlp,
            repetitions: 5,
            lr: LrConfig::default(),
            mlp: MlpConfig::default(),
            overhead: OverheadSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(s: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn verifier_count(&self) -> usize {
        self.node_count.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count < 3 {
            return Err(Error::Config(format!("need at least 3 nodes, got {}", self.node_count)));
        }
        if self.id_bits == 0 || self.id_bits > 64 {
            return Err(Error::Config(format!("id_bits must be in 1..=64, got {}", self.id_bits)));
        }
        if self.id_bits < 64 && (1u64 << self.id_bits) < self.node_count as u64 {
            return Err(Error::Config(format!("{} id bits cannot name {} nodes", self.id_bits, self.node_count)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be non-negative, got {}", self.noise_sigma)));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        if self.holdout == 0 {
            return Err(Error::Config("holdout must be positive".into()));
        }
        if self.crp_sizes.contains(&0) {
            return Err(Error::Config("CRP counts must be positive".into()));
        }
        if self.training_sizes.contains(&0) {
            return Err(Error::Config("training sizes must be positive".into()));
        }
        if self.capture_percents.iter().chain([&self.capture_percent]).any(|&p| p > 100) {
            return Err(Error::Config("capture percentages must be in 0..=100".into()));
        }
        if let Some(&bad) = self.links.iter().find(|&&l| l == 0 || l > self.verifier_count()) {
            return Err(Error::Config(format!("link index {bad} outside 1..={}", self.verifier_count())));
        }
        Scrambler::new(self.n_bits, &self.scrambler)?;
        Ok(())
    }

    fn scrambler(&self) -> Result<Scrambler> {
        Scrambler::new(self.n_bits, &self.scrambler)
    }
}

/// Mixes `tags` into `base` (splitmix64 finaliser per step).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut x = base;
    for &t in tags {
        x = x.wrapping_add(t).wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

const TAG_FIG3: u64 = 3;
const TAG_TABLE: u64 = 7;
const TAG_CLI: u64 = 11;

/// A simulated network: the target prover and its verifiers.
#[derive(Debug)]
pub struct Deployment {
    pub sim: Simulation,
    pub target: NodeId,
    pub verifiers: Vec<NodeId>,
}

impl Deployment {
    /// Fresh devices and IDs drawn from `seed`. Scrambling on the target is
    /// set by `scrambled`; the devices themselves depend only on `seed`.
    pub fn build(spec: &ExperimentSpec, seed: u64, scrambled: bool) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sim = Simulation::new(spec.scrambler()?, rng.random(), Network::new(0.0, rng.random())?);
        let mut ids = Vec::with_capacity(spec.node_count);
        let mut seen = HashSet::new();
        while ids.len() < spec.node_count {
            let id = NodeId::from_bits(Bits::random(spec.id_bits, &mut rng));
            if seen.insert(id.clone()) {
                ids.push(id);
            }
        }
        for id in &ids {
            let puf = PufInstance::new(spec.n_bits, spec.noise_sigma, rng.random())?;
            let mut node = Node::new(id.clone(), puf, rng.random());
            if id == &ids[0] {
                node.set_scrambling(scrambled);
            }
            sim.add_node(node)?;
        }
        sim.apply_default_tolerance();
        let target = ids.remove(0);
        Ok(Deployment { sim, target, verifiers: ids })
    }

    /// Enrolls the target with every verifier and records one full round of
    /// traffic.
    pub fn enroll_and_record(&mut self, n_challenges: usize, per_verifier: usize, tap_seed: u64) -> Result<TrafficLog> {
        self.sim.enroll(&self.target, &self.verifiers, n_challenges, per_verifier)?;
        adversary::record_traffic(&mut self.sim, &self.target, tap_seed)
    }

    /// The server's full tabulation for `verifier`, i.e. every response that
    /// verifier could ever expect from the target.
    pub fn tabulation(&self, verifier: &NodeId) -> Result<&[CrpRecord]> {
        self.sim
            .server()
            .table(&self.target, verifier)
            .ok_or_else(|| Error::NoCrps { verifier: verifier.clone(), prover: self.target.clone() })
    }

    pub fn verifier(&self, index: usize) -> Result<&NodeId> {
        index
            .checked_sub(1)
            .and_then(|i| self.verifiers.get(i))
            .ok_or_else(|| Error::Config(format!("no verifier number {index}")))
    }
}

/// Builds the capture for `spec.scenario` from recorded traffic.
pub fn capture(spec: &ExperimentSpec, dep: &Deployment, traffic: &TrafficLog, seed: u64) -> Result<CaptureLog> {
    let links = spec.links.iter().map(|&l| dep.verifier(l).cloned()).collect::<Result<Vec<_>>>()?;
    let first = links.first().ok_or_else(|| Error::Config("no links selected".into()))?;
    match (spec.scenario, spec.source) {
        (ScenarioKind::Baseline, _) => adversary::baseline_capture(traffic, first),
        (ScenarioKind::I, SourceKind::Eavesdrop) => adversary::scenario_single_link(traffic, first),
        (ScenarioKind::Ii, SourceKind::Eavesdrop) => adversary::scenario_multi_link(traffic, &links),
        (ScenarioKind::I, SourceKind::HackedNode) => {
            Ok(adversary::hacked_node(dep.sim.node(first)?, &dep.target, adversary::Scenario::SingleLink))
        }
        (ScenarioKind::Ii, SourceKind::HackedNode) => {
            let mut entries = Vec::new();
            for (i, v) in links.iter().enumerate() {
                if links[..i].contains(v) {
                    return Err(Error::DuplicateLink(v.clone()));
                }
                entries.extend_from_slice(dep.sim.node(v)?.stored_crps(&dep.target));
            }
            Ok(CaptureLog { entries, source: adversary::CaptureSource::HackedNode, scenario: adversary::Scenario::MultiLink })
        }
        (ScenarioKind::Iii, _) => adversary::scenario_fraction(traffic, spec.capture_percent, seed),
    }
}

/// Up to `limit` records of `table` whose challenge is not in `exclude`.
fn holdout_from(table: &[CrpRecord], exclude: &HashSet<&Bits>, limit: usize) -> Vec<CrpRecord> {
    table.iter().filter(|r| !exclude.contains(&r.challenge)).take(limit).cloned().collect()
}

/// One model to train and the test sets to score it on.
struct Job {
    train: Vec<CrpRecord>,
    tests: Vec<(usize, Vec<CrpRecord>)>,
    model_seed: u64,
}

struct JobResult {
    train_n: usize,
    /// `(column, test_n, accuracy)`.
    scores: Vec<(usize, usize, f64)>,
}

/// Trains one model per response bit and averages the per-bit accuracies.
fn run_job(spec: &ExperimentSpec, job: &Job) -> Result<JobResult> {
    let bits = job.train.first().map_or(1, |r| r.expected_response.len());
    let mut scores: Vec<(usize, usize, f64)> = job.tests.iter().map(|(col, t)| (*col, t.len(), 0.0)).collect();
    for bit in 0..bits {
        let ds = AttackDataset::from_records(&job.train, bit)?;
        let mlp = MlpConfig { seed: derive_seed(job.model_seed, &[bit as u64]), ..spec.mlp.clone() };
        let model = train(spec.learner, &ds, &spec.lr, &mlp)?;
        for ((_, test), score) in job.tests.iter().zip(&mut scores) {
            let holdout = AttackDataset::from_records(test, bit)?;
            score.2 += evaluate(&model, &holdout)?.fraction() / bits as f64;
        }
    }
    Ok(JobResult { train_n: job.train.len(), scores })
}

fn run_jobs(spec: &ExperimentSpec, jobs: &[Job]) -> Result<Vec<JobResult>> {
    jobs.par_iter().map(|j| run_job(spec, j)).collect()
}

/// One accuracy measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Point {
    pub training_size: usize,
    pub scrambled: bool,
    pub verifier: usize,
    pub repetition: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Summary {
    pub training_size: usize,
    pub scrambled: bool,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct Fig3Report {
    pub points: Vec<Fig3Point>,
}

impl Fig3Report {
    pub fn summary(&self) -> Vec<Fig3Summary> {
        let mut keys: Vec<(usize, bool)> = self.points.iter().map(|p| (p.training_size, p.scrambled)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|(training_size, scrambled)| {
                let accs: Vec<f64> = self
                    .points
                    .iter()
                    .filter(|p| p.training_size == training_size && p.scrambled == scrambled)
                    .map(|p| p.accuracy)
                    .collect();
                let (mean, std) = mean_std(&accs);
                Fig3Summary { training_size, scrambled, runs: accs.len(), mean, std }
            })
            .collect()
    }

    pub fn mean_accuracy(&self, training_size: usize, scrambled: bool) -> Option<f64> {
        self.summary().into_iter().find(|s| s.training_size == training_size && s.scrambled == scrambled).map(|s| s.mean)
    }
}

/// Same-verifier learning curve: train on one link's records, test on other
/// challenges of the same verifier, with scrambling off and on.
pub fn run_fig3(spec: &ExperimentSpec) -> Result<Fig3Report> {
    spec.validate()?;
    let max_train = *spec
        .training_sizes
        .iter()
        .max()
        .ok_or_else(|| Error::Config("no training sizes given".into()))?;
    let mut points = Vec::new();
    for rep in 0..spec.repetitions {
        let rep_seed = derive_seed(spec.seed, &[TAG_FIG3, rep as u64]);
        for scrambled in [false, true] {
            let mut dep = Deployment::build(spec, rep_seed, scrambled)?;
            let traffic = dep.enroll_and_record(max_train + spec.holdout, max_train, derive_seed(rep_seed, &[1]))?;
            let mut jobs = Vec::new();
            let mut keys = Vec::new();
            for (vi, v) in dep.verifiers.iter().enumerate() {
                let link: Vec<CrpRecord> = traffic.link(v).cloned().collect();
                let seen: HashSet<&Bits> = link.iter().map(|r| &r.challenge).collect();
                let test = holdout_from(dep.tabulation(v)?, &seen, spec.holdout);
                for &size in &spec.training_sizes {
                    if size > link.len() {
                        return Err(Error::InsufficientTraffic { required: size, available: link.len() });
                    }
                    jobs.push(Job {
                        train: link[..size].to_vec(),
                        tests: vec![(vi, test.clone())],
                        model_seed: derive_seed(rep_seed, &[2, scrambled as u64, vi as u64, size as u64]),
                    });
                    keys.push((size, vi));
                }
            }
            for ((size, vi), res) in keys.into_iter().zip(run_jobs(spec, &jobs)?) {
                let (_, test_n, accuracy) = res.scores[0];
                points.push(Fig3Point {
                    training_size: size,
                    scrambled,
                    verifier: vi + 1,
                    repetition: rep,
                    train_n: res.train_n,
                    test_n,
                    accuracy,
                });
            }
        }
    }
    Ok(Fig3Report { points })
}

/// Which attack table to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Train on link `i`, test against verifier `j`.
    SingleLink,
    /// Train on links `i` and `k`, test against `j`.
    LinkPairs,
    /// Train on a percentage of every link, test against `j`.
    Fraction,
}

impl TableKind {
    pub fn from_number(which: u8) -> Result<Self> {
        match which {
            1 => Ok(TableKind::SingleLink),
            2 => Ok(TableKind::LinkPairs),
            3 => Ok(TableKind::Fraction),
            _ => Err(Error::Config(format!("table must be 1, 2 or 3, got {which}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            TableKind::SingleLink => 1,
            TableKind::LinkPairs => 2,
            TableKind::Fraction => 3,
        }
    }
}

/// Aggregated accuracy for one (row, column, CRP count) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub row: String,
    pub column: String,
    pub crp_per_link: usize,
    pub reps: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct TableReport {
    pub kind: TableKind,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub crp_sizes: Vec<usize>,
    /// Per-repetition accuracies keyed by `(row, column, size index)`; `None`
    /// on blank cells.
    pub samples: Vec<Vec<Vec<Option<CellSamples>>>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellSamples {
    pub accuracies: Vec<f64>,
    pub train_n: Vec<usize>,
    pub test_n: Vec<usize>,
}

impl TableReport {
    /// Non-blank cells in row-major order.
    pub fn cells(&self) -> Vec<TableCell> {
        let mut out = Vec::new();
        for (ri, row) in self.rows.iter().enumerate() {
            for (ci, col) in self.columns.iter().enumerate() {
                for (si, &size) in self.crp_sizes.iter().enumerate() {
                    if let Some(s) = &self.samples[ri][ci][si] {
                        let (mean, std) = mean_std(&s.accuracies);
                        out.push(TableCell {
                            row: row.clone(),
                            column: col.clone(),
                            crp_per_link: size,
                            reps: s.accuracies.len(),
                            train_n: s.train_n.iter().sum::<usize>() / s.train_n.len().max(1),
                            test_n: s.test_n.iter().copied().min().unwrap_or(0),
                            mean,
                            std,
                            min: s.accuracies.iter().copied().fold(f64::INFINITY, f64::min),
                            max: s.accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        });
                    }
                }
            }
        }
        out
    }
}

fn table_rows(kind: TableKind, spec: &ExperimentSpec) -> Vec<(String, Vec<usize>)> {
    let v = spec.verifier_count();
    match kind {
        TableKind::SingleLink => (0..v).map(|i| (format!("V{}", i + 1), vec![i])).collect(),
        TableKind::LinkPairs => {
            let mut rows = Vec::new();
            for i in 0..v {
                for k in i + 1..v {
                    rows.push((format!("V{}+V{}", i + 1, k + 1), vec![i, k]));
                }
            }
            rows
        }
        TableKind::Fraction => spec.capture_percents.iter().map(|p| (format!("L={p}"), Vec::new())).collect(),
    }
}

/// Cross-verifier attack tables. Each cell is the accuracy of a model
/// trained on the row's capture against the column verifier's responses to
/// challenges the attacker never saw.
pub fn run_table(spec: &ExperimentSpec, kind: TableKind) -> Result<TableReport> {
    spec.validate()?;
    let rows = table_rows(kind, spec);
    let n_v = spec.verifier_count();
    let columns: Vec<String> = (1..=n_v).map(|j| format!("V{j}")).collect();
    let mut samples = vec![vec![vec![None::<CellSamples>; spec.crp_sizes.len()]; n_v]; rows.len()];
    for (ri, (_, links)) in rows.iter().enumerate() {
        for ci in 0..n_v {
            if !links.contains(&ci) {
                samples[ri][ci].iter_mut().for_each(|s| *s = Some(CellSamples::default()));
            }
        }
    }
    for rep in 0..spec.repetitions {
        for (si, &m) in spec.crp_sizes.iter().enumerate() {
            let seed = derive_seed(spec.seed, &[TAG_TABLE, kind.number() as u64, rep as u64, m as u64]);
            let mut dep = Deployment::build(spec, seed, true)?;
            let pool = (n_v * m).max(m + spec.holdout);
            let traffic = dep.enroll_and_record(pool, m, derive_seed(seed, &[1]))?;
            let tables = dep.verifiers.iter().map(|v| dep.tabulation(v)).collect::<Result<Vec<_>>>()?;
            let mut jobs = Vec::with_capacity(rows.len());
            for (ri, (_, links)) in rows.iter().enumerate() {
                let captured = match kind {
                    TableKind::SingleLink | TableKind::LinkPairs => {
                        let row_spec = ExperimentSpec {
                            scenario: if links.len() == 1 { ScenarioKind::I } else { ScenarioKind::Ii },
                            links: links.iter().map(|i| i + 1).collect(),
                            ..spec.clone()
                        };
                        capture(&row_spec, &dep, &traffic, 0)?
                    }
                    TableKind::Fraction => {
                        adversary::scenario_fraction(&traffic, spec.capture_percents[ri], derive_seed(seed, &[2, ri as u64]))?
                    }
                };
                let seen: HashSet<&Bits> = captured.entries.iter().map(|r| &r.challenge).collect();
                let tests = (0..n_v)
                    .filter(|j| !links.contains(j))
                    .map(|j| (j, holdout_from(tables[j], &seen, spec.holdout)))
                    .collect();
                jobs.push(Job { train: captured.entries, tests, model_seed: derive_seed(seed, &[3, ri as u64]) });
            }
            for (ri, res) in run_jobs(spec, &jobs)?.into_iter().enumerate() {
                for (col, test_n, acc) in res.scores {
                    let cell = samples[ri][col][si].as_mut().expect("blank cells have no tests");
                    cell.accuracies.push(acc);
                    cell.train_n.push(res.train_n);
                    cell.test_n.push(test_n);
                }
            }
        }
    }
    Ok(TableReport {
        kind,
        rows: rows.into_iter().map(|(r, _)| r).collect(),
        columns,
        crp_sizes: spec.crp_sizes.clone(),
        samples,
    })
}

/// Memory and per-authentication operation counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadReport {
    pub memory_bits: u64,
    pub memory_bytes: u64,
    pub seed_queries: u64,
    pub response_queries: u64,
    pub puf_queries: u64,
    pub lfsr_clocks: u64,
}

pub fn run_overhead_report(spec: &ExperimentSpec) -> Result<OverheadReport> {
    spec.validate()?;
    let o = &spec.overhead;
    let memory_bits = memory_size(o.ti, o.ar, o.nd, spec.n_bits as u64, o.r_bits);
    let scrambler = spec.scrambler()?;
    // Counts come from a traced run of the pipeline, not a formula.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[TAG_CLI]));
    let puf = PufInstance::new(spec.n_bits, 0.0, rng.random())?;
    let c = Bits::random(spec.n_bits, &mut rng);
    let id = NodeId::from_bits(Bits::random(spec.id_bits, &mut rng));
    let (_, counts) = scrambler.respond_traced(&puf, &c, &id, &mut rng)?;
    let response_queries = scrambler.response_bits() as u64;
    Ok(OverheadReport {
        memory_bits,
        memory_bytes: memory_bits / 8,
        seed_queries: counts.puf_queries as u64 - response_queries,
        response_queries,
        puf_queries: counts.puf_queries as u64,
        lfsr_clocks: counts.lfsr_clocks as u64,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn pct(x: f64) -> String {
    format!("{:.0}", 100.0 * x)
}

pub fn write_fig3_csv<W: Write>(w: W, report: &Fig3Report) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["training_size", "scrambled", "verifier", "repetition", "train_n", "test_n", "accuracy"])?;
    for p in &report.points {
        out.write_record([
            p.training_size.to_string(),
            p.scrambled.to_string(),
            format!("V{}", p.verifier),
            p.repetition.to_string(),
            p.train_n.to_string(),
            p.test_n.to_string(),
            format!("{:.4}", p.accuracy),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_fig3_summary_csv<W: Write>(w: W, report: &Fig3Report) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["training_size", "scrambled", "runs", "mean", "std"])?;
    for s in report.summary() {
        out.write_record([
            s.training_size.to_string(),
            s.scrambled.to_string(),
            s.runs.to_string(),
            format!("{:.4}", s.mean),
            format!("{:.4}", s.std),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// The table as printed: one cell per (row, column) holding the mean accuracy
/// in percent for each CRP count, the first outside the parentheses.
pub fn write_table_matrix_csv<W: Write>(w: W, report: &TableReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![String::new()];
    header.extend(report.columns.iter().cloned());
    out.write_record(&header)?;
    for (ri, row) in report.rows.iter().enumerate() {
        let mut line = vec![row.clone()];
        for ci in 0..report.columns.len() {
            let vals: Option<Vec<String>> =
                report.samples[ri][ci].iter().map(|s| s.as_ref().map(|s| pct(mean_std(&s.accuracies).0))).collect();
            line.push(match vals.as_deref() {
                None | Some([]) => String::new(),
                Some([only]) => only.clone(),
                Some([first, rest @ ..]) => format!("{first}({})", rest.join("/")),
            });
        }
        out.write_record(&line)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_table_long_csv<W: Write>(w: W, report: &TableReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "table",
        "row",
        "column",
        "crp_per_link",
        "reps",
        "train_n",
        "test_n",
        "mean",
        "std",
        "min",
        "max",
    ])?;
    for c in report.cells() {
        out.write_record([
            report.kind.number().to_string(),
            c.row,
            c.column,
            c.crp_per_link.to_string(),
            c.reps.to_string(),
            c.train_n.to_string(),
            c.test_n.to_string(),
            format!("{:.4}", c.mean),
            format!("{:.4}", c.std),
            format!("{:.4}", c.min),
            format!("{:.4}", c.max),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_overhead_csv<W: Write>(w: W, spec: &ExperimentSpec, r: &OverheadReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "value"])?;
    let o = &spec.overhead;
    let rows: [(&str, u64); 11] = [
        ("ti", o.ti),
        ("ar", o.ar),
        ("nd", o.nd),
        ("n_bits", spec.n_bits as u64),
        ("r_bits", o.r_bits),
        ("memory_bits", r.memory_bits),
        ("memory_bytes", r.memory_bytes),
        ("seed_puf_queries", r.seed_queries),
        ("response_puf_queries", r.response_queries),
        ("puf_queries_per_auth", r.puf_queries),
        ("lfsr_clocks_per_auth", r.lfsr_clocks),
    ];
    for (k, v) in rows {
        out.write_record([k.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Plain-text run metadata: the full spec plus how numbers were aggregated.
pub fn summary_text(spec: &ExperimentSpec, what: &str) -> Result<String> {
    let mut s = String::new();
    writeln!(s, "experiment: {what}").ok();
    writeln!(
        s,
        "accuracies are means over {} repetitions, each with freshly drawn devices and IDs; std is the sample std",
        spec.repetitions
    )
    .ok();
    writeln!(s, "test sets hold up to {} challenges never seen by the attacker", spec.holdout).ok();
    writeln!(s, "\n[spec]\n{}", spec.to_toml()?).ok();
    Ok(s)
}
