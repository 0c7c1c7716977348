use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use daup::experiments::{self, Deployment, ExperimentSpec, ScenarioKind, SourceKind, TableKind};
use daup::ml_attack::{evaluate, train, AttackDataset, Learner, MlpInput};
use daup::records::{read_records, write_records, RecordFormat};

#[derive(Parser)]
#[command(name = "daup", version, about = "PUF authentication with challenge scrambling, and modeling attacks against it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enroll the prover with every verifier and dump the CRPs each verifier holds.
    Enroll(EnrollArgs),
    /// Enroll, run one round of authentications and dump the attacker's capture.
    Traffic(EnrollArgs),
    /// Train a model on one record file and score it on another.
    Attack(AttackArgs),
    /// Accuracy against training size, with scrambling off and on.
    Fig3(SeededArgs),
    /// Cross-verifier attack table.
    Table(TableArgs),
    /// Memory footprint and per-authentication operation counts.
    Overhead(Common),
}

/// Flags that override fields of the experiment spec.
#[derive(Args, Clone)]
struct Common {
    /// Spec file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    node_count: Option<usize>,
    #[arg(long)]
    n_bits: Option<usize>,
    #[arg(long)]
    id_bits: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    response_bits: Option<usize>,
    /// LFSR feedback polynomial exponents, e.g. `6,5`.
    #[arg(long, value_delimiter = ',')]
    taps: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    crp_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    training_sizes: Option<Vec<usize>>,
    #[arg(long)]
    holdout: Option<usize>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioKind>,
    #[arg(long, value_enum)]
    source: Option<SourceKind>,
    /// 1-based verifier indices for scenarios I and II.
    #[arg(long, value_delimiter = ',')]
    links: Option<Vec<usize>>,
    #[arg(long)]
    capture_percent: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    capture_percents: Option<Vec<u8>>,
    #[arg(long, value_enum)]
    learner: Option<Learner>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    mlp_input: Option<MlpInput>,
    #[arg(long)]
    ti: Option<u64>,
    #[arg(long)]
    ar: Option<u64>,
    #[arg(long)]
    nd: Option<u64>,
    #[arg(long)]
    r_bits: Option<u64>,
}

impl Common {
    fn spec(&self, seed: Option<u64>) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentSpec::default(),
        };
        macro_rules! set {
            ($($field:ident).+ <- $value:expr) => {
                if let Some(v) = $value.clone() {
                    spec.$($field).+ = v;
                }
            };
        }
        set!(seed <- seed);
        set!(node_count <- self.node_count);
        set!(n_bits <- self.n_bits);
        set!(id_bits <- self.id_bits);
        set!(noise_sigma <- self.noise_sigma);
        set!(scrambler.response_bits <- self.response_bits);
        set!(scrambler.taps <- self.taps);
        set!(crp_sizes <- self.crp_sizes);
        set!(training_sizes <- self.training_sizes);
        set!(holdout <- self.holdout);
        set!(scenario <- self.scenario);
        set!(source <- self.source);
        set!(links <- self.links);
        set!(capture_percent <- self.capture_percent);
        set!(capture_percents <- self.capture_percents);
        set!(learner <- self.learner);
        set!(repetitions <- self.repetitions);
        set!(mlp.input <- self.mlp_input);
        set!(overhead.ti <- self.ti);
        set!(overhead.ar <- self.ar);
        set!(overhead.nd <- self.nd);
        set!(overhead.r_bits <- self.r_bits);
        if let Some(e) = self.epochs {
            spec.mlp.epochs = e;
            spec.lr.epochs = e;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct EnrollArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// Challenges the server generates; defaults to the per-verifier count times the verifier count.
    #[arg(long)]
    challenges: Option<usize>,
    /// CRPs delivered to each verifier; defaults to the first CRP size.
    #[arg(long)]
    per_verifier: Option<usize>,
    /// Record the target with scrambling bypassed.
    #[arg(long)]
    unscrambled: bool,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// Record file the model is trained on.
    #[arg(long)]
    train: PathBuf,
    /// Record file the model is scored on.
    #[arg(long)]
    test: PathBuf,
    /// Response bit to attack.
    #[arg(long, default_value_t = 0)]
    bit: usize,
}

#[derive(Args)]
struct SeededArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    which: u8,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_summary(dir: &Path, name: &str, spec: &ExperimentSpec, what: &str) -> Result<()> {
    fs::write(dir.join(name), experiments::summary_text(spec, what)?)?;
    Ok(())
}

fn enroll(args: &EnrollArgs, with_traffic: bool) -> Result<()> {
    let spec = args.common.spec(args.seed)?;
    let per = args.per_verifier.unwrap_or(spec.crp_sizes[0]);
    let challenges = args.challenges.unwrap_or(per * spec.verifier_count());
    let out = &args.common.out;
    fs::create_dir_all(out)?;

    let mut dep = Deployment::build(&spec, experiments::derive_seed(spec.seed, &[11, 1]), !args.unscrambled)?;
    let enrollment = dep.sim.enroll(&dep.target, &dep.verifiers, challenges, per)?;
    let held: Vec<_> = enrollment.distributed.values().flatten().cloned().collect();
    let fmt = held.first().map(RecordFormat::of).context("no CRPs were enrolled")?;
    write_records(create(out, "enrollment.txt")?, fmt, &held)?;
    dep.sim.node(&dep.target)?.puf().save(&out.join("prover_puf.toml"))?;
    let ids: String = std::iter::once(format!("target {}", dep.target))
        .chain(dep.verifiers.iter().enumerate().map(|(i, v)| format!("V{} {v}", i + 1)))
        .map(|l| l + "\n")
        .collect();
    fs::write(out.join("nodes.txt"), ids)?;
    println!("enrolled {} with {} verifiers, {} CRPs each", dep.target, dep.verifiers.len(), per);

    if with_traffic {
        let traffic = daup::adversary::record_traffic(&mut dep.sim, &dep.target, experiments::derive_seed(spec.seed, &[11, 2]))?;
        write_records(create(out, "traffic.txt")?, fmt, &traffic.records)?;
        let scenario = if args.unscrambled { ScenarioKind::Baseline } else { spec.scenario };
        let spec = ExperimentSpec { scenario, ..spec };
        let capture = experiments::capture(&spec, &dep, &traffic, experiments::derive_seed(spec.seed, &[11, 3]))?;
        write_records(create(out, "capture.txt")?, fmt, &capture.entries)?;
        println!(
            "recorded {} exchanges; scenario {} ({:?}) captured {} records",
            traffic.records.len(),
            capture.scenario,
            capture.source,
            capture.len()
        );
    }
    Ok(())
}

fn attack(args: &AttackArgs) -> Result<()> {
    let spec = args.common.spec(args.seed)?;
    let load = |p: &Path| -> Result<_> {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        Ok(read_records(BufReader::new(f))?.1)
    };
    let (train_recs, test_recs) = (load(&args.train)?, load(&args.test)?);
    let seen: std::collections::HashSet<_> = train_recs.iter().map(|r| &r.challenge).collect();
    let test_recs: Vec<_> = test_recs.into_iter().filter(|r| !seen.contains(&r.challenge)).collect();
    if test_recs.is_empty() {
        bail!("no test records left after removing challenges seen in training");
    }
    let train_ds = AttackDataset::from_records(&train_recs, args.bit)?;
    let test_ds = AttackDataset::from_records(&test_recs, args.bit)?;
    info!("training {} on {} records", spec.learner, train_ds.len());
    let model = train(spec.learner, &train_ds, &spec.lr, &spec.mlp)?;
    let acc = evaluate(&model, &test_ds)?;
    fs::create_dir_all(&args.common.out)?;
    fs::write(args.common.out.join("model.toml"), model.to_toml()?)?;
    println!("accuracy {:.4} ({}/{}) on {} training records", acc.fraction(), acc.correct, acc.total, train_ds.len());
    Ok(())
}

fn fig3(args: &SeededArgs) -> Result<()> {
    let spec = args.common.spec(Some(args.seed))?;
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    let report = experiments::run_fig3(&spec)?;
    experiments::write_fig3_csv(create(out, "fig3.csv")?, &report)?;
    experiments::write_fig3_summary_csv(create(out, "fig3_summary.csv")?, &report)?;
    write_summary(out, "fig3_summary.txt", &spec, "accuracy against training size")?;
    for s in report.summary() {
        println!(
            "{:>6} scrambled={:<5} mean {:.4} std {:.4} over {} runs",
            s.training_size, s.scrambled, s.mean, s.std, s.runs
        );
    }
    Ok(())
}

fn table(args: &TableArgs) -> Result<()> {
    let spec = args.common.spec(Some(args.seed))?;
    let kind = TableKind::from_number(args.which)?;
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    let report = experiments::run_table(&spec, kind)?;
    let n = kind.number();
    experiments::write_table_matrix_csv(create(out, &format!("table{n}.csv"))?, &report)?;
    experiments::write_table_long_csv(create(out, &format!("table{n}_long.csv"))?, &report)?;
    write_summary(out, &format!("table{n}_summary.txt"), &spec, &format!("table {n}"))?;
    let mut matrix = Vec::new();
    experiments::write_table_matrix_csv(&mut matrix, &report)?;
    print!("{}", String::from_utf8(matrix)?);
    Ok(())
}

fn overhead(common: &Common) -> Result<()> {
    let spec = common.spec(None)?;
    fs::create_dir_all(&common.out)?;
    let r = experiments::run_overhead_report(&spec)?;
    experiments::write_overhead_csv(create(&common.out, "overhead.csv")?, &spec, &r)?;
    println!("memory per node: {} bits ({} bytes)", r.memory_bits, r.memory_bytes);
    println!(
        "per authentication: {} PUF queries ({} seed + {} response), {} LFSR clocks",
        r.puf_queries, r.seed_queries, r.response_queries, r.lfsr_clocks
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Enroll(a) => enroll(&a, false),
        Command::Traffic(a) => enroll(&a, true),
        Command::Attack(a) => attack(&a),
        Command::Fig3(a) => fig3(&a),
        Command::Table(a) => table(&a),
        Command::Overhead(c) => overhead(&c),
    }
}
