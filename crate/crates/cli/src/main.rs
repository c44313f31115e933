use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ltap_core::association::Association;
use ltap_core::model::{fit_model, sample_scenarios, SamplingMode, ScenarioModel};
use ltap_core::pipeline::io::{read_conflict_records, write_conflict_records, write_json, write_scenarios};
use ltap_core::pipeline::{
    associate_trip, ingest_trips, run_pipeline, run_trips, write_screening, write_trips, Ingested, PipelineConfig, RunStatus,
    RECORDS_FILE, SCENARIOS_FILE, SCREENING_FILE,
};
use ltap_core::stats::{build_distribution, mww_test, Variable};
use ltap_core::synth::{generate_population, NoiseSpec, ParamRanges, PopulationConfig};
use ltap_core::{Parallelism, Platform};

#[derive(Parser)]
#[command(name = "ltap", version, about = "Left-turn-across-path conflict extraction and scenario sampling")]
struct Cli {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 runs sequentially).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Directory holding host.csv and radar.csv.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Platform convention of the input (HT or LV).
    #[arg(long)]
    platform: Option<Platform>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population in the ingestion format.
    Synth {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = Platform::HeavyTruck)]
        platform: Platform,
        /// Fraction of trips built to fail screening.
        #[arg(long, default_value_t = 0.0)]
        decoys: f64,
        /// Multiplier on the reference sensor noise (0 = noiseless).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Population label written to labels.csv.
        #[arg(long)]
        label: Option<String>,
        /// Target speed range at the crossing, `lo,hi` in m/s.
        #[arg(long, value_parser = parse_range)]
        tv_speed: Option<(f64, f64)>,
        /// Prefix for trip ids (lets several populations share a directory).
        #[arg(long)]
        prefix: Option<String>,
    },
    /// Group radar points into target tracks.
    Associate(InputArgs),
    /// Screen tracks for left-turn-across-path events.
    Extract(InputArgs),
    /// Compute conflict metrics for accepted events.
    Metrics(InputArgs),
    /// Mann-Whitney comparison of two labeled populations.
    Compare {
        /// conflict_records.csv
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "d_cp_inv,t_cp_inv,v_sdv,v_tv")]
        variables: Vec<Variable>,
        /// Two labels, `a,b`; defaults to the two labels present.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        labels: Option<Vec<String>>,
    },
    /// Fit a scenario model from conflict records.
    Fit {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = SamplingMode::JointResample)]
        mode: SamplingMode,
    },
    /// Draw scenarios from a fitted model.
    Sample {
        /// model.json written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Run every stage and write the full report.
    Run {
        #[command(flatten)]
        input: InputArgs,
        /// Sampling mode for scenario generation (omit to skip).
        #[arg(long)]
        mode: Option<SamplingMode>,
        #[arg(long)]
        samples: Option<usize>,
        /// Also write time-to-conflict-point traces.
        #[arg(long)]
        traces: bool,
    },
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    if hi < lo {
        return Err("lo must not exceed hi".into());
    }
    Ok((lo, hi))
}

const REFERENCE_NOISE: NoiseSpec = NoiseSpec { range: 0.5, range_rate: 0.25, transversal: 0.3, gps: 1.0 };

struct Ctx {
    cfg: PipelineConfig,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(j) = cli.jobs {
            cfg.jobs = j;
        }
        if let Some(o) = &cli.out {
            cfg.output = o.clone();
        }
        Ok(Ctx { cfg })
    }

    fn par(&self) -> Parallelism {
        Parallelism::from_jobs(self.cfg.jobs)
    }

    fn ingest(&mut self, args: &InputArgs) -> Result<Ingested> {
        if let Some(i) = &args.input {
            self.cfg.input = i.clone();
        }
        if let Some(p) = args.platform {
            self.cfg.screening.platform = p;
        }
        self.cfg.validate()?;
        if !self.cfg.input.is_dir() {
            bail!("input directory {} does not exist", self.cfg.input.display());
        }
        let ingested = ingest_trips(&self.cfg.input, self.cfg.screening.platform)?;
        for d in &ingested.diagnostics {
            eprintln!("warning: {}:{} [{}] {}", d.file, d.line, d.column, d.message);
        }
        Ok(ingested)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.cfg.output)
            .with_context(|| format!("creating {}", self.cfg.output.display()))?;
        Ok(&self.cfg.output)
    }
}

fn write_tracks(path: &Path, rows: &[(String, Association)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trip_id", "track_id", "t", "range", "range_rate", "transversal", "azimuth"])?;
    for (trip, assoc) in rows {
        let tagged = assoc
            .tracks
            .iter()
            .flat_map(|tr| tr.points.iter().map(move |p| (tr.track_id as i64, p)))
            .chain(assoc.noise.iter().map(|p| (-1, p)));
        for (id, p) in tagged {
            w.write_record([
                trip.clone(),
                id.to_string(),
                p.t.to_string(),
                p.range.to_string(),
                p.range_rate.to_string(),
                p.transversal.to_string(),
                p.azimuth.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn labels_present(records: &[ltap_core::metrics::ConflictRecord]) -> Vec<String> {
    let mut l: Vec<String> = records.iter().map(|r| r.label.clone()).collect();
    l.sort();
    l.dedup();
    l
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let mut ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Synth { n, platform, decoys, noise, label, tv_speed, prefix } => {
            let mut ranges = ParamRanges::default();
            if let Some(r) = tv_speed {
                ranges.tv_speed = r;
            }
            let pop = PopulationConfig {
                n,
                decoy_fraction: decoys,
                platform,
                ranges,
                noise: REFERENCE_NOISE.scaled(noise),
                seed: ctx.cfg.seed,
                ..Default::default()
            };
            let trips = generate_population(&pop, ctx.par())?;
            let dir = ctx.out_dir()?;
            let mut records: Vec<_> = trips.iter().map(|t| t.record.clone()).collect();
            for r in &mut records {
                if let Some(p) = &prefix {
                    r.trip_id = format!("{p}{}", r.trip_id);
                }
                r.label.clone_from(&label);
            }
            write_trips(dir, &records)?;
            let mut w = csv::Writer::from_path(dir.join("truth.csv"))?;
            w.write_record(["trip_id", "kind", "t_cp", "d_cp", "v_sdv", "v_tv"])?;
            for (rec, t) in records.iter().zip(&trips) {
                w.write_record([
                    rec.trip_id.clone(),
                    t.kind.code().to_string(),
                    t.truth.t_cp.to_string(),
                    t.truth.d_cp.to_string(),
                    t.truth.v_sdv.to_string(),
                    t.truth.v_tv.to_string(),
                ])?;
            }
            w.flush()?;
            println!("wrote {} trips to {}", records.len(), dir.display());
        }
        Command::Associate(args) => {
            let ingested = ctx.ingest(&args)?;
            let cfg = ctx.cfg.association;
            let rows = ltap_core::parallel::map(&ingested.trips, ctx.par(), |t| {
                (t.trip_id.clone(), associate_trip(t, &cfg))
            });
            let dir = ctx.out_dir()?;
            write_tracks(&dir.join("tracks.csv"), &rows)?;
            let tracks: usize = rows.iter().map(|r| r.1.tracks.len()).sum();
            let noise: usize = rows.iter().map(|r| r.1.noise.len()).sum();
            println!("{} trips, {tracks} tracks, {noise} noise points", rows.len());
        }
        Command::Extract(args) => {
            let ingested = ctx.ingest(&args)?;
            ctx.cfg.model_mode = None;
            let report = run_trips(&ingested.trips, &ctx.cfg)?;
            let dir = ctx.out_dir()?;
            write_screening(&dir.join(SCREENING_FILE), &report.candidates)?;
            println!("{}", serde_json::to_string_pretty(&report.funnel)?);
            eprintln!("screening results in {}", dir.join(SCREENING_FILE).display());
        }
        Command::Metrics(args) => {
            let ingested = ctx.ingest(&args)?;
            ctx.cfg.model_mode = None;
            let report = run_trips(&ingested.trips, &ctx.cfg)?;
            let dir = ctx.out_dir()?;
            write_conflict_records(&dir.join(RECORDS_FILE), &report.records)?;
            println!("{} conflict records", report.records.len());
        }
        Command::Compare { records, variables, labels } => {
            let recs = read_conflict_records(&records)?;
            let (la, lb) = match labels {
                Some(v) => (v[0].clone(), v[1].clone()),
                None => match labels_present(&recs).as_slice() {
                    [a, b] => (a.clone(), b.clone()),
                    other => bail!("expected two labels in the records, found {}; pass --labels", other.len()),
                },
            };
            let pick = |l: &str| recs.iter().filter(|r| r.label == l).cloned().collect::<Vec<_>>();
            let (ra, rb) = (pick(&la), pick(&lb));
            let mut out = Vec::new();
            for var in variables {
                let a = build_distribution(&ra, var, la.as_str())?;
                let b = build_distribution(&rb, var, lb.as_str())?;
                let res = mww_test(&a, &b)?;
                out.push(serde_json::json!({
                    "variable": var.code(),
                    "label_a": la, "label_b": lb,
                    "n_a": a.samples.len(), "n_b": b.samples.len(),
                    "u": res.u_statistic, "z": res.z_score, "p": res.p_value,
                    "method": res.method,
                }));
            }
            let text = serde_json::to_string_pretty(&out)?;
            if cli.out.is_some() {
                let dir = ctx.out_dir()?;
                std::fs::write(dir.join("comparison.json"), text.clone() + "\n")?;
            }
            println!("{text}");
        }
        Command::Fit { records, mode } => {
            let recs = read_conflict_records(&records)?;
            let model = fit_model(&recs, mode)?;
            let dir = ctx.out_dir()?;
            write_json(&dir.join("model.json"), &model)?;
            println!("fitted {mode} model on {} records", model.len());
        }
        Command::Sample { model, n } => {
            let text = std::fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let m: ScenarioModel = serde_json::from_str(&text)?;
            let samples = sample_scenarios(&m, n, ctx.cfg.seed, ctx.par())?;
            let dir = ctx.out_dir()?;
            write_scenarios(&dir.join(SCENARIOS_FILE), &samples)?;
            println!("wrote {} scenarios", samples.len());
        }
        Command::Run { input, mode, samples, traces } => {
            if let Some(i) = input.input {
                ctx.cfg.input = i;
            }
            if let Some(p) = input.platform {
                ctx.cfg.screening.platform = p;
            }
            if mode.is_some() {
                ctx.cfg.model_mode = mode;
            }
            if let Some(s) = samples {
                ctx.cfg.model_samples = s;
            }
            ctx.cfg.traces |= traces;
            if !ctx.cfg.input.is_dir() {
                bail!("input directory {} does not exist", ctx.cfg.input.display());
            }
            let report = run_pipeline(&ctx.cfg)?;
            for d in &report.diagnostics {
                eprintln!("warning: {}:{} [{}] {}", d.file, d.line, d.column, d.message);
            }
            let f = &report.funnel;
            println!(
                "status {:?}: {} trips in, {} candidates, {} accepted, {} records",
                report.status, f.trips_in, f.candidates, f.accepted, f.records
            );
            return Ok(match report.status {
                RunStatus::Success => ExitCode::SUCCESS,
                RunStatus::Partial => ExitCode::from(2),
                RunStatus::Failed => ExitCode::FAILURE,
            });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
