use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use synergy::bench::{self, Mode};
use synergy::design::Design;
use synergy::fixtures::Fixture;
use synergy::schema::SchemaDef;
use synergy::session::{DesignInputs, Population, Session, SNAPSHOT_FILE, WAL_FILE};
use synergy::sqlparse::{parse_workload, render_workload, Statement};
use synergy::viewgen::render_report;
use synergy::workload::{self, MixOptions};

#[derive(Parser)]
#[command(
    name = "synergy",
    version,
    about = "Materialized-view design and view-aware transactions over a key-value store"
)]
struct Cli {
    /// Directory holding the store snapshot, write-ahead log and design inputs.
    #[arg(
        long,
        global = true,
        env = "SYNERGY_DATA_DIR",
        default_value = "synergy-data"
    )]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DesignArgs {
    /// Schema as JSON.
    #[arg(long, required_unless_present = "fixture")]
    schema: Option<PathBuf>,
    /// Workload file, one statement per line.
    #[arg(long, requires = "schema")]
    workload: Option<PathBuf>,
    /// Built-in schema and workload instead of files (company, tpcw-micro).
    #[arg(long, conflicts_with = "schema")]
    fixture: Option<String>,
    /// Comma-separated roots; defaults to the schema's own list.
    #[arg(long, value_delimiter = ',')]
    roots: Vec<String>,
}

impl DesignArgs {
    fn inputs(&self) -> Result<DesignInputs> {
        let mut inputs = match (&self.fixture, &self.schema) {
            (Some(f), _) => DesignInputs::for_fixture(fixture(f)?),
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let workload = match &self.workload {
                    Some(w) => {
                        fs::read_to_string(w).with_context(|| format!("reading {}", w.display()))?
                    }
                    None => String::new(),
                };
                DesignInputs {
                    schema: SchemaDef::from_json(&text)?,
                    workload,
                    roots: Vec::new(),
                    population: None,
                }
            }
            (None, None) => bail!("either --schema or --fixture is required"),
        };
        inputs.roots = self.roots.clone();
        Ok(inputs)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run view generation and selection; write the tree report, view DDL,
    /// rewritten workload and index recommendations.
    GenViews {
        #[command(flatten)]
        design: DesignArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the workload rewritten over the selected views, followed by the DDL.
    RewriteWorkload {
        #[command(flatten)]
        design: DesignArgs,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Create a fresh data directory filled with generated fixture rows.
    Populate {
        #[arg(long, default_value = "tpcw-micro")]
        fixture: String,
        #[arg(long, default_value_t = 500)]
        scale: usize,
        #[arg(long, default_value_t = 10)]
        ratio: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        roots: Vec<String>,
    },
    /// Response time of workload queries over base tables and over views.
    BenchJoin {
        /// Query label (Q1, Q2, ...) or "all".
        #[arg(long, default_value = "all")]
        query: String,
        /// join, view, or both.
        #[arg(long, default_value = "both")]
        mode: String,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time to acquire and release N uncontended row locks.
    BenchLocks {
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute every view and index from the base tables and compare.
    Verify,
    /// Execute a workload with concurrent clients; per-statement timings as CSV.
    Run {
        /// Statement templates; defaults to the data directory's workload.
        #[arg(long)]
        workload: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        threads: usize,
        /// Total statements across all clients.
        #[arg(long, default_value_t = 1000)]
        statements: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Pause before each statement, in microseconds.
        #[arg(long, default_value_t = 0)]
        think_us: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a CSV produced by the bench commands into gnuplot data.
    Gnuplot {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fixture(name: &str) -> Result<Fixture> {
    Fixture::parse(name)
        .with_context(|| format!("unknown fixture `{name}` (expected company or tpcw-micro)"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn index_report(design: &Design) -> String {
    let mut out = String::new();
    for (kind, list) in [
        ("view", &design.selection.view_indexes),
        ("maintenance", &design.selection.maintenance_indexes),
    ] {
        for ix in list {
            out.push_str(&format!(
                "{kind} {} on {}({})\n",
                ix.name,
                ix.base,
                ix.indexed_on.join(", ")
            ));
        }
    }
    out
}

fn open(dir: &Path) -> Result<(DesignInputs, Session)> {
    let inputs = DesignInputs::load(dir).with_context(|| {
        format!(
            "no design in {}; run `synergy populate` first",
            dir.display()
        )
    })?;
    let (session, report) = Session::open_dir(inputs.build()?, dir, false)?;
    if !report.replayed.is_empty() || report.locks_cleared > 0 {
        log::info!(
            "recovery replayed {} transaction(s), cleared {} lock(s)",
            report.replayed.len(),
            report.locks_cleared
        );
    }
    Ok((inputs, session))
}

fn gen_views(args: &DesignArgs, out: &Path) -> Result<()> {
    let inputs = args.inputs()?;
    let design = inputs.build()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("trees.txt"), render_report(&design.generation))?;
    fs::write(out.join("views.sql"), design.render_ddl())?;
    fs::write(
        out.join("rewritten.sql"),
        render_workload(&design.selection.rewritten),
    )?;
    fs::write(out.join("indexes.txt"), index_report(&design))?;
    println!(
        "{} candidate view(s), {} selected, {} view index(es), {} maintenance index(es) -> {}",
        design.generation.candidates.len(),
        design.views().len(),
        design.selection.view_indexes.len(),
        design.selection.maintenance_indexes.len(),
        out.display()
    );
    Ok(())
}

fn populate(
    dir: &Path,
    fixture_name: &str,
    scale: usize,
    ratio: usize,
    seed: u64,
    roots: &[String],
) -> Result<()> {
    let f = fixture(fixture_name)?;
    for file in [SNAPSHOT_FILE, WAL_FILE] {
        let p = dir.join(file);
        if p.exists() {
            fs::remove_file(&p)?;
        }
    }
    let mut inputs = DesignInputs::for_fixture(f);
    inputs.roots = roots.to_vec();
    inputs.population = Some(Population { scale, ratio, seed });
    inputs.save(dir)?;
    let (session, _) = Session::open_dir(inputs.build()?, dir, false)?;
    let n = session.populate(f, scale, ratio, seed)?;
    session.checkpoint(dir)?;
    println!("{n} rows inserted into {}", dir.display());
    Ok(())
}

fn bench_join(
    dir: &Path,
    query: &str,
    mode: &str,
    repeats: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let (inputs, session) = open(dir)?;
    let modes =
        match mode {
            "both" => vec![Mode::Join, Mode::View],
            m => vec![Mode::parse(m)
                .with_context(|| format!("unknown mode `{m}` (join, view or both)"))?],
        };
    let mut pairs = bench::query_pairs(&session, &inputs.original_workload()?);
    if query != "all" {
        pairs.retain(|p| p.label.eq_ignore_ascii_case(query));
        if pairs.is_empty() {
            bail!("no query labelled `{query}` in the workload");
        }
    }
    let scale = inputs.population.map_or(0, |p| p.scale);
    let rows = bench::bench_join(&session, &pairs, &modes, scale, repeats, seed)?;
    emit(out, &bench::join_csv(&rows))
}

fn run(
    dir: &Path,
    workload_file: Option<&Path>,
    opts: MixOptions,
    think: Duration,
    out: Option<&Path>,
) -> Result<()> {
    let (inputs, session) = open(dir)?;
    let design = session.design().clone();
    let templates: Vec<Statement> = match workload_file {
        None => design.workload.clone(),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let original = inputs.original_workload()?;
            parse_workload(&text)?
                .into_iter()
                .map(|s| match original.iter().position(|o| *o == s) {
                    Some(i) => design.selection.rewritten[i].clone(),
                    None => s,
                })
                .collect()
        }
    };
    let session = Arc::new(session);
    let mix = workload::generate_mix(&design, session.store(), &templates, &opts)?;
    let records = workload::run_mix_paced(&session, &mix, think);
    if let Some(err) = records.iter().find_map(|r| r.outcome.as_ref().err()) {
        log::warn!("statement failed: {err}");
    }
    session.checkpoint(dir)?;
    emit(
        out,
        &workload::stats_csv(&workload::summarize(&mix, &records)),
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let dir = cli.data_dir.as_path();
    let result = match &cli.command {
        Command::GenViews { design, out } => gen_views(design, out),
        Command::RewriteWorkload { design, out } => design.inputs().and_then(|i| {
            let d = i.build()?;
            let text = format!(
                "{}\n{}",
                render_workload(&d.selection.rewritten),
                d.render_ddl()
            );
            emit(out.as_deref(), &text)
        }),
        Command::Populate {
            fixture,
            scale,
            ratio,
            seed,
            roots,
        } => populate(dir, fixture, *scale, *ratio, *seed, roots),
        Command::BenchJoin {
            query,
            mode,
            repeats,
            seed,
            out,
        } => bench_join(dir, query, mode, *repeats, *seed, out.as_deref()),
        Command::BenchLocks {
            counts,
            repeats,
            out,
        } => bench::bench_locks(counts, *repeats)
            .map_err(Into::into)
            .and_then(|rows| emit(out.as_deref(), &bench::locks_csv(&rows))),
        Command::Verify => open(dir).and_then(|(_, s)| {
            let report = s.verify()?;
            print!("{}", report.render());
            if report.is_clean() {
                Ok(())
            } else {
                Err(anyhow::anyhow!("store is inconsistent"))
            }
        }),
        Command::Run {
            workload,
            threads,
            statements,
            seed,
            think_us,
            out,
        } => run(
            dir,
            workload.as_deref(),
            MixOptions {
                threads: *threads,
                statements: *statements,
                seed: *seed,
                ..MixOptions::default()
            },
            Duration::from_micros(*think_us),
            out.as_deref(),
        ),
        Command::Gnuplot { input, out } => fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))
            .and_then(|csv| emit(out.as_deref(), &bench::csv_to_gnuplot(&csv))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
