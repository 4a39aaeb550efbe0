//! `mmrank`: orbit catalogs, lower-bound proofs and certificate checks for
//! matrix multiplication tensors over GF(2).
//!
//! Restrictions always apply to the first factor `A` (an `l x m` matrix). To
//! bound `<l,m,n>` with restrictions on a different factor, pass a cyclic
//! rotation such as `<m,n,l>`; all rotations have the same rank.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use mmrank::certificate::{Certificate, Technique};
use mmrank::engine::{prove_format_with, EngineConfig, OrbitSummary};
use mmrank::oracle::exhaustive_rank;
use mmrank::orbits::{functional_name, CatalogOptions, OrbitCatalog, RestrictionSet};
use mmrank::tensor::build_restricted_tensor;
use mmrank::verifier::{verify_bytes, VerifyError};

const EXIT_ENVIRONMENT: u8 = 1;
const EXIT_REJECTED: u8 = 2;

#[derive(Parser)]
#[command(name = "mmrank", version, about = "Tensor-rank lower bounds for matrix multiplication over GF(2)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate orbits of restriction subspaces of l x m matrices.
    Orbits {
        l: usize,
        m: usize,
        /// Include the transpose symmetry (requires l = m).
        #[arg(long)]
        square: bool,
        /// Write the catalog to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Prove a lower bound for <l,m,n> and write a certificate.
    Prove {
        l: usize,
        m: usize,
        n: usize,
        /// Stop raising bounds once this value is reached.
        #[arg(long)]
        target: Option<u32>,
        /// Node budget per substitution attempt (accepts 1e7).
        #[arg(long, default_value = "1e7", value_parser = parse_count)]
        step_limit: u64,
        /// Skip forced-product rotations with this many unknown bits or more.
        #[arg(long, default_value_t = 32)]
        fp_bits: usize,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Write per-orbit JSON lines here.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Do not log per-orbit progress to stderr.
        #[arg(long)]
        quiet: bool,
        #[arg(long)]
        json: bool,
    },
    /// Check a certificate independently.
    Verify {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Print a certificate in readable form.
    Dump {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Exact rank of a restricted tensor by exhaustive search (tiny formats).
    Oracle {
        l: usize,
        m: usize,
        n: usize,
        /// Restriction functionals as integers (bit i*m+j is a_{i,j}).
        #[arg(long, value_delimiter = ',')]
        restrict: Vec<u64>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Environment(String),
    Rejected(String),
}

impl From<mmrank::Error> for Failure {
    fn from(e: mmrank::Error) -> Self {
        Failure::Environment(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Environment(e.to_string())
    }
}

fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("`{s}` is not a non-negative integer")),
    }
}

fn memory_budget() -> Result<Option<usize>, Failure> {
    match std::env::var("MMRANK_MEMORY_BUDGET") {
        Ok(v) => parse_count(v.trim())
            .map(|b| Some(b as usize))
            .map_err(|e| Failure::Environment(format!("MMRANK_MEMORY_BUDGET: {e}"))),
        Err(_) => Ok(None),
    }
}

fn engine_config(threads: Option<usize>) -> Result<EngineConfig, Failure> {
    Ok(EngineConfig {
        thread_count: threads.unwrap_or(0),
        memory_budget: memory_budget()?,
        ..EngineConfig::default()
    })
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Environment(format!("{}: {e}", path.display())))
}

fn cmd_orbits(l: usize, m: usize, square: bool, out: Option<PathBuf>, json: bool) -> Result<(), Failure> {
    let opts = CatalogOptions {
        memory_budget: memory_budget()?,
        ..CatalogOptions::default()
    };
    let catalog = OrbitCatalog::enumerate(l, m, square, &opts)?;
    if let Some(path) = &out {
        fs::write(path, catalog.to_bytes())?;
    }
    let layers = catalog.layer_counts();
    if json {
        print_json(&json!({
            "l": l,
            "m": m,
            "square": square,
            "layers": layers,
            "total": catalog.len(),
            "catalog": out.as_ref().map(|p| p.display().to_string()),
        }));
    } else {
        println!("{l}x{m}{} restriction orbits over GF(2)", if square { " (with transpose)" } else { "" });
        for (d, c) in layers.iter().enumerate() {
            println!("  dimension {d:>2}: {c}");
        }
        println!("total: {}", catalog.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_prove(
    (l, m, n): (usize, usize, usize),
    target: Option<u32>,
    step_limit: u64,
    fp_bits: usize,
    threads: Option<usize>,
    cert: Option<PathBuf>,
    summary: Option<PathBuf>,
    quiet: bool,
    json: bool,
) -> Result<(), Failure> {
    let cfg = EngineConfig {
        step_limit,
        fp_bit_cap: fp_bits,
        global_target: target,
        ..engine_config(threads)?
    };
    let log = Mutex::new(());
    let progress = |s: &OrbitSummary| {
        if !quiet {
            let _guard = log.lock();
            eprintln!("{}", serde_json::to_string(s).expect("summary serializes"));
        }
    };
    let run = prove_format_with(l, m, n, &cfg, &progress)?;
    if let Some(path) = &cert {
        run.certificate.write_to(fs::File::create(path)?)?;
    }
    if let Some(path) = &summary {
        let mut text = String::new();
        for s in &run.summaries {
            text.push_str(&serde_json::to_string(s).expect("summary serializes"));
            text.push('\n');
        }
        fs::write(path, text)?;
    }
    let bound = run.final_bound();
    if json {
        print_json(&json!({
            "format": [l, m, n],
            "lower_bound": bound,
            "target": target,
            "target_reached": target.map(|t| bound >= t),
            "orbits": run.entries.len(),
            "millis": run.millis,
            "certificate": cert.as_ref().map(|p| p.display().to_string()),
            "summaries": run.summaries,
        }));
    } else {
        println!("<{l},{m},{n}>: {} orbits in {:.1} s", run.entries.len(), run.millis / 1e3);
        for (e, s) in run.entries.iter().zip(&run.summaries) {
            println!(
                "  orbit {:>4} d={:<2} bound {:>2} via {}",
                e.orbit, s.dimension, e.bound, s.technique
            );
        }
        if let Some(t) = target {
            if bound < t {
                println!("target {t} not reached");
            }
        }
        println!("lower bound: {bound}");
    }
    Ok(())
}

fn cmd_verify(cert: PathBuf, threads: Option<usize>, json: bool) -> Result<(), Failure> {
    let data = read_file(&cert)?;
    let cfg = engine_config(threads)?;
    match verify_bytes(&data, &cfg) {
        Ok(table) => {
            if json {
                print_json(&json!({
                    "verified": true,
                    "lower_bound": table.final_bound,
                    "bounds": table.bounds,
                    "layer_millis": table.layer_millis,
                }));
            } else {
                for (d, ms) in &table.layer_millis {
                    println!("  layer {d:>2}: {ms:.1} ms");
                }
                println!("verified lower bound: {}", table.final_bound);
            }
            Ok(())
        }
        Err(VerifyError::Rejected { orbit, technique, reason }) => {
            if json {
                print_json(&json!({
                    "verified": false,
                    "orbit": orbit,
                    "technique": technique,
                    "reason": reason,
                }));
            }
            let at = orbit.map(|o| format!(" at orbit {o}")).unwrap_or_default();
            let via = technique.map(|t| format!(" ({t})")).unwrap_or_default();
            Err(Failure::Rejected(format!("certificate rejected{at}{via}: {reason}")))
        }
        Err(VerifyError::Environment(e)) => Err(e.into()),
    }
}

fn technique_json(t: &Technique, m: usize) -> Value {
    match t {
        Technique::Flattening => json!({ "kind": "flattening" }),
        Technique::ForcedProduct { rotation } => json!({ "kind": "forced_product", "rotation": rotation }),
        Technique::Degenerate { added } => json!({
            "kind": "degenerate",
            "added": added.iter().map(|&w| functional_name(m, w)).collect::<Vec<_>>(),
        }),
        Technique::Substitution { base, stages } => json!({
            "kind": "substitution",
            "base": technique_json(base, m),
            "stages": stages.iter().map(|s| json!({ "target": s.target, "records": s.records.len() })).collect::<Vec<_>>(),
        }),
    }
}

fn cmd_dump(cert: PathBuf, json: bool) -> Result<(), Failure> {
    let data = read_file(&cert)?;
    let c = Certificate::from_bytes(&data).map_err(|e| Failure::Rejected(format!("certificate rejected: {e}")))?;
    if json {
        let m = c.m();
        print_json(&json!({
            "format": [c.l(), c.m(), c.n()],
            "square": c.header.square,
            "lower_bound": c.header.final_bound,
            "step_limit": c.header.step_limit,
            "fp_bit_cap": c.header.fp_bit_cap,
            "layer_counts": c.layer_counts,
            "orbits": c.records.iter().enumerate().map(|(id, r)| json!({
                "orbit": id,
                "dimension": r.dimension,
                "restrictions": r.basis.iter().map(|&w| functional_name(m, w)).collect::<Vec<_>>(),
                "bound": r.bound,
                "technique": technique_json(&r.technique, m),
            })).collect::<Vec<_>>(),
        }));
    } else {
        print!("{}", c.dump_text());
    }
    Ok(())
}

fn cmd_oracle(l: usize, m: usize, n: usize, restrict: Vec<u64>, json: bool) -> Result<(), Failure> {
    let set = RestrictionSet::new(l, m, &restrict)?;
    let t = build_restricted_tensor(l, m, n, &set)?;
    let rank = exhaustive_rank(&t)?;
    if json {
        print_json(&json!({ "format": [l, m, n], "restrictions": set.basis(), "rank": rank }));
    } else {
        println!("rank: {rank}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_ENVIRONMENT) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Orbits { l, m, square, out, json } => cmd_orbits(l, m, square, out, json),
        Command::Prove {
            l,
            m,
            n,
            target,
            step_limit,
            fp_bits,
            threads,
            cert,
            summary,
            quiet,
            json,
        } => cmd_prove((l, m, n), target, step_limit, fp_bits, threads, cert, summary, quiet, json),
        Command::Verify { cert, threads, json } => cmd_verify(cert, threads, json),
        Command::Dump { cert, json } => cmd_dump(cert, json),
        Command::Oracle { l, m, n, restrict, json } => cmd_oracle(l, m, n, restrict, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Environment(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ENVIRONMENT)
        }
        Err(Failure::Rejected(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_REJECTED)
        }
    }
}
