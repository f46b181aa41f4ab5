mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use iqlink::codec::{build_regular_code, default_parity_check, derive_generator, load_alist, save_alist, LinearCode};
use iqlink::harness::{self, format_g6, records_to_csv, BerRecord, Scenario, Scheme};
use iqlink::modem::Qam;
use iqlink::training::{load_checkpoint, save_checkpoint, train_with, Checkpoint};

use config::{parse_config, parse_snr_list, CodeSource, RunConfig};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug)]
#[command(name = "iqlink", version, about = "Coded QPSK link with IQ imbalance: code construction, GNN training, BER sweeps")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed used by the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file of the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// GNN checkpoint, for every scenario.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Comma-separated SNR list in dB.
    #[arg(long, global = true)]
    snr: Option<String>,
    /// Comma-separated decoder list (conventional, bp, gnn).
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Builds the parity-check matrix and writes it in alist format.
    BuildCode,
    /// Trains the GNN decoder and writes a checkpoint plus loss telemetry.
    Train,
    /// Runs BER sweeps for every configured scheme and scenario.
    Sweep {
        /// Writes measured wall-clock times instead of 0.
        #[arg(long)]
        timing: bool,
    },
    /// Compares schemes across one or more sweep CSV files.
    Analyze {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

enum Failure {
    Validation(Vec<String>),
    Runtime(String),
}

impl From<iqlink::Error> for Failure {
    fn from(e: iqlink::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(errors)) => {
            for e in errors {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut errors = Vec::new();
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(path) => match fs::read_to_string(path) {
            Err(e) => {
                errors.push(format!("--config {}: {e}", path.display()));
                RunConfig::default()
            }
            Ok(text) => {
                let base = path.parent().unwrap_or(Path::new("."));
                parse_config(&text, base).unwrap_or_else(|errs| {
                    errors.extend(errs);
                    RunConfig::default()
                })
            }
        },
    };
    if let Some(list) = &cli.snr {
        match parse_snr_list(list) {
            Ok(v) => cfg.snr_list_db = v,
            Err(e) => errors.push(e),
        }
    }
    if let Some(list) = &cli.scheme {
        let mut schemes = Vec::new();
        for name in list.split(',') {
            match name.trim().parse::<Scheme>() {
                Ok(s) => schemes.push(s),
                Err(e) => errors.push(format!("--scheme: {e}")),
            }
        }
        cfg.schemes = schemes;
    }
    if let Some(ckpt) = &cli.checkpoint {
        for s in &mut cfg.scenarios {
            s.checkpoint = Some(ckpt.clone());
        }
    }
    if cli.threads == Some(0) {
        errors.push("--threads must be >= 1".into());
    }
    match &cli.command {
        Command::Sweep { .. } if cfg.schemes.contains(&Scheme::Gnn) => {
            for (i, s) in cfg.scenarios.iter().enumerate() {
                match &s.checkpoint {
                    None => errors.push(format!("scenario[{i}]: the gnn scheme needs a checkpoint")),
                    Some(p) if !p.is_file() => {
                        errors.push(format!("scenario[{i}]: checkpoint {} does not exist", p.display()))
                    }
                    Some(_) => {}
                }
            }
        }
        Command::Train if cli.out.is_none() && cfg.checkpoint_out.is_none() => {
            errors.push("train needs --out or train.checkpoint".into());
        }
        Command::Analyze { csv } => {
            for p in csv.iter().filter(|p| !p.is_file()) {
                errors.push(format!("{} does not exist", p.display()));
            }
        }
        _ => {}
    }
    let code = match &cli.command {
        Command::Analyze { .. } => None,
        Command::BuildCode => collect(load_code(&cfg.code, cli.seed), &mut errors)?,
        _ => collect(load_code(&cfg.code, None), &mut errors)?,
    };
    if !errors.is_empty() {
        return Err(Failure::Validation(errors));
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match (&cli.command, code) {
        (Command::BuildCode, Some((code, seed))) => cmd_build_code(&cli, &code, seed),
        (Command::Train, Some((code, _))) => cmd_train(&cli, &cfg, &code),
        (Command::Sweep { timing }, Some((code, _))) => cmd_sweep(&cli, &cfg, &code, *timing),
        (Command::Analyze { csv }, _) => cmd_analyze(csv),
        _ => unreachable!("code is loaded for every command but analyze"),
    }
}

/// Moves validation problems into `errors`; runtime failures pass through.
fn collect<T>(r: Result<T, Failure>, errors: &mut Vec<String>) -> Result<Option<T>, Failure> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Failure::Validation(v)) => {
            errors.extend(v);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn load_code(source: &CodeSource, seed_override: Option<u64>) -> Result<(LinearCode, u64), Failure> {
    let invalid = |e: iqlink::Error| Failure::Validation(vec![format!("code: {e}")]);
    let (h, seed) = match source {
        CodeSource::Default { seed } => {
            let seed = seed_override.unwrap_or(*seed);
            (default_parity_check(seed), seed)
        }
        CodeSource::Regular { n, col_weight, row_weight, seed } => {
            let seed = seed_override.unwrap_or(*seed);
            (build_regular_code(*n, *col_weight, *row_weight, seed).map_err(invalid)?, seed)
        }
        CodeSource::Alist(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Validation(vec![format!("{}: {e}", path.display())]))?;
            (load_alist(&text).map_err(invalid)?, 0)
        }
    };
    Ok((derive_generator(&h), seed))
}

fn cmd_build_code(cli: &Cli, code: &LinearCode, seed: u64) -> Result<(), Failure> {
    let h = code.parity_check();
    let summary = format!(
        "n={} k_info={} rate={} rows={} digest={}",
        code.n(),
        code.k_info(),
        format_g6(code.rate()),
        h.rows(),
        h.digest()
    );
    match &cli.out {
        Some(path) => {
            fs::write(path, save_alist(h)).map_err(|e| io_err(path, e))?;
            println!("# seed {seed}");
            println!("{summary}");
        }
        None => {
            eprintln!("# seed {seed}");
            eprintln!("{summary}");
            print!("{}", save_alist(h));
        }
    }
    Ok(())
}

fn cmd_train(cli: &Cli, cfg: &RunConfig, code: &LinearCode) -> Result<(), Failure> {
    let mut tcfg = cfg.train.clone();
    if let Some(seed) = cli.seed {
        tcfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.checkpoint_out.clone()).expect("validated");
    let telemetry_path = cfg.telemetry.clone().unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".telemetry.csv");
        PathBuf::from(p)
    });
    println!("# seed {}", tcfg.seed);
    println!(
        "# training {} steps of {} codewords, SNR [{}, {}] dB, tx_irr_db {}, rx_irr_db {}",
        tcfg.steps,
        tcfg.batch_size,
        format_g6(tcfg.snr_range_db.0),
        format_g6(tcfg.snr_range_db.1),
        tcfg.scenario.tx_irr_db.map_or("inf".into(), format_g6),
        tcfg.scenario.rx_irr_db.map_or("inf".into(), format_g6),
    );
    let file = fs::File::create(&telemetry_path).map_err(|e| io_err(&telemetry_path, e))?;
    let mut telemetry = BufWriter::new(file);
    let mut write_error = None;
    let _ = writeln!(telemetry, "step,loss,wall_ms");
    let started = Instant::now();
    let report_every = (tcfg.steps / 20).max(1);
    let result = train_with(code, &cfg.gnn, &tcfg, &mut |r| {
        if let Err(e) = writeln!(telemetry, "{},{},{}", r.step, r.loss, started.elapsed().as_millis()) {
            write_error.get_or_insert(e);
        }
        if r.step % report_every == 0 {
            println!("step {} loss {:.6}", r.step, r.loss);
        }
    });
    telemetry.flush().map_err(|e| io_err(&telemetry_path, e))?;
    if let Some(e) = write_error {
        return Err(io_err(&telemetry_path, e));
    }
    let checkpoint = result?;
    save_checkpoint(&checkpoint, &out)?;
    println!("checkpoint {} telemetry {}", out.display(), telemetry_path.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli, cfg: &RunConfig, code: &LinearCode, timing: bool) -> Result<(), Failure> {
    let qam = Qam::new(cfg.bits_per_symbol)?;
    let seed = cli.seed.unwrap_or(cfg.sweep_seed);
    let digest = code.parity_check().digest();
    let mut snrs = cfg.snr_list_db.clone();
    snrs.sort_by(f64::total_cmp);
    eprintln!(
        "# seed {seed}; BER over {} information bits per codeword; {} scenario(s) x {} scheme(s) x {} SNR(s)",
        code.k_info(),
        cfg.scenarios.len(),
        cfg.schemes.len(),
        snrs.len()
    );
    let mut records: Vec<BerRecord> = Vec::new();
    for entry in &cfg.scenarios {
        let checkpoint: Option<Checkpoint> = match (&entry.checkpoint, cfg.schemes.contains(&Scheme::Gnn)) {
            (Some(p), true) => Some(
                load_checkpoint(p, &digest)
                    .map_err(|e| Failure::Validation(vec![format!("{}: {e}", p.display())]))?,
            ),
            _ => None,
        };
        for &scheme in &cfg.schemes {
            let iters = match scheme {
                Scheme::Conventional => cfg.conventional_iters,
                Scheme::Bp => cfg.bp_iters,
                Scheme::Gnn => cfg
                    .gnn_iters
                    .or(checkpoint.as_ref().map(|c| c.gnn.iters))
                    .unwrap_or(scheme.default_iters()),
            };
            let scenario = Scenario {
                iqi: entry.iqi,
                scheme,
                iters,
            };
            for &snr in &snrs {
                let point = harness::point_seed(seed, &entry.iqi, snr);
                let r = harness::run_point_with(code, qam.clone(), &scenario, snr, cfg.stop, checkpoint.as_ref(), point)?;
                eprintln!(
                    "{} tx={} rx={} snr={} ber={} ({} errors / {} bits)",
                    scheme,
                    r.tx_irr_db.map_or("inf".into(), format_g6),
                    r.rx_irr_db.map_or("inf".into(), format_g6),
                    format_g6(snr),
                    format_g6(r.ber),
                    r.bit_errors,
                    r.info_bits
                );
                records.push(r);
            }
        }
    }
    let csv = records_to_csv(&records, timing);
    match cli.out.as_ref().or(cfg.csv.as_ref()) {
        Some(path) => fs::write(path, csv).map_err(|e| io_err(path, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

type PointKey = (String, String, String, String);

fn cmd_analyze(paths: &[PathBuf]) -> Result<(), Failure> {
    let mut records = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        let parsed = harness::parse_csv(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
        if parsed.is_empty() {
            return Err(Failure::Runtime(format!("{}: no records", p.display())));
        }
        records.extend(parsed);
    }
    println!("# {} record(s) from {} file(s)", records.len(), paths.len());
    if records.len() == 1 {
        print!("{}", records_to_csv(&records, true));
        return Ok(());
    }
    let irr = |v: Option<f64>| v.map_or("inf".to_string(), format_g6);
    let mut groups: BTreeMap<(u64, PointKey), Vec<&BerRecord>> = BTreeMap::new();
    for r in &records {
        let key = (
            format_g6(r.snr_db),
            irr(r.tx_irr_db),
            irr(r.rx_irr_db),
            format_g6(r.theta_deg),
        );
        // orders by SNR numerically; total_cmp order maps onto u64 for finite values
        let order = r.snr_db.to_bits() ^ if r.snr_db.is_sign_negative() { u64::MAX } else { 1 << 63 };
        groups.entry((order, key)).or_default().push(r);
    }
    println!("snr_db,tx_irr_db,rx_irr_db,theta_deg,ranking,ratios");
    for ((_, (snr, tx, rx, theta)), mut group) in groups {
        group.sort_by(|a, b| a.ber.total_cmp(&b.ber).then(a.scheme.name().cmp(b.scheme.name())));
        let ranking: Vec<String> = group.iter().map(|r| format!("{}={}", r.scheme, format_g6(r.ber))).collect();
        let by_scheme = |s: Scheme| group.iter().find(|r| r.scheme == s).map(|r| r.ber);
        let mut ratios = Vec::new();
        for (num, den) in [(Scheme::Bp, Scheme::Gnn), (Scheme::Conventional, Scheme::Bp), (Scheme::Conventional, Scheme::Gnn)] {
            if let (Some(a), Some(b)) = (by_scheme(num), by_scheme(den)) {
                let ratio = if b > 0.0 { format_g6(a / b) } else { "inf".into() };
                ratios.push(format!("{num}/{den}={ratio}"));
            }
        }
        println!("{snr},{tx},{rx},{theta},{},{}", ranking.join(" < "), ratios.join(" "));
    }
    Ok(())
}
