use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pufkit::apg::{self, AddressRequest};
use pufkit::bits::{TernaryVector, Trit};
use pufkit::ecc::{self, CodeSpec};
use pufkit::enrollment::{self, EnrollmentConfig, TernaryChallenge};
use pufkit::eval;
use pufkit::fuzzy::{self, HelperData, Scheme};
use pufkit::ingest;
use pufkit::protocol::{ChallengeDatabase, Instruction, Message, ProtocolConfig, ResponseSource};
use pufkit::sram::{self, DeviceId, DeviceModel, ErrorProfile};

#[derive(Parser)]
#[command(name = "pufkit", version, about = "SRAM PUF enrollment, key generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a simulated SRAM device file.
    Simulate {
        #[arg(long)]
        seed: u64,
        /// `default`, `noiseless`, or `uniform:P`.
        #[arg(long, default_value = "default")]
        profile: String,
        #[arg(long, default_value_t = sram::DEFAULT_CELL_COUNT)]
        cells: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enroll a device into a ternary challenge file.
    Enroll {
        #[arg(long)]
        device: PathBuf,
        /// Reads for threshold classification.
        #[arg(long)]
        reads: Option<usize>,
        /// Power cycles of strict masking.
        #[arg(long)]
        cycles: Option<usize>,
        #[command(flatten)]
        classify: ClassifyArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Masking curve CSV (requires --cycles).
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Derive an address and list the selected cells as CSV.
    Address {
        #[arg(long)]
        user: String,
        #[arg(long, default_value = "")]
        nonce_hex: String,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        challenge: PathBuf,
    },
    /// Generate a key and write its helper (and instruction) files.
    Genkey {
        #[arg(long)]
        challenge: PathBuf,
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        user: String,
        #[arg(long, default_value = "")]
        nonce_hex: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        helper: PathBuf,
        /// Defaults to the helper path with a `.pufi` extension.
        #[arg(long)]
        instruction: Option<PathBuf>,
        /// Print the key in hex. For testing only.
        #[arg(long)]
        reveal_key: bool,
    },
    /// Reproduce a key from a fresh device read; prints ACCEPT or REJECT.
    Rekey {
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        helper: PathBuf,
        /// Defaults to the helper path with a `.pufi` extension.
        #[arg(long)]
        instruction: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        read_seed: u64,
        /// Print the key in hex. For testing only.
        #[arg(long)]
        reveal_key: bool,
    },
    /// Run one server/client session; prints MATCH, REJECT or MISMATCH.
    Session {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long, default_value = "")]
        nonce_hex: String,
        /// Enroll this challenge for (user, nonce) into the database first.
        #[arg(long)]
        enroll: Option<PathBuf>,
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enroll from a directory of read_NNNN.bin dumps.
    Ingest {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        reads: usize,
        #[command(flatten)]
        classify: ClassifyArgs,
        /// Device id recorded in the challenge file.
        #[arg(long, default_value_t = 0)]
        device_id: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Experiments.
    Eval {
        #[command(subcommand)]
        experiment: EvalCommand,
    },
    /// Supported codes.
    Codes {
        #[command(subcommand)]
        action: CodesCommand,
    },
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long, value_enum, default_value_t = Mode::Threshold)]
    mode: Mode,
    #[arg(long, default_value_t = 0.30)]
    low: f64,
    #[arg(long, default_value_t = 0.70)]
    high: f64,
    #[arg(long, default_value_t = 0.46)]
    constancy: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Threshold,
    Strict,
    Constancy,
}

#[derive(Args)]
struct KeyArgs {
    #[arg(long, default_value = "code-offset")]
    scheme: String,
    #[arg(long, default_value = "bch:255:t=10")]
    code: String,
    #[arg(long, default_value_t = 128)]
    key_bits: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    key: KeyArgs,
    #[arg(long, default_value_t = eval::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print a JSON report instead of text or CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// False rejection against the enrolled device (or a dump corpus).
    Frr {
        #[arg(long, required_unless_present = "dump")]
        device: Option<PathBuf>,
        #[arg(long, conflicts_with = "device")]
        dump: Option<PathBuf>,
        #[arg(long)]
        challenge: PathBuf,
        #[command(flatten)]
        run: ExperimentArgs,
    },
    /// False acceptance of an impostor device.
    Far {
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long)]
        impostor: PathBuf,
        #[command(flatten)]
        run: ExperimentArgs,
    },
    /// Key bit error against PUF error over masking levels (CSV).
    Curve {
        #[arg(long)]
        device: PathBuf,
        /// Comma-separated power-cycle counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,10,25")]
        cycles: Vec<usize>,
        #[command(flatten)]
        run: ExperimentArgs,
    },
    /// Strict masking error curve (CSV).
    Cycles {
        #[arg(long)]
        device: PathBuf,
        #[arg(long, default_value_t = 25)]
        cycles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum CodesCommand {
    List,
}

fn parse_profile(s: &str) -> Result<ErrorProfile> {
    match s {
        "default" => Ok(ErrorProfile::default()),
        "noiseless" => Ok(ErrorProfile::noiseless()),
        _ => {
            let p = s
                .strip_prefix("uniform:")
                .ok_or_else(|| anyhow!("unknown profile {s:?}"))?
                .parse::<f64>()?;
            Ok(ErrorProfile::uniform(p))
        }
    }
}

fn enrollment_config(reads: usize, c: &ClassifyArgs) -> Result<EnrollmentConfig> {
    Ok(match c.mode {
        Mode::Threshold => EnrollmentConfig::thresholds(reads, c.low, c.high)?,
        Mode::Strict => EnrollmentConfig::strict(reads),
        Mode::Constancy => EnrollmentConfig::constancy(reads, c.constancy)?,
    })
}

impl KeyArgs {
    fn parse(&self) -> Result<(Scheme, CodeSpec)> {
        let scheme: Scheme = self.scheme.parse()?;
        let code: CodeSpec = self.code.parse()?;
        if !fuzzy::supports(scheme, code.family()) {
            bail!("{scheme} is not supported for {} codes", code.family().name());
        }
        Ok((scheme, code))
    }

    fn protocol(&self, enrollment: EnrollmentConfig) -> Result<ProtocolConfig> {
        let (scheme, code) = self.parse()?;
        Ok(ProtocolConfig {
            enrollment,
            scheme,
            code,
            key_bits: self.key_bits,
        })
    }
}

fn nonce(hex_str: &str) -> Result<Vec<u8>> {
    hex::decode(hex_str).with_context(|| format!("nonce {hex_str:?} is not hex"))
}

fn load_device(path: &Path) -> Result<DeviceModel> {
    DeviceModel::load_path(path).with_context(|| format!("reading device {}", path.display()))
}

fn load_challenge(path: &Path) -> Result<TernaryChallenge> {
    TernaryChallenge::load_path(path).with_context(|| format!("reading challenge {}", path.display()))
}

fn load_instruction(path: &Path) -> Result<Instruction> {
    let bytes = fs::read(path).with_context(|| format!("reading instruction {}", path.display()))?;
    match Message::from_frame(&bytes)? {
        (Message::Instruction(i), _) => Ok(i),
        _ => bail!("{} does not hold an instruction", path.display()),
    }
}

fn print_json(value: serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn print_report(r: &eval::ExperimentReport, json: bool) -> Result<()> {
    if json {
        return print_json(serde_json::to_value(r)?);
    }
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.4}%", 100.0 * v));
    println!("experiment      {}", r.experiment);
    println!("code            {} ({})", r.code, r.scheme);
    println!("trials          {}", r.trials);
    println!("frr             {}", pct(r.frr));
    println!("far             {}", pct(r.far));
    println!("key error same  {}", pct(r.mean_key_bit_error_same));
    println!("key error other {}", pct(r.mean_key_bit_error_other));
    println!("puf error       {}", pct(Some(r.mean_puf_error)));
    println!("seed            {}", r.seed);
    eprintln!("runtime         {:.2?}", r.runtime);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            seed,
            profile,
            cells,
            out,
        } => {
            let device = sram::new_device(seed, &parse_profile(&profile)?, cells)?;
            device.save_path(&out)?;
            println!(
                "device {} cells {} expected read error {:.4}",
                device.device_id,
                device.cell_count(),
                device.expected_crp_error()
            );
        }
        Command::Enroll {
            device,
            reads,
            cycles,
            classify,
            seed,
            out,
            curve,
        } => {
            let device = load_device(&device)?;
            let thresholded = reads
                .map(|n| {
                    let cfg = enrollment_config(n, &classify)?;
                    let reads: Vec<_> = (0..n as u64).map(|i| device.power_cycle_read(seed.wrapping_add(i))).collect();
                    Ok::<_, anyhow::Error>(enrollment::enroll(&reads, &cfg, device.device_id)?)
                })
                .transpose()?;
            let masked = cycles
                .map(|k| enrollment::iterative_mask(&device, k, seed))
                .transpose()?;
            if let (Some(path), Some((_, points))) = (&curve, &masked) {
                let mut csv = String::from("cycle,surviving_cells,error_rate\n");
                for p in points {
                    csv.push_str(&format!("{},{},{}\n", p.cycle, p.surviving_cells, p.error_rate));
                }
                fs::write(path, csv)?;
            } else if curve.is_some() {
                bail!("--curve needs --cycles");
            }
            let challenge = match (thresholded, masked) {
                (Some(t), Some((m, _))) => combine(t, &m),
                (Some(t), None) => t,
                (None, Some((m, _))) => m,
                (None, None) => bail!("give --reads, --cycles, or both"),
            };
            challenge.save_path(&out)?;
            println!(
                "cells {} stable {} masked {}",
                challenge.len(),
                challenge.stable_count(),
                challenge.len() - challenge.stable_count()
            );
        }
        Command::Address {
            user,
            nonce_hex,
            budget,
            challenge,
        } => {
            let challenge = load_challenge(&challenge)?;
            let request = AddressRequest::new(user.into_bytes(), nonce(&nonce_hex)?, budget)?;
            let sel = apg::select_for_request(&request, &challenge)?;
            println!("address,position,index");
            for (j, i) in sel.indices.iter().enumerate() {
                println!("{},{j},{i}", sel.derived_address);
            }
        }
        Command::Genkey {
            challenge,
            key,
            user,
            nonce_hex,
            seed,
            helper,
            instruction,
            reveal_key,
        } => {
            let challenge = load_challenge(&challenge)?;
            let cfg = key.protocol(challenge.config)?;
            let db = ChallengeDatabase::new();
            let address = db.enroll_challenge(&challenge, user.as_bytes(), &nonce(&nonce_hex)?, &cfg, seed)?;
            let (ins, help, k) = db.server_issue(address, seed)?;
            help.save_path(&helper)?;
            let ins_path = instruction.unwrap_or_else(|| helper.with_extension("pufi"));
            fs::write(&ins_path, Message::Instruction(ins).to_frame())?;
            println!(
                "address {address} code {} scheme {} blocks {} sketch bits {} leaked bits {}",
                help.code,
                help.scheme,
                help.blocks(),
                help.sketch.len(),
                help.leaked_bits()
            );
            if reveal_key {
                println!("key {}", k.to_hex());
            }
        }
        Command::Rekey {
            device,
            helper,
            instruction,
            read_seed,
            reveal_key,
        } => {
            let device = load_device(&device)?;
            let help = HelperData::load_path(&helper).with_context(|| format!("reading helper {}", helper.display()))?;
            let ins = load_instruction(&instruction.unwrap_or_else(|| helper.with_extension("pufi")))?;
            let response = device.read_cells(read_seed, &ins.selection.indices)?;
            let r = fuzzy::recover(&response, &help)?;
            println!("{}", if r.accepted { "ACCEPT" } else { "REJECT" });
            if reveal_key && r.accepted {
                println!("key {}", r.candidate.to_hex());
            }
        }
        Command::Session {
            db,
            device,
            user,
            nonce_hex,
            enroll,
            key,
            seed,
        } => {
            let device = load_device(&device)?;
            let nonce = nonce(&nonce_hex)?;
            let database = if db.exists() {
                ChallengeDatabase::load_dir(&db)?
            } else {
                ChallengeDatabase::new()
            };
            if let Some(path) = enroll {
                let challenge = load_challenge(&path)?;
                let cfg = key.protocol(challenge.config)?;
                database.enroll_challenge(&challenge, user.as_bytes(), &nonce, &cfg, seed)?;
                database.save_dir(&db)?;
            }
            let address = apg::derive_address(user.as_bytes(), &nonce, device.cell_count())?;
            println!("{}", database.session(address, &device, seed)?);
        }
        Command::Ingest {
            dir,
            reads,
            classify,
            device_id,
            out,
        } => {
            let corpus = ingest::load_dump_dir(&dir)?;
            let cfg = enrollment_config(reads, &classify)?;
            let challenge = ingest::corpus_enroll(&corpus, &cfg, DeviceId(device_id))?;
            challenge.save_path(&out)?;
            println!(
                "reads {} cells {} stable {}",
                corpus.len(),
                challenge.len(),
                challenge.stable_count()
            );
        }
        Command::Eval { experiment } => run_eval(experiment)?,
        Command::Codes { action: CodesCommand::List } => {
            println!("code,family,n,k,t,blocks_for_128,leaked_bits_128");
            for c in ecc::standard_codes() {
                let blocks = fuzzy::blocks_for(&c, 128);
                println!(
                    "{c},{},{},{},{},{blocks},{}",
                    c.family().name(),
                    c.n(),
                    c.k(),
                    c.t(),
                    blocks * (c.n() - c.k())
                );
            }
        }
    }
    Ok(())
}

/// Cells stable under both classifications with agreeing values.
fn combine(mut thresholded: TernaryChallenge, masked: &TernaryChallenge) -> TernaryChallenge {
    let cells = thresholded
        .values
        .cells()
        .iter()
        .zip(masked.values.cells())
        .map(|(&a, &b)| if a == b { a } else { Trit::X })
        .collect();
    thresholded.values = TernaryVector::new(cells);
    thresholded
}

fn run_eval(experiment: EvalCommand) -> Result<()> {
    match experiment {
        EvalCommand::Frr {
            device,
            dump,
            challenge,
            run,
        } => {
            let challenge = load_challenge(&challenge)?;
            let (scheme, code) = run.key.parse()?;
            let source: Box<dyn ResponseSource> = match (device, dump) {
                (Some(d), _) => Box::new(load_device(&d)?),
                (None, Some(dir)) => Box::new(ingest::load_dump_dir(dir)?),
                (None, None) => unreachable!("clap requires one source"),
            };
            let r = eval::frr_experiment(scheme, &code, run.key.key_bits, source.as_ref(), &challenge, run.trials, run.seed)?;
            print_report(&r, run.json)
        }
        EvalCommand::Far { challenge, impostor, run } => {
            let challenge = load_challenge(&challenge)?;
            let (scheme, code) = run.key.parse()?;
            let impostor = load_device(&impostor)?;
            let r = eval::far_experiment(scheme, &code, run.key.key_bits, &challenge, &impostor, run.trials, run.seed)?;
            print_report(&r, run.json)
        }
        EvalCommand::Curve { device, cycles, run } => {
            let device = load_device(&device)?;
            let (scheme, code) = run.key.parse()?;
            let points = eval::key_error_curve(scheme, &code, run.key.key_bits, &device, &cycles, run.trials, run.seed)?;
            if run.json {
                print_json(serde_json::to_value(&points)?)
            } else {
                print!("{}", eval::key_error_csv(&points));
                Ok(())
            }
        }
        EvalCommand::Cycles {
            device,
            cycles,
            seed,
            json,
        } => {
            let device = load_device(&device)?;
            let points = eval::error_vs_cycles(&device, cycles, seed)?;
            if json {
                print_json(serde_json::to_value(&points)?)
            } else {
                print!("{}", eval::cycles_csv(&points));
                Ok(())
            }
        }
    }
}
