//! `vacs` — key ceremonies, policy inspection, scenario runs, and
//! benchmarks for the vehicle access-control suite.

mod bench;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use vacs_core::groupsig::{self, GsBackend};
use vacs_core::ibs::{self, IbsScheme};
use vacs_core::keyfile;
use vacs_core::policy::{self, Action, AttrValue, AttributeValue};
use vacs_core::sim::scenario;
use vacs_core::wire::Timestamp;

#[derive(Parser)]
#[command(
    name = "vacs",
    about = "Vehicle access control suite: key ceremonies, policy checks, protocol scenarios, benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate key material as TLV key files.
    #[command(subcommand)]
    Keygen(KeygenCommand),
    /// Inspect or evaluate an access policy.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Run protocol scenarios against the simulator.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Micro- and procedure benchmarks, reported as CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Shamir,
    Gq,
}

impl From<SchemeArg> for IbsScheme {
    fn from(value: SchemeArg) -> Self {
        match value {
            SchemeArg::Shamir => IbsScheme::Shamir,
            SchemeArg::Gq => IbsScheme::Gq,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Pairing,
    Reference,
}

impl From<BackendArg> for GsBackend {
    fn from(value: BackendArg) -> Self {
        match value {
            BackendArg::Pairing => GsBackend::Pairing,
            BackendArg::Reference => GsBackend::Reference,
        }
    }
}

#[derive(Subcommand)]
enum KeygenCommand {
    /// Identity-based signature setup: writes the global parameters and
    /// the master key.
    Ibs {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// Modulus size in bits (512 for tests, 2048 default).
        #[arg(long, default_value_t = 2048)]
        bits: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Derive one user's signing key from a master key file.
    IbsUser {
        #[arg(long)]
        master: PathBuf,
        #[arg(long)]
        identity: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Group signature key generation: public key, manager key, and one
    /// file per member.
    Group {
        #[arg(long, value_enum, default_value = "reference")]
        backend: BackendArg,
        /// Number of group members.
        #[arg(short = 'n', long)]
        members: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Evaluate one access request; exits 0 on allow, 1 on deny.
    Check(PolicyCheckArgs),
    /// Render the full role × object grant matrix in rwe notation.
    Matrix {
        /// Policy file (defaults to the shipped factory policy).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PolicyCheckArgs {
    /// Policy file (defaults to the shipped factory policy).
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    role: String,
    #[arg(long)]
    object: String,
    /// One of r, w, e.
    #[arg(long)]
    action: String,
    /// Claimed attributes, `name=NUMBER`, `name=true|false` or `name=null`.
    #[arg(long = "attr")]
    attrs: Vec<String>,
    /// Evaluation time in seconds since epoch.
    #[arg(long, default_value_t = 1_700_000_000)]
    now: u64,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run a scenario file; exit 0 when its expectation is met.
    Run {
        file: PathBuf,
        /// Write the annotated hex transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Which suite to run.
    #[arg(long, value_parser = ["primitives", "procedures"])]
    suite: String,
    /// Measured iterations per cell (after the 5-iteration warmup).
    #[arg(long, default_value_t = 30)]
    iterations: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Keygen(cmd) => {
            keygen(cmd)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Policy(cmd) => policy_cmd(cmd),
        Command::Scenario(cmd) => scenario_cmd(cmd),
        Command::Bench(args) => {
            let report = match args.suite.as_str() {
                "primitives" => bench::bench_primitives(args.seed, args.iterations),
                _ => bench::bench_procedures(args.seed, args.iterations),
            };
            let csv = report.to_csv();
            match &args.out {
                Some(path) => {
                    std::fs::write(path, &csv).with_context(|| format!("writing {path:?}"))?
                }
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {parent:?}"))?;
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {path:?}"))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn keygen(cmd: KeygenCommand) -> Result<()> {
    match cmd {
        KeygenCommand::Ibs {
            scheme,
            bits,
            out,
            seed,
        } => {
            let scheme: IbsScheme = scheme.into();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let master = ibs::setup(scheme, bits, None, &mut rng)
                .with_context(|| format!("setup for {}-{bits}", scheme.name()))?;
            let stem = format!("{}-{bits}", scheme.name());
            write_file(
                &out.join(format!("{stem}.params")),
                &keyfile::save_ibs_params(master.params()),
            )?;
            write_file(
                &out.join(format!("{stem}.master")),
                &keyfile::save_ibs_master(&master),
            )?;
            Ok(())
        }
        KeygenCommand::IbsUser {
            master,
            identity,
            out,
        } => {
            let bytes =
                std::fs::read(&master).with_context(|| format!("reading {master:?}"))?;
            let master = keyfile::load_ibs_master(&bytes)?;
            let key = ibs::keyder(&master, identity.as_bytes());
            write_file(&out, &keyfile::save_ibs_user(&key))
        }
        KeygenCommand::Group {
            backend,
            members,
            out,
            seed,
        } => {
            if members == 0 {
                bail!("a group needs at least one member (got --members 0)");
            }
            let backend: GsBackend = backend.into();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (gpk, gmsk, member_keys) = groupsig::gen(backend, members, &mut rng)?;
            write_file(&out.join("group.gpk"), &keyfile::save_group_public(&gpk))?;
            write_file(&out.join("group.gmsk"), &keyfile::save_group_manager(&gmsk))?;
            for member in &member_keys {
                write_file(
                    &out.join(format!("member-{:02}.key", member.index())),
                    &keyfile::save_group_member(member),
                )?;
            }
            Ok(())
        }
    }
}

fn load_policy(path: &Option<PathBuf>) -> Result<policy::PermissionTable> {
    let text = match path {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path:?}"))?,
        None => policy::FACTORY_POLICY.to_string(),
    };
    Ok(policy::policy_load(&text)?)
}

fn parse_attr(spec: &str) -> Result<AttributeValue> {
    let (name, value) = spec
        .split_once('=')
        .with_context(|| format!("attribute {spec:?} is not name=value"))?;
    let value = match value {
        "true" => AttrValue::Bool(true),
        "false" => AttrValue::Bool(false),
        "null" => AttrValue::Null,
        other => AttrValue::Number(
            other
                .parse()
                .with_context(|| format!("attribute value {other:?}"))?,
        ),
    };
    Ok(AttributeValue {
        name: name.to_string(),
        value,
    })
}

fn policy_cmd(cmd: PolicyCommand) -> Result<ExitCode> {
    match cmd {
        PolicyCommand::Check(args) => {
            let table = load_policy(&args.policy)?;
            let action = Action::parse(&args.action)
                .with_context(|| format!("action {:?} is not one of r, w, e", args.action))?;
            let attrs = args
                .attrs
                .iter()
                .map(|s| parse_attr(s))
                .collect::<Result<Vec<_>>>()?;
            let decision = policy::policy_check(
                &table,
                &args.role,
                &args.object,
                action,
                &attrs,
                Timestamp(args.now),
            );
            let flags = table.effective_actions(&args.role, &args.object);
            println!(
                "{}; {}; {} — requested {}: {}",
                args.role,
                args.object,
                flags.render(),
                action.letter(),
                decision
            );
            Ok(if decision.is_allow() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        PolicyCommand::Matrix { policy } => {
            let table = load_policy(&policy)?;
            let roles: Vec<&str> = table.roles().collect();
            let width = table
                .objects()
                .map(|(name, _)| name.len())
                .max()
                .unwrap_or(6)
                .max(6);
            print!("{:width$}", "");
            for role in &roles {
                print!("  {role:>13}");
            }
            println!();
            let objects: Vec<(String, policy::MacroObject)> = table
                .objects()
                .map(|(n, m)| (n.to_string(), m))
                .collect();
            for (object, macro_object) in objects {
                print!("{object:width$}");
                for role in &roles {
                    print!("  {:>13}", table.effective_actions(role, &object).render());
                }
                println!("  [{}]", macro_object.name());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn scenario_cmd(cmd: ScenarioCommand) -> Result<ExitCode> {
    match cmd {
        ScenarioCommand::Run { file, transcript } => {
            let text =
                std::fs::read_to_string(&file).with_context(|| format!("reading {file:?}"))?;
            let parsed = match scenario::parse(&text) {
                Ok(parsed) => parsed,
                Err(err) => {
                    eprintln!("{}: {err}", file.display());
                    return Ok(ExitCode::from(2));
                }
            };
            let (world, report) = scenario::sim_run(&parsed);
            for phase in &report.phases {
                let status = if phase.completed { "ok" } else { "incomplete" };
                let aborts = if phase.aborts.is_empty() {
                    String::new()
                } else {
                    format!(" aborts=[{}]", phase.aborts.join(", "))
                };
                println!("phase {:40} {status}{aborts}", phase.label);
            }
            println!(
                "executed: {}",
                report
                    .executed
                    .iter()
                    .map(|a| format!("{:?} {}", a.object, a.action.letter()))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            if let Some(path) = transcript {
                std::fs::write(&path, world.transcript())
                    .with_context(|| format!("writing {path:?}"))?;
            }
            let verdict_ok = scenario::expectation_met(&parsed, &report);
            println!(
                "attack-found: {}; expectation {:?}: {}",
                report.attack_found,
                parsed.expect.name(),
                if verdict_ok { "met" } else { "NOT met" }
            );
            Ok(if verdict_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
