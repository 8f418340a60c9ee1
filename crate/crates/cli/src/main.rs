//! `qtp`: run sessions, exact oracles and network peers.

use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use qtp_core::adversary::{self, AttackKind, AttackSpec, BasisStrategy, Payload, Readout};
use qtp_core::config::{ConfigError, MessageSource, SecretSource, Seeds, Session, SessionConfig};
use qtp_core::netsim::{self, NetError, PeerOptions, ProxyOptions, Role};
use qtp_core::oracle::{self, InputSet, OracleError};
use qtp_core::phases::{self, PhaseSet, SecretAngles, SeededStream, StreamId};
use qtp_core::protocol::{self, Pass, ProtocolError, Variant};
use qtp_core::report::RunReport;
use qtp_core::statekit::{self, Angle, PureState};

const CSV_COLUMNS: [&str; 11] = [
    "variant",
    "k",
    "n",
    "attack",
    "bob_bit_error_rate",
    "output_fidelity_mean",
    "output_fidelity_min",
    "eve_accuracy",
    "eve_fidelity_mean",
    "message_digest",
    "decoded_digest",
];

fn csv_help() -> String {
    format!(
        "CSV columns (--csv; one header row, one data row, empty cells mean not applicable):\n  {}",
        CSV_COLUMNS.join(", ")
    )
}

#[derive(Parser)]
#[command(name = "qtp", version, about = "Three-pass polarization-rotation protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one in-process session and print its JSON report.
    #[command(after_help = csv_help())]
    Run(RunArgs),
    /// Exact statistics by enumeration over the phase lattice.
    Oracle(OracleArgs),
    /// Bob: listen for one Alice connection and run the session.
    Serve(ServeArgs),
    /// Alice: connect to Bob (or an Eve proxy) and run the session.
    Connect(ConnectArgs),
    /// Eve: relay Alice's connections to Bob, attacking the photons.
    Proxy(ProxyArgs),
    /// Write a pre-shared secret angle file for the auth variant.
    Keygen(KeygenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Classical,
    Quantum,
    Auth,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Classical => Variant::Classical,
            VariantArg::Quantum => Variant::Quantum,
            VariantArg::Auth => Variant::Authenticated,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MessageArg {
    RandomBits,
    BitFile,
    RandomQubits,
    AngleFile,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackArg {
    None,
    Intercept,
    Mitm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReadoutArg {
    Bit,
    State,
}

#[derive(Clone, Copy, ValueEnum)]
enum PayloadArg {
    Decoded,
    H,
    V,
}

#[derive(Args, Clone)]
struct SeedArgs {
    /// Default seed for every stream.
    #[arg(long, env = "QTP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    alice_seed: Option<u64>,
    #[arg(long)]
    bob_seed: Option<u64>,
    #[arg(long)]
    message_seed: Option<u64>,
    #[arg(long)]
    eve_seed: Option<u64>,
}

impl SeedArgs {
    fn seeds(&self) -> Seeds {
        Seeds {
            alice: self.alice_seed.unwrap_or(self.seed),
            bob: self.bob_seed.unwrap_or(self.seed),
            message: self.message_seed.unwrap_or(self.seed),
        }
    }

    fn eve(&self) -> u64 {
        self.eve_seed.unwrap_or(self.seed)
    }
}

#[derive(Args, Clone)]
struct AttackArgs {
    #[arg(long, value_enum, default_value_t = AttackArg::None)]
    attack: AttackArg,
    /// Passes to intercept, e.g. `1` or `1,3`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    passes: Vec<u8>,
    /// `fixed:<radians>`, `lattice` or `continuous`.
    #[arg(long, default_value = "fixed:0")]
    basis: String,
    /// Hand Eve the secret angles (analysis mode, auth variant only).
    #[arg(long)]
    secret_known: bool,
    /// MITM readout; defaults to `bit` for bit messages and `state` for qubits.
    #[arg(long, value_enum)]
    eve_readout: Option<ReadoutArg>,
    /// What a MITM forwards to Bob.
    #[arg(long, value_enum, default_value_t = PayloadArg::Decoded)]
    eve_payload: PayloadArg,
}

fn parse_basis(s: &str) -> Option<BasisStrategy> {
    match s {
        "lattice" => Some(BasisStrategy::UniformLattice),
        "continuous" => Some(BasisStrategy::UniformContinuous),
        _ => {
            let x = s.strip_prefix("fixed:")?.parse::<f64>().ok()?;
            Angle::new(x).ok().map(BasisStrategy::Fixed)
        }
    }
}

impl AttackArgs {
    fn spec(&self, eve_seed: u64) -> Result<AttackSpec, CliError> {
        let mut spec = match self.attack {
            AttackArg::None => AttackSpec::none(),
            AttackArg::Mitm => AttackSpec::mitm(eve_seed),
            AttackArg::Intercept => {
                let passes = self
                    .passes
                    .iter()
                    .map(|&p| Pass::from_number(p).ok_or_else(|| CliError::Usage(format!("no pass {p}; use 1, 2 or 3"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let basis = parse_basis(&self.basis)
                    .ok_or_else(|| CliError::Usage(format!("bad --basis {:?}; use fixed:<radians>, lattice or continuous", self.basis)))?;
                AttackSpec::intercept(&passes, basis, eve_seed)
            }
        };
        if self.secret_known {
            spec = spec.with_secret_known();
        }
        spec.readout = self.eve_readout.map(|r| match r {
            ReadoutArg::Bit => Readout::Bit,
            ReadoutArg::State => Readout::State,
        });
        spec.payload = match self.eve_payload {
            PayloadArg::Decoded => Payload::Decoded,
            PayloadArg::H => Payload::Constant(PureState::H),
            PayloadArg::V => Payload::Constant(PureState::V),
        };
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct SessionArgs {
    #[arg(long, value_enum)]
    variant: VariantArg,
    /// Phase lattice size K (angles kπ/K).
    #[arg(long, default_value_t = 8)]
    k: u32,
    /// Message length.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = MessageArg::RandomBits)]
    message: MessageArg,
    /// Input for `bit-file` or `angle-file`.
    #[arg(long)]
    message_file: Option<PathBuf>,
    /// With `random-qubits`: Haar-random complex states instead of real ones.
    #[arg(long)]
    complex: bool,
    /// Pre-shared secret angle file (auth variant).
    #[arg(long)]
    secret: Option<PathBuf>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[command(flatten)]
    attack: AttackArgs,
}

impl SessionArgs {
    fn config(&self) -> Result<SessionConfig, CliError> {
        let mut cfg = SessionConfig::new(self.variant.into(), self.k, self.n);
        cfg.seeds = self.seeds.seeds();
        cfg.attack = self.attack.spec(self.seeds.eve())?;
        cfg.secret = self.secret.clone().map(|path| SecretSource::File { path });
        let file = || self.message_file.clone().ok_or(ConfigError::MissingMessageFile);
        cfg.message = match self.message {
            MessageArg::RandomBits => MessageSource::RandomBits,
            MessageArg::BitFile => MessageSource::BitFile { path: file()? },
            MessageArg::RandomQubits => MessageSource::RandomQubits { complex: self.complex },
            MessageArg::AngleFile => MessageSource::QubitAngleFile { path: file()? },
        };
        Ok(cfg)
    }

    fn session(&self) -> Result<Session, CliError> {
        Ok(self.config()?.resolve()?)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Omit wall-clock time so identical invocations print identical bytes.
    #[arg(long)]
    no_timestamp: bool,
}

impl OutputArgs {
    fn emit(&self, report: RunReport) -> Result<RunReport, CliError> {
        let report = if self.no_timestamp { report.without_timestamp() } else { report };
        println!("{}", report.to_json());
        Ok(report)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Also write a one-row CSV summary here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long, default_value_t = 8)]
    k: u32,
    /// Input states as angles in radians, uniformly weighted; default is
    /// uniform bits.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    input_angles: Vec<f64>,
    #[command(flatten)]
    attack: AttackArgs,
}

#[derive(Args)]
struct NetArgs {
    /// Per-frame timeout in seconds.
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
}

impl NetArgs {
    fn peer(&self) -> PeerOptions {
        PeerOptions {
            timeout: Duration::from_secs_f64(self.timeout),
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    /// Address to listen on, e.g. 127.0.0.1:7000.
    #[arg(long)]
    listen: String,
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ConnectArgs {
    /// Bob's (or the proxy's) address.
    #[arg(long)]
    connect: String,
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ProxyArgs {
    #[arg(long)]
    listen: String,
    /// Bob's address.
    #[arg(long)]
    upstream: String,
    /// Connections to serve before exiting.
    #[arg(long, default_value_t = 1)]
    sessions: usize,
    /// Alice sends bits (selects the default MITM readout for qubit variants).
    #[arg(long)]
    bit_message: bool,
    /// Secret angle file, used only with --secret-known.
    #[arg(long)]
    secret: Option<PathBuf>,
    #[arg(long, env = "QTP_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    attack: AttackArgs,
    #[command(flatten)]
    net: NetArgs,
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    k: u32,
    #[arg(long)]
    n: usize,
    #[arg(long, env = "QTP_SEED", default_value_t = 0)]
    seed: u64,
    /// Output path; written with owner-only permissions where supported.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Session(#[from] ProtocolError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Oracle(OracleError::Protocol(_)) => 3,
            CliError::Oracle(_) => 2,
            CliError::Session(_) | CliError::Net(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_row(r: &RunReport) -> String {
    let attack = match r.config.attack.kind {
        AttackKind::None => "none",
        AttackKind::InterceptResend => "intercept",
        AttackKind::Mitm => "mitm",
    };
    let fid = r.output_fidelity.as_ref();
    let eve = r.eve.as_ref();
    [
        r.config.variant.to_string(),
        r.config.k.to_string(),
        r.config.n.to_string(),
        attack.to_string(),
        opt(r.bob_bit_error_rate),
        opt(fid.map(|f| f.mean)),
        opt(fid.map(|f| f.min)),
        opt(eve.and_then(|e| e.accuracy)),
        opt(eve.and_then(|e| e.fidelity.as_ref()).map(|f| f.mean)),
        r.message_digest.clone(),
        r.decoded_digest.clone().unwrap_or_default(),
    ]
    .join(",")
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let session = args.session.session()?;
    let mut channel = adversary::session_channel(&session).map_err(ConfigError::from)?;
    let report = protocol::run_session(&session, &mut channel)?;
    let report = args.output.emit(report)?;
    if let Some(path) = &args.csv {
        fs::write(path, format!("{}\n{}\n", CSV_COLUMNS.join(","), csv_row(&report)))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let spec = args.attack.spec(0)?;
    let inputs = if args.input_angles.is_empty() {
        InputSet::Bits
    } else {
        let states = args
            .input_angles
            .iter()
            .map(|&x| {
                Angle::new(x)
                    .map(statekit::state_from_angle)
                    .map_err(|e| CliError::Usage(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        InputSet::States(states)
    };
    let result = oracle::enumerate_attack(args.variant.into(), args.k, &spec, &inputs)?;
    println!("{}", serde_json::to_string_pretty(&result).context("serializing")?);
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let session = args.session.session()?;
    let report = netsim::run_peer(Role::Bob, &session, &args.listen, &args.net.peer())?;
    args.output.emit(report)?;
    Ok(())
}

fn cmd_connect(args: &ConnectArgs) -> Result<(), CliError> {
    let session = args.session.session()?;
    let report = netsim::run_peer(Role::Alice, &session, &args.connect, &args.net.peer())?;
    args.output.emit(report)?;
    Ok(())
}

fn cmd_proxy(args: &ProxyArgs) -> Result<(), CliError> {
    let spec = args.attack.spec(args.seed)?;
    let secret = match &args.secret {
        Some(path) => Some(SecretAngles::load(path).map_err(ConfigError::from)?),
        None => None,
    };
    let opts = ProxyOptions {
        peer: args.net.peer(),
        bit_encoded: args.bit_message,
        secret,
    };
    let listener = TcpListener::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
    let results = netsim::serve_eve_proxy(&spec, &listener, &args.upstream, &opts, args.sessions);
    let mut records = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                eprintln!("qtp proxy: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    println!("{}", serde_json::to_string_pretty(&records).context("serializing")?);
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_keygen(args: &KeygenArgs) -> Result<(), CliError> {
    if args.k < 2 {
        return Err(ConfigError::LatticeTooSmall(args.k).into());
    }
    let set = PhaseSet::new(args.k).map_err(|_| ConfigError::LatticeTooLarge(args.k))?;
    if args.n == 0 {
        return Err(ConfigError::EmptyMessage.into());
    }
    let mut rng = SeededStream::new(args.seed, StreamId::Secret);
    let secret = phases::derive_secret(&set, &mut rng, args.n).map_err(ConfigError::from)?;
    secret.save(&args.out).map_err(ConfigError::from)?;
    eprintln!("wrote {} secret angles to {}", args.n, args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Connect(a) => cmd_connect(a),
        Command::Proxy(a) => cmd_proxy(a),
        Command::Keygen(a) => cmd_keygen(a),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qtp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
