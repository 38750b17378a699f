use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sos_core::analysis::{loss_sweep, overhead_sweep, recovery_sweep, Table};
use sos_core::authority::{load_announcements, store_announcements, RegistryError};
use sos_core::codec::{
    classify_payload, decode_frame, encode_frame, encode_position_payload, encode_security_payload,
    Payload,
};
use sos_core::simulator::{run_scenario, ScenarioConfig, SimError};
use sos_core::verifier::feed::{read_feed, write_feed};
use sos_core::verifier::{
    verify_feed, write_verdict_log, FeedFormat, RecoveryLimits, VerificationVerdict,
};
use sos_core::{
    Authority, Es1090Frame, PositionPayload, ProtocolParams, Registry, SecurityKind,
    SecurityPayload, VerifierConfig,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_REJECTED: u8 = 3;
const EXIT_PARITY: u8 = 4;

#[derive(Parser)]
#[command(name = "sos", version, about = "Broadcast authentication for ADS-B")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Provision a flight: append its announcement to a registry and write
    /// the master key to a private file.
    Provision(ProvisionArgs),
    /// Run a scenario and write the verdict report.
    Simulate(SimulateArgs),
    /// Verify a recorded antenna feed against a registry.
    Verify(VerifyArgs),
    /// Closed-form sweeps as CSV.
    Analyze(AnalyzeArgs),
    /// Decode or encode a single frame.
    Codec(CodecArgs),
}

#[derive(Args)]
struct ProvisionArgs {
    /// 24-bit aircraft address in hex.
    #[arg(long)]
    icao: String,
    /// Boot time in seconds.
    #[arg(long)]
    t0: f64,
    /// Key chain length.
    #[arg(long, default_value_t = sos_core::tesla::DEFAULT_CHAIN_LENGTH)]
    n: u64,
    /// Fixed seed for the master key (testing only).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 2.0)]
    slot_duration: f64,
    #[arg(long, default_value_t = 6.0)]
    rate: f64,
    /// Registry file to append to.
    #[arg(long)]
    out: PathBuf,
    /// Where the master key goes; defaults to `<out>.secret`.
    #[arg(long)]
    secret_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Verdict log (CSV).
    #[arg(long)]
    out_report: PathBuf,
    /// Dump every antenna observation; `.txt`/`.csv` gives the text format.
    #[arg(long)]
    out_feed: Option<PathBuf>,
    /// Write the announcements used, for offline `verify`.
    #[arg(long)]
    out_registry: Option<PathBuf>,
    /// Write the run summary here as well as to stdout.
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Binary,
    Text,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    feed: PathBuf,
    /// Verdict log (CSV).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    format: FormatArg,
    /// Majority-vote sub-slots per slot (default: one per second).
    #[arg(long)]
    subslots: Option<u32>,
    #[arg(long, default_value_t = sos_core::verifier::DEFAULT_MAX_SUBSETS as u64)]
    max_subsets: u64,
    /// Search all subsets without antenna-majority filtering.
    #[arg(long)]
    no_majority: bool,
    /// Slots to wait for a later key when a slot's own key was lost.
    #[arg(long, default_value_t = sos_core::verifier::DEFAULT_KEY_WAIT_SLOTS)]
    key_wait_slots: u32,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    sweep: Sweep,
}

#[derive(Subcommand)]
enum Sweep {
    /// Bandwidth overhead over digest size and slot duration.
    Overhead {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "64,96,128,160,192,224,256"
        )]
        digest_bits: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        durations: Vec<f64>,
        #[arg(long, default_value_t = 128)]
        key_bits: u32,
        #[arg(long, default_value_t = 6.0)]
        rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Slot verification success under packet loss, SOS against HIBS.
    Loss {
        #[arg(long, default_value_t = 0.3)]
        p_max: f64,
        #[arg(long, default_value_t = 0.01)]
        p_step: f64,
        #[arg(long, default_value_t = 2.0)]
        slot_duration: f64,
        #[arg(long, default_value_t = 6.0)]
        rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Worst-case recovery work under injection.
    Recovery {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        adversary_rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
        durations: Vec<f64>,
        #[arg(long, default_value_t = 6.0)]
        rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct CodecArgs {
    /// 28 hex digits.
    #[arg(long)]
    decode: Option<String>,
    /// Comma-separated `key=value` fields: icao, tc, and either
    /// alt/lat/lon/t/f for a position or chunk/content for a security frame.
    /// Optional: ca (default 5), payload (raw 56-bit hex).
    #[arg(long)]
    encode: Option<String>,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<RegistryError> for Failure {
    fn from(e: RegistryError) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn provision(a: ProvisionArgs) -> Outcome {
    let icao = u32::from_str_radix(&a.icao, 16)
        .ok()
        .filter(|v| a.icao.len() <= 6 && *v < 1 << 24)
        .ok_or_else(|| Failure::Usage(format!("`{}` is not a 24-bit hex address", a.icao)))?;
    let mut registry = if a.out.exists() {
        load_announcements(&a.out)?
    } else {
        Registry::new()
    };
    let params = ProtocolParams {
        slot_duration: a.slot_duration,
        data_rate: a.rate,
        chain_length: a.n,
    };
    let mut authority = Authority::with_active(registry.iter().map(|ann| ann.icao));
    let (prov, ann) = authority
        .provision(icao, a.t0, &params, a.seed)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    registry
        .insert(ann)
        .map_err(|e| Failure::Usage(e.to_string()))?;

    let secret_path = a.secret_out.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".secret");
        p.into()
    });
    let mut opts = OpenOptions::new();
    opts.create(true).append(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut secret = opts
        .open(&secret_path)
        .map_err(|e| Failure::Data(format!("{}: {e}", secret_path.display())))?;
    writeln!(secret, "{}", prov.to_secret_line())?;
    store_announcements(&a.out, &registry)?;

    print!("{}", Registry::from_iter([ann]).to_text());
    eprintln!("master key written to {}", secret_path.display());
    Ok(0)
}

fn simulate(a: SimulateArgs) -> Outcome {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
    let config = ScenarioConfig::from_toml(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    let report = run_scenario(&config).map_err(|e| match e {
        SimError::Config(e) => Failure::Usage(e.to_string()),
        other => Failure::Data(other.to_string()),
    })?;
    report.write_verdicts(create(&a.out_report)?)?;
    if let Some(path) = &a.out_feed {
        write_feed(create(path)?, &report.feed, FeedFormat::from_path(path))?;
    }
    if let Some(path) = &a.out_registry {
        store_announcements(path, &report.registry)?;
    }
    let summary = report.summary();
    if let Some(path) = &a.out_summary {
        fs::write(path, &summary)?;
    }
    print!("{summary}");
    Ok(0)
}

fn verify(a: VerifyArgs) -> Outcome {
    let registry = load_announcements(&a.registry)?;
    let format = match a.format {
        FormatArg::Auto => FeedFormat::from_path(&a.feed),
        FormatArg::Binary => FeedFormat::Binary,
        FormatArg::Text => FeedFormat::Text,
    };
    let feed = read_feed(&a.feed, format)
        .map_err(|e| Failure::Data(format!("{}: {e}", a.feed.display())))?;
    if a.subslots == Some(0) || a.max_subsets == 0 {
        return Err(Failure::Usage(
            "--subslots and --max-subsets must be positive".into(),
        ));
    }
    let config = VerifierConfig {
        subslots: a.subslots,
        majority_filter: !a.no_majority,
        limits: RecoveryLimits {
            max_subsets: u128::from(a.max_subsets),
        },
        key_wait_slots: a.key_wait_slots,
        ..VerifierConfig::default()
    };
    let (verdicts, stats) = verify_feed(&registry, config, &feed);
    write_verdict_log(create(&a.out)?, &verdicts)?;
    let rejected = verdicts
        .iter()
        .filter(|v| matches!(v.verdict, VerificationVerdict::Rejected { .. }))
        .count();
    println!(
        "{} observations, {} verdicts, {} rejected",
        stats.observations,
        verdicts.len(),
        rejected
    );
    Ok(if rejected > 0 { EXIT_REJECTED } else { 0 })
}

fn steps(max: f64, step: f64) -> Result<Vec<f64>, Failure> {
    if !(step > 0.0 && (0.0..=1.0).contains(&max)) {
        return Err(Failure::Usage("need 0 <= p-max <= 1 and p-step > 0".into()));
    }
    let n = (max / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| (i as f64 * step).min(max)).collect())
}

fn analyze(a: AnalyzeArgs) -> Outcome {
    let (table, out): (Result<Table, _>, Option<PathBuf>) = match a.sweep {
        Sweep::Overhead {
            digest_bits,
            durations,
            key_bits,
            rate,
            out,
        } => (
            overhead_sweep(&digest_bits, &durations, key_bits, rate),
            out,
        ),
        Sweep::Loss {
            p_max,
            p_step,
            slot_duration,
            rate,
            out,
        } => (loss_sweep(&steps(p_max, p_step)?, slot_duration, rate), out),
        Sweep::Recovery {
            adversary_rates,
            durations,
            rate,
            out,
        } => (recovery_sweep(&adversary_rates, &durations, rate), out),
    };
    let table = table.map_err(|e| Failure::Usage(e.to_string()))?;
    match out {
        Some(path) => table.write_csv(create(&path)?)?,
        None => table.write_csv(io::stdout().lock())?,
    }
    Ok(0)
}

fn parse_fields(spec: &str) -> Result<Vec<(String, String)>, Failure> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
                .ok_or_else(|| Failure::Usage(format!("field `{kv}` is not key=value")))
        })
        .collect()
}

fn int_field(key: &str, v: &str) -> Result<u64, Failure> {
    let parsed = match v.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => v.parse(),
    };
    parsed.map_err(|_| Failure::Usage(format!("`{key}` needs an integer, got `{v}`")))
}

fn encode(spec: &str) -> Result<String, Failure> {
    let mut icao = None;
    let mut ca = 5u64;
    let mut tc = None;
    let mut raw_payload = None;
    let mut pos = PositionPayload::default();
    let mut chunk = None;
    let mut content = None;
    for (k, v) in parse_fields(spec)? {
        match k.as_str() {
            "icao" => {
                icao = Some(
                    u64::from_str_radix(&v, 16)
                        .map_err(|_| Failure::Usage(format!("bad icao `{v}`")))?,
                )
            }
            "ca" => ca = int_field(&k, &v)?,
            "tc" => tc = Some(int_field(&k, &v)?),
            "payload" => {
                raw_payload = Some(
                    u64::from_str_radix(&v, 16)
                        .map_err(|_| Failure::Usage(format!("bad payload `{v}`")))?,
                )
            }
            "alt" => pos.altitude = int_field(&k, &v)? as u16,
            "lat" => pos.latitude = int_field(&k, &v)? as u32,
            "lon" => pos.longitude = int_field(&k, &v)? as u32,
            "t" => pos.t_flag = int_field(&k, &v)? != 0,
            "f" => pos.f_flag = int_field(&k, &v)? != 0,
            "chunk" => chunk = Some(int_field(&k, &v)?),
            "content" => content = Some(int_field(&k, &v)?),
            _ => return Err(Failure::Usage(format!("unknown field `{k}`"))),
        }
    }
    let icao = icao.ok_or_else(|| Failure::Usage("`icao` is required".into()))?;
    let bad = |e: sos_core::codec::CodecError| Failure::Usage(e.to_string());
    let payload = match (raw_payload, tc) {
        (Some(p), _) => p,
        (None, None) => return Err(Failure::Usage("`tc` or `payload` is required".into())),
        (None, Some(tc)) => {
            let tc = u8::try_from(tc).map_err(|_| Failure::Usage("`tc` exceeds 5 bits".into()))?;
            match SecurityKind::from_type_code(tc) {
                Some(kind) => encode_security_payload(&SecurityPayload {
                    kind,
                    chunk_id: chunk.ok_or_else(|| Failure::Usage("`chunk` is required".into()))?
                        as u8,
                    content: content
                        .ok_or_else(|| Failure::Usage("`content` is required".into()))?,
                })
                .map_err(bad)?,
                None => {
                    pos.type_code = tc;
                    encode_position_payload(&pos).map_err(bad)?
                }
            }
        }
    };
    let frame = Es1090Frame::extended_squitter(ca as u8, icao as u32, payload).map_err(bad)?;
    Ok(encode_frame(&frame).map_err(bad)?.to_hex())
}

fn decode(hex: &str) -> Outcome {
    let frame = sos_core::RawFrame::from_hex(hex).map_err(|e| Failure::Data(e.to_string()))?;
    let decoded = decode_frame(frame.as_bytes()).map_err(|e| Failure::Data(e.to_string()))?;
    let f = decoded.frame;
    println!("df={}", f.df);
    println!("ca={}", f.capability);
    println!("icao={:06x}", f.icao);
    println!("tc={}", f.payload >> 48);
    match classify_payload(f.payload) {
        Payload::Position(p) => {
            println!("kind=position");
            println!("t={}", u8::from(p.t_flag));
            println!("f={}", u8::from(p.f_flag));
            println!("alt={}", p.altitude);
            println!("lat={}", p.latitude);
            println!("lon={}", p.longitude);
        }
        Payload::Security(s) => {
            println!(
                "kind={}",
                match s.kind {
                    SecurityKind::Digest => "digest",
                    SecurityKind::Key => "key",
                }
            );
            println!("chunk_id={}", s.chunk_id);
            println!("content={:012x}", s.content);
        }
    }
    println!("pi={:06x}", f.pi);
    println!("parity={}", if decoded.parity_ok { "ok" } else { "FAIL" });
    Ok(if decoded.parity_ok { 0 } else { EXIT_PARITY })
}

fn codec(a: CodecArgs) -> Outcome {
    match (a.decode, a.encode) {
        (Some(hex), _) => decode(&hex),
        (None, Some(spec)) => {
            println!("{}", encode(&spec)?);
            Ok(0)
        }
        (None, None) => Err(Failure::Usage("--decode or --encode is required".into())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Provision(a) => provision(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Analyze(a) => analyze(a),
        Command::Codec(a) => codec(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
