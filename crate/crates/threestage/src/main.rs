use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use threestage::formats::{self, Metadata};
use threestage::net::{self, AliceConfig, NetError, SessionFailure};
use threestage::proxy::{self, ProxyError};
use threestage::strategy::parse_strategy;
use threestage::verify::{run_suite, Suite};
use threestage_core::adversary::{AttackConfig, AttackReport};
use threestage_core::bench::{bench_run, BenchConfig, BenchError, DecisionRule, DetectorModel};
use threestage_core::groups::FamilyKind;
use threestage_core::protocol::SessionMode;
use threestage_core::wire::WireMode;

#[derive(Parser)]
#[command(name = "threestage", version, about = "Three-stage multi-photon protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Send a message across the simulated optical bench.
    Bench {
        #[command(flatten)]
        opts: BenchOpts,
        #[command(flatten)]
        io: IoFlags,
    },
    /// Run many sessions with Eve on the line and report her statistics.
    Attack {
        #[command(flatten)]
        opts: AttackOpts,
        #[command(flatten)]
        io: IoFlags,
        /// Emit a CSV row instead of a table or JSON.
        #[arg(long, conflicts_with = "json")]
        csv: bool,
    },
    /// Run Bob: accept connections and receive messages.
    Serve {
        #[command(flatten)]
        opts: ServeOpts,
        #[command(flatten)]
        io: IoFlags,
    },
    /// Run Alice: connect to Bob and send a message.
    Send {
        #[command(flatten)]
        opts: SendOpts,
        #[command(flatten)]
        io: IoFlags,
    },
    /// Sit between Alice and Bob as Eve.
    Proxy {
        #[command(flatten)]
        opts: ProxyOpts,
        #[command(flatten)]
        io: IoFlags,
    },
    /// Run the built-in invariant suites.
    Verify {
        #[command(flatten)]
        opts: VerifyOpts,
        #[command(flatten)]
        io: IoFlags,
    },
}

#[derive(Args)]
struct IoFlags {
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Write results here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file of option values; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchOpts {
    #[arg(long)]
    message: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bit slot length in ms.
    #[arg(long)]
    slot_ms: Option<f64>,
    /// Detector extinction ratio; omit for an ideal detector.
    #[arg(long)]
    extinction: Option<f64>,
    /// Dark click probability per slot.
    #[arg(long)]
    dark_rate: Option<f64>,
    /// Decide clicks by the brighter arm instead of the Born rule.
    #[arg(long)]
    greater_intensity: Option<bool>,
    #[arg(long)]
    shutter_max_rate: Option<f64>,
    #[arg(long)]
    shutter_min_on: Option<f64>,
    #[arg(long)]
    rotator_max_speed: Option<f64>,
    #[arg(long)]
    rotator_range: Option<f64>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackOpts {
    /// e.g. none, intercept:stage=1,basis=0, beamsplit:k=1,n=2,stage=1, probe:kind=cnot,stage=1
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Photons per pulse (default 1, or the strategy's n).
    #[arg(long)]
    photons: Option<u32>,
    #[arg(long)]
    bits_per_trial: Option<usize>,
    #[arg(long)]
    block_size: Option<usize>,
    /// rotation, half-wave, or a family name (pauli, hadamard, permutation, dft, quaternion).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    extinction: Option<f64>,
    #[arg(long)]
    dark_rate: Option<f64>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServeOpts {
    /// Address to listen on; port 0 picks a free port.
    #[arg(long)]
    listen: Option<String>,
    /// Connections to serve before exiting.
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    extinction: Option<f64>,
    #[arg(long)]
    dark_rate: Option<f64>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SendOpts {
    #[arg(long)]
    connect: Option<String>,
    #[arg(long)]
    message: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    block_size: Option<u8>,
    /// rotation, half-wave, pauli or hadamard.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    photons: Option<u32>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProxyOpts {
    #[arg(long)]
    listen: Option<String>,
    /// Bob's address.
    #[arg(long)]
    connect: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Plaintext, if known, to score Eve's guesses against.
    #[arg(long)]
    message: Option<String>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyOpts {
    #[arg(long, value_enum)]
    suite: Option<Suite>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Domain(String),
    Usage(String),
    Transport(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Domain(_) => 1,
            Self::Usage(_) => 2,
            Self::Transport(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Domain(m) | Self::Usage(m) | Self::Transport(m) => m,
        }
    }
}

impl From<formats::FormatError> for Failure {
    fn from(e: formats::FormatError) -> Self {
        match e {
            formats::FormatError::Io(e) => Self::Transport(format!("io: {e}")),
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Transport(format!("io: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench { opts, io } => cmd_bench(opts, &io),
        Command::Attack { opts, io, csv } => cmd_attack(opts, &io, csv),
        Command::Serve { opts, io } => cmd_serve(opts, &io),
        Command::Send { opts, io } => cmd_send(opts, &io),
        Command::Proxy { opts, io } => cmd_proxy(opts, &io),
        Command::Verify { opts, io } => cmd_verify(opts, &io),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn merged<T: Serialize + for<'de> Deserialize<'de>>(opts: &T, io: &IoFlags) -> Result<T, Failure> {
    let file = match io.config.as_deref() {
        Some(path) => Some(
            formats::load_config(path).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?,
        ),
        None => None,
    };
    Ok(formats::merge_config(opts, file)?)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = net::fresh_seed();
        eprintln!("seed: {s}");
        s
    })
}

fn detector(extinction: Option<f64>, dark_rate: Option<f64>, greater: bool) -> Result<DetectorModel, Failure> {
    let d = DetectorModel {
        extinction_ratio: extinction.unwrap_or(f64::INFINITY),
        dark_click_probability: dark_rate.unwrap_or(0.0),
        rule: if greater {
            DecisionRule::GreaterIntensity
        } else {
            DecisionRule::Proportional
        },
    };
    d.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(d)
}

fn parse_mode(s: &str) -> Result<SessionMode, Failure> {
    let name = s.strip_prefix("family:").unwrap_or(s);
    match name {
        "rotation" => Ok(SessionMode::Rotation),
        "half-wave" | "hwp" => Ok(SessionMode::HalfWavePlates),
        other => FamilyKind::from_name(other)
            .map(SessionMode::Family)
            .ok_or_else(|| Failure::Usage(format!("unknown mode `{s}`"))),
    }
}

fn emit(io: &IoFlags, doc: &Value, human: &str) -> Outcome {
    let text = if io.json {
        serde_json::to_string_pretty(doc).expect("JSON values serialize") + "\n"
    } else {
        human.to_owned()
    };
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn write_json(path: &Path, doc: &Value) -> Outcome {
    fs::write(path, serde_json::to_string_pretty(doc).expect("JSON values serialize") + "\n")?;
    Ok(())
}

fn cmd_bench(opts: BenchOpts, io: &IoFlags) -> Outcome {
    let mut o = merged(&opts, io)?;
    let message = o
        .message
        .clone()
        .ok_or_else(|| Failure::Usage("--message is required".into()))?;
    let seed = resolve_seed(o.seed);
    o.seed = Some(seed);
    let defaults = BenchConfig::default();
    let config = BenchConfig {
        slot_duration: *o.slot_ms.get_or_insert(defaults.slot_duration),
        shutter_max_rate: *o.shutter_max_rate.get_or_insert(defaults.shutter_max_rate),
        shutter_min_on: *o.shutter_min_on.get_or_insert(defaults.shutter_min_on),
        rotator_max_speed: *o.rotator_max_speed.get_or_insert(defaults.rotator_max_speed),
        rotator_range: *o.rotator_range.get_or_insert(defaults.rotator_range),
        ..defaults
    };
    let greater = *o.greater_intensity.get_or_insert(false);
    let det = detector(o.extinction, o.dark_rate, greater)?;
    let meta = Metadata::new("bench", &o, seed);

    let run = bench_run(message.as_bytes(), &config, &det, seed).map_err(|e| match e {
        BenchError::EmptyMessage => Failure::Usage("empty message: nothing to send".into()),
        BenchError::Timing(v) => Failure::Domain(v.to_string()),
        other => Failure::Usage(other.to_string()),
    })?;
    let matches = run.matches(message.as_bytes());
    let decoded = run.decoded.as_deref().map(|d| String::from_utf8_lossy(d).into_owned());
    let doc = json!({
        "metadata": meta,
        "decoded": decoded,
        "matches": matches,
        "bits": run.transcript.sent.len(),
        "bit_errors": run.transcript.bit_errors(),
        "erasures": run.transcript.erasures(),
        "timing": {
            "events": run.timing.events.len(),
            "total_ms": run.timing.total_ms,
            "bits_per_second": run.timing.bits_per_second,
        },
    });
    let human = format!(
        "decoded      {}\nmatches      {}\nbits         {}\nbit errors   {}\nerasures     {}\nduration     {:.1} ms\nthroughput   {:.3} bits/s\nseed         {seed}\n",
        decoded.as_deref().unwrap_or("<erasure>"),
        if matches { "yes" } else { "no" },
        run.transcript.sent.len(),
        run.transcript.bit_errors(),
        run.transcript.erasures(),
        run.timing.total_ms,
        run.timing.bits_per_second,
    );
    emit(io, &doc, &human)?;
    if let Some(dir) = &io.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("report.json"), &doc)?;
        fs::write(dir.join("decoded.txt"), run.decoded.as_deref().unwrap_or_default())?;
        formats::write_timing_csv(fs::File::create(dir.join("timing.csv"))?, &meta, &run.timing)?;
        formats::write_jsonl(
            io::BufWriter::new(fs::File::create(dir.join("transcript.jsonl"))?),
            &meta,
            &run.transcript.records,
        )?;
    }
    if matches {
        Ok(())
    } else {
        Err(Failure::Domain("decoded message differs from the one sent".into()))
    }
}

fn attack_table(r: &AttackReport) -> String {
    let ci = |i: &threestage_core::adversary::Interval| format!("[{:.4}, {:.4}]", i.low, i.high);
    format!(
        "strategy            {}\nmode                {}\nphotons per pulse   {}\ntrials              {}\nbits                {}\neve accuracy        {:.4} {}  p={:.4}\nbob error rate      {:.4} {}\nerasure rate        {:.4} {}\nmutual information  {:.6} bits\nseed                {}\n",
        r.strategy,
        r.mode,
        r.photons_per_pulse,
        r.counts.trials,
        r.counts.bits,
        r.eve_bit_accuracy,
        ci(&r.eve_accuracy_interval),
        r.eve_p_value,
        r.bob_error_rate,
        ci(&r.bob_error_interval),
        r.erasure_rate,
        ci(&r.erasure_interval),
        r.mutual_information,
        r.seed,
    )
}

fn cmd_attack(opts: AttackOpts, io: &IoFlags, csv: bool) -> Outcome {
    let mut o = merged(&opts, io)?;
    let spec = parse_strategy(o.strategy.get_or_insert_with(|| "none".into())).map_err(|e| Failure::Usage(e.to_string()))?;
    let photons = match (o.photons, spec.photons_per_pulse) {
        (Some(p), Some(n)) if p != n => {
            return Err(Failure::Usage(format!("--photons {p} contradicts n={n} in the strategy")))
        }
        (p, n) => p.or(n).unwrap_or(1),
    };
    o.photons = Some(photons);
    let trials = *o.trials.get_or_insert(1000);
    let seed = resolve_seed(o.seed);
    o.seed = Some(seed);
    let config = AttackConfig {
        mode: parse_mode(o.mode.get_or_insert_with(|| "rotation".into()))?,
        photons_per_pulse: photons,
        bits_per_trial: *o.bits_per_trial.get_or_insert(1),
        block_size: *o.block_size.get_or_insert(1),
        detector: detector(o.extinction, o.dark_rate, false)?,
    };
    let meta = Metadata::new("attack", &o, seed);
    let report = threestage::run_attack_parallel(&spec.strategy, &config, trials, seed)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let doc = json!({ "metadata": meta, "report": report });
    if csv {
        let mut buf = Vec::new();
        formats::write_attack_csv(&mut buf, &meta, std::slice::from_ref(&report))?;
        io::stdout().write_all(&buf)?;
        if let Some(path) = &io.out {
            fs::write(path, &buf)?;
        }
    } else {
        emit(io, &doc, &attack_table(&report))?;
        if let Some(path) = &io.out {
            write_json(path, &doc)?;
        }
    }
    Ok(())
}

fn failure_from_net(e: &NetError) -> Failure {
    if e.is_transport() {
        Failure::Transport(e.to_string())
    } else {
        Failure::Domain(e.to_string())
    }
}

fn bind(addr: &str) -> Result<TcpListener, Failure> {
    let listener = TcpListener::bind(addr).map_err(|e| Failure::Transport(format!("cannot listen on {addr}: {e}")))?;
    eprintln!("listening on {}", listener.local_addr()?);
    Ok(listener)
}

fn cmd_serve(opts: ServeOpts, io: &IoFlags) -> Outcome {
    let mut o = merged(&opts, io)?;
    let listen = o.listen.get_or_insert_with(|| "127.0.0.1:7878".into()).clone();
    let sessions = *o.sessions.get_or_insert(1);
    let seed = resolve_seed(o.seed);
    o.seed = Some(seed);
    let det = detector(o.extinction, o.dark_rate, false)?;
    let meta = Metadata::new("serve", &o, seed);
    let listener = bind(&listen)?;
    let results = net::serve_tcp(&listener, sessions, &det, seed)?;

    let mut human = String::new();
    let mut docs = Vec::new();
    let mut records = Vec::new();
    let mut worst: Option<Failure> = None;
    for (i, r) in results.iter().enumerate() {
        let (doc, transcript) = match r {
            Ok(rep) => {
                let text = String::from_utf8_lossy(&rep.decoded).into_owned();
                human.push_str(&text);
                human.push('\n');
                (
                    json!({
                        "session_id": rep.session_id,
                        "decoded": text,
                        "erasures": rep.erasures(),
                        "frames": rep.transcript.frames.len(),
                    }),
                    &rep.transcript,
                )
            }
            Err(SessionFailure { error, transcript }) => {
                let f = match failure_from_net(error) {
                    Failure::Transport(m) => Failure::Transport(format!("session {i}: {m}")),
                    other => Failure::Domain(format!("session {i}: {}", other.message())),
                };
                if worst.as_ref().map_or(true, |w| f.code() > w.code()) {
                    worst = Some(f);
                }
                (json!({ "error": error.to_string(), "frames": transcript.frames.len() }), transcript)
            }
        };
        docs.push(doc);
        records.extend(transcript.frames.iter().map(|f| json!({ "session": i, "record": f })));
    }
    emit(io, &json!({ "metadata": meta, "sessions": docs }), &human)?;
    if let Some(path) = &io.out {
        formats::write_jsonl(io::BufWriter::new(fs::File::create(path)?), &meta, records)?;
    }
    worst.map_or(Ok(()), Err)
}

fn cmd_send(opts: SendOpts, io: &IoFlags) -> Outcome {
    let mut o = merged(&opts, io)?;
    let connect = o
        .connect
        .clone()
        .ok_or_else(|| Failure::Usage("--connect is required".into()))?;
    let message = o.message.get_or_insert_with(String::new).clone();
    let mode = parse_mode(o.mode.get_or_insert_with(|| "rotation".into()))?;
    let config = AliceConfig {
        mode: WireMode::try_from(mode).map_err(|e| Failure::Usage(e.to_string()))?,
        block_size: *o.block_size.get_or_insert(8),
        photons_per_pulse: *o.photons.get_or_insert(1),
    };
    let seed = resolve_seed(o.seed);
    o.seed = Some(seed);
    let meta = Metadata::new("send", &o, seed);
    let (transcript, outcome) = match net::send_tcp(connect.as_str(), message.as_bytes(), &config, seed) {
        Ok(rep) => {
            let ok = rep.bob_decoded_bytes == message.len() as u64;
            let doc = json!({
                "metadata": meta,
                "session_id": rep.session_id,
                "sent_bytes": message.len(),
                "bob_decoded_bytes": rep.bob_decoded_bytes,
                "frames": rep.transcript.frames.len(),
            });
            let human = format!(
                "sent {} bytes in {} frames; bob decoded {} bytes\n",
                message.len(),
                rep.transcript.frames.len(),
                rep.bob_decoded_bytes
            );
            emit(io, &doc, &human)?;
            let outcome = if ok {
                Ok(())
            } else {
                Err(Failure::Domain("bob decoded a different number of bytes".into()))
            };
            (rep.transcript, outcome)
        }
        Err(SessionFailure { error, transcript }) => {
            let f = failure_from_net(&error);
            let f = match f {
                Failure::Transport(_) => Failure::Transport(format!("{connect}: {error}")),
                other => other,
            };
            (transcript, Err(f))
        }
    };
    if let Some(path) = &io.out {
        formats::write_jsonl(io::BufWriter::new(fs::File::create(path)?), &meta, &transcript.frames)?;
    }
    outcome
}

fn cmd_proxy(opts: ProxyOpts, io: &IoFlags) -> Outcome {
    let mut o = merged(&opts, io)?;
    let listen = o.listen.get_or_insert_with(|| "127.0.0.1:7879".into()).clone();
    let connect = o
        .connect
        .clone()
        .ok_or_else(|| Failure::Usage("--connect is required".into()))?;
    let spec = parse_strategy(o.strategy.get_or_insert_with(|| "none".into())).map_err(|e| Failure::Usage(e.to_string()))?;
    let seed = resolve_seed(o.seed);
    o.seed = Some(seed);
    let meta = Metadata::new("proxy", &o, seed);
    let listener = bind(&listen)?;
    let mut outcome = proxy::proxy_tcp(&listener, connect.as_str(), spec.strategy, seed).map_err(|e| match e {
        ProxyError::Net(ref n) if n.is_transport() => Failure::Transport(e.to_string()),
        other => Failure::Domain(other.to_string()),
    })?;
    let guesses = outcome.eve_guesses().map_err(|e| Failure::Domain(e.to_string()))?;
    let guess_bytes = threestage_core::bench::decode_message(&guesses[..guesses.len() / 8 * 8]).unwrap_or_default();
    let mut doc = json!({
        "metadata": meta,
        "params": outcome.params,
        "alice_to_bob": outcome.alice_to_bob,
        "bob_to_alice": outcome.bob_to_alice,
        "bob_decoded_bytes": outcome.bob_decoded_bytes,
        "eve_guess": String::from_utf8_lossy(&guess_bytes),
    });
    let mut human = format!(
        "frames forwarded   {} -> bob, {} -> alice\nstage frames       {} rewritten of {}\neve guess          {}\n",
        outcome.alice_to_bob.frames,
        outcome.bob_to_alice.frames,
        outcome.alice_to_bob.rewritten + outcome.bob_to_alice.rewritten,
        outcome.alice_to_bob.stage_frames + outcome.bob_to_alice.stage_frames,
        String::from_utf8_lossy(&guess_bytes),
    );
    if let Some(m) = &o.message {
        let bits = threestage_core::bench::encode_message(m.as_bytes());
        let correct = bits.iter().zip(&guesses).filter(|(a, b)| a == b).count() as u64;
        let n = bits.len() as u64;
        let acc = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
        let ci = threestage_core::adversary::wilson_interval(correct, n);
        doc["eve_bit_accuracy"] = json!(acc);
        doc["eve_accuracy_interval"] = json!(ci);
        human.push_str(&format!("eve accuracy       {acc:.4} [{:.4}, {:.4}]\n", ci.low, ci.high));
    }
    emit(io, &doc, &human)?;
    if let Some(path) = &io.out {
        write_json(path, &doc)?;
    }
    Ok(())
}

fn cmd_verify(opts: VerifyOpts, io: &IoFlags) -> Outcome {
    let mut o = merged(&opts, io)?;
    let suite = *o.suite.get_or_insert(Suite::All);
    let seed = resolve_seed(o.seed);
    o.seed = Some(seed);
    let meta = Metadata::new("verify", &o, seed);
    let checks = run_suite(suite, seed);
    let mut human = String::new();
    for c in &checks {
        human.push_str(&format!(
            "{}  {:<9} {:<52} {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.detail
        ));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let doc = json!({ "metadata": meta, "checks": checks, "failed": failed });
    emit(io, &doc, &human)?;
    if let Some(path) = &io.out {
        write_json(path, &doc)?;
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Domain(format!("{failed} checks failed")))
    }
}
