use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpws_core::agent::QNetwork;
use dpws_core::config::{Profile, SimConfig};
use dpws_core::kpi::{ThroughputStats, FACTOR_LABELS};
use dpws_core::waveform::{papr_table, Modulation, Waveform};
use dpws_core::Error;

mod output;

use output::{Outputs, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "dpws", version, about = "Uplink waveform switching simulator with a DQN-tuned threshold")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// TOML config layered over the selected profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in profile used as the base configuration.
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Ci)]
    profile: ProfileArg,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "DPWS_OUT", default_value = "dpws-out")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ProfileArg {
    Paper,
    Ci,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Paper => Profile::Paper,
            ProfileArg::Ci => Profile::Ci,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum WaveformArg {
    CpOfdm,
    DftSOfdm,
}

impl From<WaveformArg> for Waveform {
    fn from(w: WaveformArg) -> Self {
        match w {
            WaveformArg::CpOfdm => Waveform::CpOfdm,
            WaveformArg::DftSOfdm => Waveform::DftSOfdm,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the agent and write its checkpoint and logs.
    Train,
    /// Greedy evaluation of a checkpoint against both fixed waveforms.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Fixed-waveform baseline on the evaluation drops.
    Baseline {
        #[arg(long, value_enum)]
        waveform: WaveformArg,
    },
    /// Monte-Carlo PAPR percentiles of both waveforms.
    Papr,
    /// Throughput gains of run A over run B, from their stats.csv files.
    Compare { run_a: PathBuf, run_b: PathBuf },
    /// Quick internal consistency checks.
    Selftest,
}

/// Failure classes mapped onto the process exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<SimConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => SimConfig::load(path, g.profile.into())?,
        None => SimConfig::profile(g.profile.into()),
    };
    if let Some(seed) = g.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CmdResult {
    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Compare { run_a, run_b } => return cmd_compare(g, run_a, run_b),
        Command::Selftest => return cmd_selftest(),
        _ => {}
    }
    let cfg = load_config(g)?;
    let out = Outputs::create(&g.out)?;
    match &cli.command {
        Command::Train => cmd_train(&cfg, &out),
        Command::Evaluate { checkpoint } => cmd_evaluate(&cfg, &out, checkpoint),
        Command::Baseline { waveform } => cmd_baseline(&cfg, &out, (*waveform).into()),
        Command::Papr => cmd_papr(&cfg, &out),
        Command::Compare { .. } | Command::Selftest => unreachable!(),
    }
}

fn cmd_train(cfg: &SimConfig, out: &Outputs) -> CmdResult {
    let t = dpws_core::sim::run_training(cfg)?;
    out.manifest(&RunManifest::new("train", cfg))?;
    std::fs::write(out.path("checkpoint.txt"), t.network.to_checkpoint())?;
    out.training_log(&t.log)?;
    out.episode_rewards(&t.episode_rewards)?;
    out.kpi_steps(&t.steps)?;
    out.switch_events(&t.switches)?;
    println!(
        "trained {} episodes; checkpoint at {}",
        t.episode_rewards.len(),
        out.path("checkpoint.txt").display()
    );
    Ok(())
}

fn cmd_evaluate(cfg: &SimConfig, out: &Outputs, checkpoint: &Path) -> CmdResult {
    let text = std::fs::read_to_string(checkpoint).map_err(|e| {
        Failure::Runtime(format!("cannot read checkpoint {}: {e}", checkpoint.display()))
    })?;
    let q = QNetwork::from_checkpoint(&text)?;
    let ai = dpws_core::sim::run_evaluation(cfg, Some(&q))?;
    let cp = dpws_core::sim::run_baseline(cfg, Waveform::CpOfdm)?;
    let dft = dpws_core::sim::run_baseline(cfg, Waveform::DftSOfdm)?;
    out.manifest(&RunManifest::new("evaluate", cfg))?;
    let steps: Vec<_> = ai.episodes.iter().flat_map(|e| e.steps.iter().cloned()).collect();
    out.kpi_steps(&steps)?;
    let switches: Vec<_> = ai.episodes.iter().flat_map(|e| e.switches.iter().copied()).collect();
    out.switch_events(&switches)?;
    let stats = ai.final_stats()?;
    out.stats("stats.csv", &stats)?;
    out.stats("stats_all_steps.csv", &ai.all_stats()?)?;
    let mut rows = Vec::new();
    for (name, base) in [("cp-ofdm", &cp), ("dft-s-ofdm", &dft)] {
        for r in dpws_core::sim::compare_stats(&stats, &base.final_stats()?) {
            rows.push((name.to_string(), r));
        }
    }
    out.comparison(&rows)?;
    print_stats("ai-dpws", &stats);
    Ok(())
}

fn cmd_baseline(cfg: &SimConfig, out: &Outputs, waveform: Waveform) -> CmdResult {
    let res = dpws_core::sim::run_baseline(cfg, waveform)?;
    out.manifest(&RunManifest::new(&format!("baseline {waveform}"), cfg))?;
    let steps: Vec<_> = res.episodes.iter().flat_map(|e| e.steps.iter().cloned()).collect();
    out.kpi_steps(&steps)?;
    let stats = res.final_stats()?;
    out.stats("stats.csv", &stats)?;
    out.stats("stats_all_steps.csv", &res.all_stats()?)?;
    print_stats(waveform.label(), &stats);
    Ok(())
}

fn cmd_papr(cfg: &SimConfig, out: &Outputs) -> CmdResult {
    let rows = papr_table(
        &cfg.papr,
        &[Modulation::Qpsk, Modulation::Qam16],
        &[0.90, 0.99, 0.999],
        cfg.run.seed,
    )?;
    out.manifest(&RunManifest::new("papr", cfg))?;
    out.papr(&rows)?;
    for r in &rows {
        println!(
            "{:<10} {:<6} {:>6.1}%  {:.3} dB",
            r.waveform.label(),
            r.modulation.label(),
            100.0 * r.percentile,
            r.papr_db
        );
    }
    Ok(())
}

fn cmd_compare(g: &GlobalArgs, run_a: &Path, run_b: &Path) -> CmdResult {
    let a = output::read_stats(&run_a.join("stats.csv"))?;
    let b = output::read_stats(&run_b.join("stats.csv"))?;
    let out = Outputs::create(&g.out)?;
    let rows: Vec<_> = dpws_core::sim::compare_stats(&a, &b)
        .into_iter()
        .map(|r| (run_b.display().to_string(), r))
        .collect();
    out.comparison(&rows)?;
    for (_, r) in &rows {
        println!("{:<4} {:+.4}%  {:+.6} Mbps", r.factor, r.relative_percent, r.absolute_mbps);
    }
    Ok(())
}

fn print_stats(name: &str, s: &ThroughputStats) {
    let cols: Vec<String> = FACTOR_LABELS
        .iter()
        .zip(s.values)
        .map(|(l, v)| format!("{l}={:.3}", v / 1e6))
        .collect();
    println!("{name} (Mbps): {}", cols.join(" "));
}

fn cmd_selftest() -> CmdResult {
    use dpws_core::agent::{compute_reward, RewardSpec};
    use dpws_core::link::{noise_power, NoiseConfig};

    let mut failed = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    };
    let n0 = noise_power(&NoiseConfig::default()) - 30.0;
    check("noise power", (n0 + 133.44).abs() < 0.01);
    let prev = ThroughputStats { values: [1.0; 9] };
    let cur = ThroughputStats { values: [1.01; 9] };
    check(
        "reward arithmetic",
        (compute_reward(&prev, &cur, &RewardSpec::default()) - 0.45).abs() < 1e-12,
    );
    let pa = dpws_core::waveform::RappPa::new(1.0, 1.0, 2.0).map_err(Failure::from)?;
    check("rapp knee", (pa.amplitude(1.0) - 2f64.powf(-0.25)).abs() < 1e-9);
    check("default config", SimConfig::ci().validate().is_ok());
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
