use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use open_stirap::experiments::{self as exp, ScenarioConfig, Table};
use open_stirap::Result;

#[derive(Parser)]
#[command(name = "open-stirap", version, about = "Open-system STIRAP simulator: spectra, trajectories and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Branch-tracked Liouvillian spectrum over a gamma grid, with exceptional points
    Spectrum(Opts),
    /// Single pulse-driven trajectory (uses --a, or traj_a from the config)
    Evolve(Opts),
    /// Population imbalance Z(t, gamma) at constant couplings from a random pure state
    Imbalance(Opts),
    /// Final target population P3(a) for each gamma
    Sweep(Opts),
    /// Optimal adiabaticity parameter for each gamma
    Aopt(Opts),
    /// Emission-assisted transfer against the lossless reference
    Assist(Opts),
    /// Coherent jump operator against the incoherent channels and the closed system
    Variant(Opts),
}

#[derive(Args)]
struct Opts {
    /// Named preset (fig2, fig4, fig5, fig6, fig7, fig8)
    #[arg(long)]
    preset: Option<String>,
    /// key = value configuration file, applied after the preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// closed | dephasing | emission | custom
    #[arg(long)]
    case: Option<String>,
    /// Loss rate: value, list, lin:lo:hi:n or log:lo:hi:n
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// Adiabaticity: value, list, lin:lo:hi:n or log:lo:hi:n
    #[arg(long)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    g0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// Constant pump coupling for spectrum and imbalance runs
    #[arg(long, allow_hyphen_values = true)]
    g1: Option<String>,
    /// Constant Stokes coupling for spectrum and imbalance runs
    #[arg(long, allow_hyphen_values = true)]
    g2: Option<String>,
    /// Time window t0,t1
    #[arg(long, allow_hyphen_values = true)]
    tspan: Option<String>,
    #[arg(long)]
    rel_tol: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// coherent | incoherent | nine comma-separated reals
    #[arg(long, allow_hyphen_values = true)]
    jump: Option<String>,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
}

impl Opts {
    fn config(&self, evolve: bool) -> Result<ScenarioConfig> {
        let mut cfg = match &self.preset {
            Some(name) => ScenarioConfig::from_preset(name)?,
            None => ScenarioConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg.load(path)?;
        }
        let pairs = [
            ("case", &self.case),
            ("gamma", &self.gamma),
            ("a", &self.a),
            ("g0", &self.g0),
            ("tau", &self.tau),
            ("sigma", &self.sigma),
            ("delta", &self.delta),
            ("g1", &self.g1),
            ("g2", &self.g2),
            ("tspan", &self.tspan),
            ("rel_tol", &self.rel_tol),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("jump", &self.jump),
            ("format", &self.format),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if evolve {
            if let Some(a) = &self.a {
                cfg.set("traj_a", a)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<()> {
    let (table, cfg) = match command {
        Command::Spectrum(o) => {
            let cfg = o.config(false)?;
            let run = exp::run_spectrum_scan(&cfg)?;
            for r in &run.scan.records {
                eprintln!(
                    "exceptional point at gamma = {:.12} ({:?}, condition {:.3e}, overlap {:.6}, confirmed {})",
                    r.gamma_star, r.kind, r.peak_condition, r.overlap, r.confirmed
                );
            }
            for w in &run.scan.warnings {
                eprintln!("warning: [{}, {}]: {}", w.interval.0, w.interval.1, w.message);
            }
            (run.to_table(&cfg), cfg)
        }
        Command::Evolve(o) => {
            let cfg = o.config(true)?;
            (exp::run_evolve(&cfg)?, cfg)
        }
        Command::Imbalance(o) => {
            let cfg = o.config(false)?;
            (exp::run_imbalance_map(&cfg)?.to_table(&cfg), cfg)
        }
        Command::Sweep(o) => {
            let cfg = o.config(false)?;
            let table = if cfg.case == exp::CaseName::Closed {
                exp::run_closed_stirap(&cfg)?.sweep_table(&cfg)
            } else {
                exp::sweep_table(&exp::run_open_sweep(&cfg)?, &cfg)
            };
            (table, cfg)
        }
        Command::Aopt(o) => {
            let cfg = o.config(false)?;
            let results = exp::run_a_opt(&cfg)?;
            for r in results.iter().filter(|r| !r.clear_maximum) {
                eprintln!("gamma = {}: no clear maximum of P3(a)", r.gamma);
            }
            (exp::a_opt_table(&results, &cfg), cfg)
        }
        Command::Assist(o) => {
            let cfg = o.config(false)?;
            (exp::run_emission_assist(&cfg)?.to_table(&cfg), cfg)
        }
        Command::Variant(o) => {
            let cfg = o.config(false)?;
            (exp::variant_table(&exp::run_coherent_decay_variant(&cfg)?, &cfg), cfg)
        }
    };
    emit(&table, &cfg)
}

fn emit(table: &Table, cfg: &ScenarioConfig) -> Result<()> {
    match &cfg.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            table.write(cfg.format, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            table.write(cfg.format, &mut w)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
