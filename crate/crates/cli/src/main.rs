use clap::{Args, Parser, Subcommand};
use fdisp_cli::{execute, OUT_DIR_ENV};
use fdisp_core::config::{parse_unchecked, Command, ExperimentConfig};
use fdisp_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Declares an argument group whose flags map one-to-one onto config keys.
macro_rules! key_flags {
    ($name:ident { $($field:ident : $flag:literal => $help:literal),* $(,)? }) => {
        #[derive(Args, Debug)]
        struct $name {
            $(
                #[arg(long = $flag, value_name = "VALUE", allow_hyphen_values = true, help = $help)]
                $field: Option<String>,
            )*
        }

        impl $name {
            fn pairs(&self) -> Vec<(String, &Option<String>)> {
                vec![$(($flag.replace('-', "_"), &self.$field)),*]
            }
        }
    };
}

key_flags!(CommonFlags {
    alpha: "alpha" => "dispersion exponent in [1, 2]",
    c: "c" => "wave speed",
    dim: "dim" => "spatial dimension, 1 or 2",
    grid: "grid" => "points per axis, `256` or `256x128`",
    length: "length" => "box length, `32` or `32x16`",
    seed: "seed" => "random seed",
    tolerance: "tolerance" => "ground-state tolerance",
    max_iterations: "max-iterations" => "ground-state iteration cap",
    band_limited: "band-limited" => "solve the dealiased profile equation (true|false)",
});

key_flags!(SimulateFlags {
    dt: "dt" => "time step",
    t_end: "t-end" => "final time",
    scheme: "scheme" => "etdrk4 | ifrk4",
    frame_speed: "frame-speed" => "speed of the moving frame",
    diagnostics_every: "diagnostics-every" => "steps between samples",
    dealias: "dealias" => "apply the 2/3 rule (true|false)",
    initial: "initial" => "soliton | gaussian",
    checkpoint: "checkpoint" => "start from a checkpoint file",
});

key_flags!(SpectrumFlags {
    coercivity_trials: "coercivity-trials" => "number of projected trial fields",
});

key_flags!(MonotonicityFlags {
    sigma: "sigma" => "direction, comma separated",
    gamma: "gamma" => "weight decay exponent",
    m_scale: "m-scale" => "weight scale M",
    omega: "omega" => "weight offset",
    probes: "probes" => "number of probe fields",
    weight_form: "weight-form" => "plain | rescaled",
    c1: "c1" => "smoothing constant, or `auto`",
});

key_flags!(KernelFlags {
    r_inner: "r-inner" => "radius of the inner shell",
});

key_flags!(InstabilityFlags {
    n_index: "n-index" => "perturbation size is 1/n",
    dt: "dt" => "time step",
    t_end: "t-end" => "run length in rescaled time s",
    scheme: "scheme" => "etdrk4 | ifrk4",
    frame_speed: "frame-speed" => "speed of the moving frame",
    sample_every: "sample-every" => "steps between samples",
    a_cutoff: "A" => "cutoff scale of the virial functional",
    x0_list: "x0-list" => "right-mass thresholds, comma separated",
    m_exponent: "m-exponent" => "exponent of the weighted mass, in (1, 3/2)",
    weight_scale: "weight-scale" => "scale of the monotonicity weight",
    nu: "nu" => "exponent of the time weight, in (0, 3/8)",
    flip: "flip" => "flip the sign of the perturbation (true|false)",
});

#[derive(Args, Debug)]
struct Io {
    /// `key = value` config file; flags override its entries.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve for the ground state profile.
    GroundState {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Lowest eigenpair and coercivity of the linearized operator.
    Spectrum {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        extra: SpectrumFlags,
    },
    /// Time-step the equation.
    Simulate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        extra: SimulateFlags,
    },
    /// Weighted commutator sweep over seeded probes.
    CheckMonotonicity {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        extra: MonotonicityFlags,
    },
    /// Decay of the band-limited dispersion kernel.
    KernelDecay {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        extra: KernelFlags,
    },
    /// Perturbed ground state: modulation, virial functional and verdict.
    Instability {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        extra: InstabilityFlags,
    },
}

#[derive(Parser, Debug)]
#[command(name = "fdisp", version, about = "Solitary waves of fractional dispersive equations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

fn build(
    command: Command,
    io: &Io,
    flags: Vec<(String, &Option<String>)>,
) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &io.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
            })?;
            parse_unchecked(command, &text)?
        }
        None => ExperimentConfig::new(command),
    };
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(&key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (command, io, flags) = match &cli.command {
        Cmd::GroundState { io, common } => (Command::GroundState, io, common.pairs()),
        Cmd::Spectrum { io, common, extra } => (Command::Spectrum, io, [common.pairs(), extra.pairs()].concat()),
        Cmd::Simulate { io, common, extra } => (Command::Simulate, io, [common.pairs(), extra.pairs()].concat()),
        Cmd::CheckMonotonicity { io, common, extra } => {
            (Command::CheckMonotonicity, io, [common.pairs(), extra.pairs()].concat())
        }
        Cmd::KernelDecay { io, common, extra } => {
            (Command::KernelDecay, io, [common.pairs(), extra.pairs()].concat())
        }
        Cmd::Instability { io, common, extra } => {
            (Command::Instability, io, [common.pairs(), extra.pairs()].concat())
        }
    };
    let result = build(command, io, flags).and_then(|cfg| {
        if io.print_config {
            print!("{}", cfg.to_text());
            return Ok(());
        }
        let outcome = execute(&cfg, &io.out_dir)?;
        println!("{command} {}", outcome.summary);
        for f in &outcome.files {
            log::info!("wrote {}", f.display());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
