use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trafficops_service::commands::{self, Exit, Format};
use trafficops_service::config::ServiceConfig;

#[derive(Parser)]
#[command(name = "trafficops", version, about = "Agentic traffic-operations service and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by `serve` and `ask`; flags override the file and environment.
#[derive(Args, Default)]
struct ServiceArgs {
    /// TOML config file (also TRAFFICOPS_CONFIG)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    artifact_dir: Option<PathBuf>,
    #[arg(long)]
    trips: Option<PathBuf>,
    #[arg(long)]
    zones: Option<PathBuf>,
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Network copied into each new session
    #[arg(long)]
    network: Option<PathBuf>,
    /// Scripted model replies (JSON) instead of a live endpoint
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Fixed clock, "YYYY-MM-DD HH:MM:SS"
    #[arg(long)]
    clock: Option<String>,
    #[arg(long)]
    token: Option<String>,
}

impl ServiceArgs {
    fn resolve(self) -> Result<ServiceConfig, String> {
        let file = self.config.or_else(|| std::env::var_os("TRAFFICOPS_CONFIG").map(PathBuf::from));
        let mut cfg = match file {
            Some(p) => ServiceConfig::load(&p)?,
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        if let Some(v) = self.listen {
            cfg.listen = v;
        }
        if let Some(v) = self.data_dir {
            cfg.data_dir = v;
        }
        let over = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
            if v.is_some() {
                *slot = v;
            }
        };
        over(&mut cfg.artifact_dir, self.artifact_dir);
        over(&mut cfg.trips, self.trips);
        over(&mut cfg.zones, self.zones);
        over(&mut cfg.geometry, self.geometry);
        over(&mut cfg.network, self.network);
        over(&mut cfg.fixture, self.fixture);
        if self.clock.is_some() {
            cfg.clock = self.clock;
        }
        if self.token.is_some() {
            cfg.token = self.token;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/WebSocket service
    Serve(ServiceArgs),
    /// Run one turn and print the trace and answer
    Ask {
        text: String,
        #[arg(long, default_value = "data_processing")]
        bot: String,
        /// Continue an existing session
        #[arg(long)]
        session: Option<String>,
        #[command(flatten)]
        service: ServiceArgs,
    },
    /// Generate seeded synthetic trips, zones and grid geometry
    GenData {
        #[arg(long, default_value_t = 10_000)]
        trips: usize,
        #[arg(long, default_value_t = 16)]
        zones: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a trip CSV and report its contents
    ImportTrips {
        file: PathBuf,
        #[arg(long)]
        zones: Option<PathBuf>,
    },
    /// Write a sample network
    Fixture {
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a network and print its performance report
    Simulate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 3600)]
        horizon: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// Compute a Webster plan for one intersection from simulated flows
    Optimize {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        node: String,
        #[arg(long, default_value_t = 3600)]
        horizon: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the plan into the network file
        #[arg(long)]
        apply: bool,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
}

fn run(cmd: Command) -> Result<Exit, String> {
    let print = |s: String| {
        println!("{s}");
        Exit::Ok
    };
    match cmd {
        Command::Serve(args) => {
            let cfg = args.resolve()?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(trafficops_service::serve(cfg))?;
            Ok(Exit::Ok)
        }
        Command::Ask {
            text,
            bot,
            session,
            service,
        } => {
            let cfg = service.resolve()?;
            commands::ask(&cfg, &text, &bot, session.as_deref(), &mut std::io::stdout(), &mut std::io::stderr())
        }
        Command::GenData { trips, zones, seed, out } => commands::gen_data(trips, zones, seed, &out).map(print),
        Command::ImportTrips { file, zones } => commands::import_trips(&file, zones.as_deref()).map(print),
        Command::Fixture { name, out } => commands::write_fixture(&name, &out).map(print),
        Command::Simulate {
            net,
            horizon,
            seed,
            format,
        } => commands::simulate(&net, horizon, seed, format).map(print),
        Command::Optimize {
            net,
            node,
            horizon,
            seed,
            apply,
            format,
        } => commands::optimize(&net, &node, horizon, seed, apply, format).map(print),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.lines().next().unwrap_or("failed"));
            ExitCode::from(Exit::Failed as u8)
        }
    }
}
