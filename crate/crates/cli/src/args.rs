use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sensorforge::definitions::OsTag;

fn parse_os(s: &str) -> Result<OsTag, String> {
    s.parse()
        .map_err(|_| format!("expected one of: {}", OsTag::ALL.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(", ")))
}

fn parse_assignment(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("`{s}` is not key=value")),
    }
}

/// The OS of this machine, used when `--os` is not given.
pub fn host_os() -> OsTag {
    match std::env::consts::OS {
        "windows" => OsTag::Windows,
        "macos" => OsTag::Macos,
        _ => OsTag::Linux,
    }
}

#[derive(Debug, Parser)]
#[command(name = "sensorforge", version, about = "Declarative sensor wrappers: validate, generate, serve, share, simulate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Work with sensor device definition files
    #[command(subcommand)]
    Sdd(SddCommand),
    /// Emit wrapper source for a middleware template
    Generate(GenerateArgs),
    /// Run the middleware: load virtual sensors and answer admin commands
    Serve(ServeArgs),
    /// Run or talk to a definition registry
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Run a simulated sensor device
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Debug, Subcommand)]
pub enum SddCommand {
    /// Check a definition and print one line per violation
    Validate {
        /// Path to a .sdd.xml file
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Path to a .sdd.xml file
    pub sdd: PathBuf,
    /// Template to emit for
    #[arg(long)]
    pub target: String,
    /// Operating system whose configuration defaults apply [default: this machine's]
    #[arg(long, value_parser = parse_os)]
    pub os: Option<OsTag>,
    /// Configuration override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, String)>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of .vsd.xml files to load at startup
    #[arg(long)]
    pub vsd_dir: PathBuf,
    /// Local definition repository directory
    #[arg(long)]
    pub sddlr: PathBuf,
    /// Cloud definition registry base URL
    #[arg(long, env = "SENSORFORGE_SDDCR_URL")]
    pub sddcr_url: Option<String>,
    /// Admin socket address, e.g. 127.0.0.1:7700
    #[arg(long)]
    pub listen: String,
    /// Directory for per-sensor JSON-lines stores [default: memory only]
    #[arg(long)]
    pub persist_dir: Option<PathBuf>,
    /// Operating system whose configuration defaults apply [default: this machine's]
    #[arg(long, value_parser = parse_os)]
    pub os: Option<OsTag>,
}

#[derive(Debug, Args)]
pub struct RegistryUrl {
    /// Registry base URL
    #[arg(long, env = "SENSORFORGE_SDDCR_URL")]
    pub url: String,
}

#[derive(Debug, Subcommand)]
pub enum RegistryCommand {
    /// Serve the definitions in a directory over HTTP
    Serve {
        /// Directory holding <name>.sdd.xml files
        #[arg(long)]
        root: PathBuf,
        /// Address to listen on, e.g. 127.0.0.1:8080
        #[arg(long)]
        listen: String,
    },
    /// Upload a definition
    Push {
        /// Path to a .sdd.xml file
        sdd: PathBuf,
        #[command(flatten)]
        registry: RegistryUrl,
    },
    /// Download a definition by name
    Pull {
        /// Definition name
        name: String,
        #[command(flatten)]
        registry: RegistryUrl,
        /// Output file [default: standard output]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List definitions whose name or description contains the query
    Search {
        /// Case-insensitive substring; empty lists everything
        #[arg(default_value = "")]
        query: String,
        #[command(flatten)]
        registry: RegistryUrl,
    },
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Device fixture JSON file
    #[arg(long)]
    pub fixture: PathBuf,
    /// Override the fixture's send rate (records per second)
    #[arg(long)]
    pub rate_hz: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Connect to a listening wrapper and push every record
    Push {
        #[command(flatten)]
        fixture: FixtureArgs,
        /// Wrapper host
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Wrapper port
        #[arg(long)]
        port: u16,
    },
    /// Listen and answer each poll command with the next record
    Poll {
        #[command(flatten)]
        fixture: FixtureArgs,
        /// Address to listen on
        #[arg(long)]
        listen: String,
        /// Poll command, with \n, \r, \t, \0, \\ and \xHH escapes
        #[arg(long, default_value = "POLL\\n")]
        poll_literal: String,
        /// Stop after this many seconds [default: run until killed]
        #[arg(long)]
        duration_secs: Option<f64>,
    },
    /// Append every record to a file, standing in for a serial port
    File {
        #[command(flatten)]
        fixture: FixtureArgs,
        /// File to append to
        #[arg(long)]
        path: PathBuf,
    },
}
