use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use brr::frontend::{ConsoleFrontend, ScriptFrontend};
use brr::{dump, load_rules, normalize_ws, protocol};
use brr_core::session::{Frontend, Session};
use clap::Parser;

/// Conditional term rewriter with break-rewrite and rewrite provenance queries.
#[derive(Parser, Debug)]
#[command(name = "brr", version)]
struct Cli {
    /// Rule files loaded before the first command.
    #[arg(long, num_args = 1..)]
    rules: Vec<PathBuf>,
    /// Run commands from a file instead of the terminal.
    #[arg(long)]
    script: Option<PathBuf>,
    /// With --script: compare the transcript to this file (whitespace-insensitive).
    #[arg(long, requires = "script")]
    expect: Option<PathBuf>,
    /// Serve the JSON protocol on a TCP address, e.g. 127.0.0.1:7070.
    #[arg(long, conflicts_with_all = ["script", "stdio"])]
    serve: Option<String>,
    /// Serve the JSON protocol on stdin/stdout.
    #[arg(long, conflicts_with = "script")]
    stdio: bool,
    /// Write the last brr-data list as JSON on exit.
    #[arg(long)]
    json_dump: Option<PathBuf>,
    /// Write the last brr-data list as s-expressions on exit.
    #[arg(long)]
    sexpr_dump: Option<PathBuf>,
    /// Do not rewrite the bodies of quoted lambda objects.
    #[arg(long)]
    no_lambda_rewrite: bool,
    /// Deepest hypothesis backchaining allowed (default 3)
    #[arg(long)]
    backchain_limit: Option<usize>,
    /// Rewriter steps allowed per proof (default 20000)
    #[arg(long)]
    step_budget: Option<u64>,
}

impl Cli {
    fn setup<F: Frontend>(&self, session: &mut Session<F>) -> Result<()> {
        load_rules(session, &self.rules)?;
        let s = session.settings_mut();
        if self.no_lambda_rewrite {
            s.rewrite_lambda_objects = false;
        }
        if let Some(n) = self.backchain_limit {
            s.backchain_limit = n;
        }
        if let Some(n) = self.step_budget {
            s.step_budget = n;
        }
        Ok(())
    }

    fn write_dumps<F: Frontend>(&self, session: &Session<F>) -> Result<()> {
        let data = session.brr_data().unwrap_or(&[]);
        if let Some(p) = &self.json_dump {
            let text = serde_json::to_string_pretty(&dump::to_json(data))?;
            std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
        }
        if let Some(p) = &self.sexpr_dump {
            std::fs::write(p, dump::to_sexpr_text(data)).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(addr) = &cli.serve {
        protocol::serve_tcp(addr, |s| cli.setup(s))?;
        return Ok(true);
    }
    if cli.stdio {
        let reader = BufReader::new(std::io::stdin());
        let session = protocol::serve(reader, Box::new(std::io::stdout()), |s| cli.setup(s))?;
        cli.write_dumps(&session)?;
        return Ok(true);
    }
    if let Some(path) = &cli.script {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut fe = ScriptFrontend::new(&text, path.parent().map(PathBuf::from));
        fe.echo = cli.expect.is_none();
        let mut session = Session::new(fe);
        cli.setup(&mut session)?;
        session.repl();
        cli.write_dumps(&session)?;
        if let Some(golden) = &cli.expect {
            let want = std::fs::read_to_string(golden).with_context(|| format!("reading {}", golden.display()))?;
            let got = session.frontend().transcript();
            if normalize_ws(&want) != normalize_ws(got) {
                eprintln!("transcript differs from {}:\n{got}", golden.display());
                return Ok(false);
            }
        }
        return Ok(true);
    }
    let stdin = std::io::stdin();
    let mut session = Session::new(ConsoleFrontend::new(stdin.lock(), std::io::stdout()));
    cli.setup(&mut session)?;
    session.repl();
    cli.write_dumps(&session)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

