//! `finpart`: batch front end to the finite-part engine.
//!
//! Exit codes: 0 success, 1 input or evaluation error, 2 a verification
//! residual above its tolerance.

mod commands;
mod report;
mod spec;

use clap::{Parser, Subcommand};
use report::Report;
use spec::{Config, InputError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "finpart", version, about = "Finite parts and Laurent currents of divergent complex integrals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Chart-spec file.
    spec: Option<PathBuf>,
    /// Override a spec value, e.g. `--set run.lambda=0.5,0`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set run.lambda=...`.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Shorthand for `--set run.tau=...`.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    /// Write the CSV here (extra tables go to `<stem>_<table>.csv`);
    /// otherwise CSV goes to stdout and the summary to stderr.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Γ(λ, τ) at the run block's λ and τ.
    Gamma(Common),
    /// Laurent coefficients ⟨μ_j(ω), ξ⟩ at λ = 0.
    Laurent(Common),
    /// The finite part ⟨μ_0(ω), ξ⟩.
    FinitePart(Common),
    /// Principal parts at the positive poles.
    Residues(Common),
    /// Cut-off integrals I(ε) on the run block's ε grid.
    Cutoff(Common),
    /// Metric-change formula for φ → ψ.
    VerifyMetric(Common),
    /// Stokes identity for a (2n−1)-form ω.
    VerifyStokes(Common),
    /// Predicted small-ε expansion against sampled and fitted I(ε).
    VerifyAsymptotic(Common),
    /// Mellin identity ∫ ε^{λ−1} I(ε) dε = Γ(λ)/λ.
    Mellin(Common),
    /// Built-in closed-form checks on the unit disc.
    Selftest(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Gamma(c) => ("gamma", c),
            Command::Laurent(c) => ("laurent", c),
            Command::FinitePart(c) => ("finite-part", c),
            Command::Residues(c) => ("residues", c),
            Command::Cutoff(c) => ("cutoff", c),
            Command::VerifyMetric(c) => ("verify-metric", c),
            Command::VerifyStokes(c) => ("verify-stokes", c),
            Command::VerifyAsymptotic(c) => ("verify-asymptotic", c),
            Command::Mellin(c) => ("mellin", c),
            Command::Selftest(c) => ("selftest", c),
        }
    }
}

fn overrides(c: &Common) -> Vec<String> {
    let mut all = c.set.clone();
    if let Some(l) = &c.lambda {
        all.push(format!("run.lambda={l}"));
    }
    if let Some(t) = &c.tau {
        all.push(format!("run.tau={t}"));
    }
    all
}

fn run(cli: &Cli) -> Result<Report, commands::CommandError> {
    let (name, common) = cli.command.parts();
    let sets = overrides(common);
    if let Command::Selftest(_) = cli.command {
        let mut header = vec!["command = selftest".to_string()];
        let (quad, tol) = match &common.spec {
            Some(p) => {
                let cfg = Config::load(&p.to_string_lossy(), &sets)?;
                header.push(format!("spec = {}", p.display()));
                header.extend(cfg.echo.iter().filter(|l| l.starts_with("quadrature.") || l.starts_with("run.tol_")).cloned());
                (cfg.quadrature, cfg.run.tol)
            }
            None => (Default::default(), Default::default()),
        };
        return commands::selftest(&quad, &tol, Report::new(name, header));
    }
    let Some(path) = &common.spec else {
        return Err(InputError { location: name.to_string(), message: "a spec file is required".into() }.into());
    };
    let cfg = Config::load(&path.to_string_lossy(), &sets)?;
    let mut header = vec![format!("command = {name}"), format!("spec = {}", path.display())];
    header.extend(cfg.echo.iter().cloned());
    let report = Report::new(name, header);
    match cli.command {
        Command::Gamma(_) => commands::gamma(&cfg, report),
        Command::Laurent(_) => commands::laurent(&cfg, report),
        Command::FinitePart(_) => commands::finite_part(&cfg, report),
        Command::Residues(_) => commands::residues(&cfg, report),
        Command::Cutoff(_) => commands::cutoff(&cfg, report),
        Command::VerifyMetric(_) => commands::verify_metric(&cfg, report),
        Command::VerifyStokes(_) => commands::verify_stokes(&cfg, report),
        Command::VerifyAsymptotic(_) => commands::verify_asymptotic(&cfg, report),
        Command::Mellin(_) => commands::mellin(&cfg, report),
        Command::Selftest(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let out = cli.command.parts().1.out.clone();
    match report.emit(out.as_deref()) {
        Ok(files) => {
            let mut lines = report.summary.clone();
            lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
            let text = lines.iter().map(|l| format!("{l}\n")).collect::<String>();
            if out.is_some() {
                print!("{text}");
            } else {
                eprint!("{text}");
            }
        }
        Err(e) => {
            eprintln!("error: cannot write report: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(if report.failed { 2 } else { 0 })
}
