use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "kappagate", version, about = "Kappa-gated dual-review study selection")]
pub struct Cli {
    /// Session document (relative paths resolve against KAPPAGATE_DATA_DIR).
    #[arg(long, global = true)]
    pub session: Option<PathBuf>,
    /// Sampling seed. Recorded at init; later commands check it against the session.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Name written to the audit log.
    #[arg(long, global = true)]
    pub actor: Option<String>,
    /// Timestamp for the mutation (RFC 3339); defaults to now.
    #[arg(long, global = true)]
    pub at: Option<String>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Create a session from a catalog file and initial criteria.
    Init(InitArgs),
    /// Deduplicate a catalog file and report the collapsed rows.
    Import(ImportArgs),
    /// Show or revise the inclusion/exclusion criteria.
    #[command(subcommand)]
    Criteria(CriteriaCmd),
    /// Draw the next dual-review batch.
    Sample,
    /// Record phase-1 verdicts, one at a time or from a selection form.
    Decide(DecideArgs),
    /// Close a round and apply the kappa gate.
    CloseRound(RoundArg),
    /// Settle a closed round's disagreements, optionally revising the criteria.
    Resolve(ResolveArgs),
    /// Split the remaining studies between the reviewers.
    Partition,
    /// Record phase-2 single-review verdicts.
    Decide2(Decide2Args),
    /// Add a line to the time sheet.
    LogTime(LogTimeArgs),
    /// Round view; verdicts stay hidden while the round is open.
    Round(RoundViewArgs),
    /// Recompute a closed round's statistics with one verdict changed.
    Whatif(WhatIfArgs),
    /// Counts, kappa trajectory and criteria versions.
    Summary,
    /// Dual-review summary form for a closed round.
    Report(ReportArgs),
    /// Measured time saving of a completed session.
    Savings,
    /// Projected time saving curve as CSV.
    Curve(CurveArgs),
    /// Replay the audit log and compare it with the stored session.
    Verify,
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    /// Two reviewer ids, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub reviewers: Vec<String>,
    /// TOML file with `inclusion`, `exclusion` and optional `change_note`.
    #[arg(long)]
    pub criteria: PathBuf,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// `consensus` or `include`.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub max_rounds_warning: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    pub file: PathBuf,
    /// Write the deduplicated catalog here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CriteriaCmd {
    Show {
        #[arg(long)]
        version: Option<u32>,
    },
    Revise {
        /// TOML file with `inclusion`, `exclusion` and `change_note`.
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct VerdictArgs {
    /// Reviewer; defaults to --actor.
    #[arg(long)]
    pub reviewer: Option<String>,
    #[arg(long, conflicts_with = "file", requires = "verdict")]
    pub study: Option<String>,
    /// include/exclude (or Y/N).
    #[arg(long, conflicts_with = "file")]
    pub verdict: Option<String>,
    /// Criteria cited, e.g. `IC1;EC3`.
    #[arg(long, default_value = "")]
    pub cite: String,
    /// Minutes spent (`25` or `00:25`).
    #[arg(long)]
    pub time: Option<String>,
    /// Selection form: `study_id,title,include,criteria` rows, with optional
    /// `# reviewer:` and `# time_spent: hh:mm` lines.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    /// Defaults to the open round.
    #[arg(long)]
    pub round: Option<u32>,
    #[command(flatten)]
    pub verdict: VerdictArgs,
}

#[derive(Debug, Args)]
pub struct Decide2Args {
    #[command(flatten)]
    pub verdict: VerdictArgs,
}

#[derive(Debug, Args)]
pub struct RoundArg {
    /// Defaults to the most recent round.
    #[arg(long)]
    pub round: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[arg(long)]
    pub round: Option<u32>,
    /// `STUDY=include|exclude[:note]`, once per disagreement.
    #[arg(long = "resolution")]
    pub resolutions: Vec<String>,
    /// Revised criteria (TOML).
    #[arg(long)]
    pub criteria: Option<PathBuf>,
    /// Discussion note.
    #[arg(long)]
    pub note: Option<String>,
}

#[derive(Debug, Args)]
pub struct LogTimeArgs {
    /// Whose time it is; defaults to --actor.
    #[arg(long)]
    pub who: Option<String>,
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub phase: u8,
    /// `hh:mm` or whole minutes.
    #[arg(long)]
    pub minutes: String,
}

#[derive(Debug, Args)]
pub struct RoundViewArgs {
    #[arg(long)]
    pub round: Option<u32>,
    /// Show the round as this reviewer sees it.
    #[arg(long)]
    pub reviewer: Option<String>,
}

#[derive(Debug, Args)]
pub struct WhatIfArgs {
    #[arg(long)]
    pub round: u32,
    #[arg(long)]
    pub reviewer: String,
    #[arg(long)]
    pub study: String,
    #[arg(long)]
    pub verdict: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub round: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, default_value_t = 1000.0)]
    pub max_studies: f64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Studies per minute; with --dual-minutes overrides the fitted model.
    #[arg(long, requires = "dual_minutes")]
    pub velocity: Option<f64>,
    #[arg(long, requires = "velocity")]
    pub dual_minutes: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
}
