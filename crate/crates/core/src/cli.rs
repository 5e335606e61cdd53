//! Command-line front end. `dispatch` returns the process exit status:
//! 0 on success, 1 for usage, validation, parse and I/O errors, 2 when a
//! model or embedding endpoint failed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::agents::http::live_clients;
use crate::agents::mock::synthetic_corpus;
use crate::agents::{AgentClient, EmbeddingClient, RequestLimiter};
use crate::config::Config;
use crate::document::{deserialize_layout, layout_to_json, serialize_layout};
use crate::edit::{edit_and_refine, EditOp};
use crate::eval::evaluate_batch;
use crate::memory::{
    augment, build_memory, deserialize_memory, parse_manifest, resolve_manifest, retrieve,
    serialize_memory, PriorMemory,
};
use crate::pipeline::{generate, mock_memory, refine, Clients, DiagnosisMode, PipelineConfig};
use crate::refine::{Diagnoser, RefinementTrace};
use crate::render::{legend, render_topdown, DEFAULT_RESOLUTION};
use crate::scene::{Layout, ShortDescription};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mock,
    Live,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DiagnosisArg {
    Agent,
    Geometric,
}

#[derive(Debug, Parser)]
#[command(
    name = "scene-synth",
    version,
    about = "Indoor scene layouts from short descriptions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Each overrides the config file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mock")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Room size as `width,depth,height` in meters.
    #[arg(long, value_parser = parse_triple)]
    pub room: Option<[f64; 3]>,
    #[arg(long)]
    pub theta_p: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub clr_required: Option<f64>,
    #[arg(long, value_enum)]
    pub diagnosis: Option<DiagnosisArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a manifest of multi-view scenes into a prior memory file.
    BuildMemory {
        /// Manifest; mock mode uses the built-in synthetic corpus when omitted.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Retrieve scene priors for a description and print the package.
    Retrieve {
        description: String,
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        theta_ret: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a refined layout into a run directory.
    Generate {
        description: String,
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the refinement loop on an existing layout.
    Rectify {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render a layout as a top-down PPM image.
    Render {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Batch evaluation over a file of descriptions, one per line.
    Eval {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Add, delete or move an object, then re-run refinement.
    Edit {
        #[command(subcommand)]
        op: EditCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum EditCommand {
    Add {
        category: String,
        /// Center as `x,y`.
        #[arg(long, value_parser = parse_pair)]
        at: [f64; 2],
        #[arg(long, default_value_t = 0.0)]
        yaw: f64,
        /// Dominant the new accessory belongs to.
        #[arg(long)]
        parent: Option<String>,
        /// Object the new accessory rests on.
        #[arg(long)]
        on_top: Option<String>,
        #[command(flatten)]
        target: EditTarget,
    },
    Delete {
        id: String,
        #[command(flatten)]
        target: EditTarget,
    },
    Move {
        id: String,
        /// New center as `x,y`.
        #[arg(long, value_parser = parse_pair)]
        to: [f64; 2],
        #[command(flatten)]
        target: EditTarget,
    },
}

#[derive(Debug, Args)]
pub struct EditTarget {
    #[arg(long)]
    pub layout: PathBuf,
    /// Output directory; defaults to `edit/` beside the layout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

fn parse_numbers<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse::<f64>()
            .map_err(|_| format!("not a number: {p:?}"))?;
        if !o.is_finite() {
            return Err(format!("not finite: {p:?}"));
        }
    }
    Ok(out)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_numbers::<2>(s)
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    parse_numbers::<3>(s)
}

/// Runs the command line; never panics on bad input.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Session {
    config: Config,
    pipeline: PipelineConfig,
    mode: Mode,
    seed: u64,
}

impl Session {
    fn new(common: &Common) -> Result<Self, Error> {
        let file = match &common.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let flags = Config {
            room: common.room,
            theta_p: common.theta_p,
            max_steps: common.max_steps,
            clr_required: common.clr_required,
            diagnosis: common.diagnosis.map(|d| match d {
                DiagnosisArg::Agent => DiagnosisMode::Agent,
                DiagnosisArg::Geometric => DiagnosisMode::Geometric,
            }),
            ..Config::default()
        };
        let config = file.overlay(&flags);
        let pipeline = config.pipeline()?;
        Ok(Self {
            config,
            pipeline,
            mode: common.mode,
            seed: common.seed,
        })
    }

    fn clients(&self) -> Result<Clients, Error> {
        match self.mode {
            Mode::Mock => Ok(Clients::mock()),
            Mode::Live => {
                let settings = self.config.live_settings()?;
                let live =
                    live_clients(&settings, RequestLimiter::new(self.config.max_in_flight()))?;
                Ok(Clients {
                    agent: live.agent,
                    embedder: live.embedder,
                })
            }
        }
    }

    fn memory(
        &self,
        path: Option<&Path>,
        embedder: &EmbeddingClient,
    ) -> Result<PriorMemory, Error> {
        match (path, self.mode) {
            (Some(p), _) => Ok(deserialize_memory(&read(p)?)?),
            (None, Mode::Mock) => Ok(mock_memory(embedder)?),
            (None, Mode::Live) => Err(Error::Usage("--memory is required in live mode".into())),
        }
    }

    fn diagnoser<'a>(&self, agent: &'a AgentClient) -> Diagnoser<'a> {
        match self.pipeline.diagnosis {
            DiagnosisMode::Agent => Diagnoser::Agent(agent),
            DiagnosisMode::Geometric => Diagnoser::Geometric,
        }
    }
}

fn read(p: &Path) -> Result<String, Error> {
    fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn write(p: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(p, contents).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn load_layout(p: &Path) -> Result<Layout, Error> {
    Ok(deserialize_layout(&read(p)?)?)
}

/// Writes the run directory: layout files, one render per step, the
/// trace, the color legend and agent transcripts.
pub fn write_run(
    dir: &Path,
    layout: &Layout,
    trace: &RefinementTrace,
    agent: &AgentClient,
    seed: u64,
    resolution: u32,
) -> Result<(), Error> {
    write(&dir.join("layout.scene"), serialize_layout(layout))?;
    write(&dir.join("layout.json"), layout_to_json(layout))?;
    for step in &trace.steps {
        let img = match &step.image {
            Some(img) => img.clone(),
            None => render_topdown(&step.layout, resolution, seed),
        };
        write(&dir.join(step.image_name()), img.to_ppm())?;
    }
    write(
        &dir.join("final.ppm"),
        render_topdown(layout, resolution, seed).to_ppm(),
    )?;
    write(&dir.join("trace.log"), trace.to_document())?;
    write(&dir.join("legend.txt"), legend(layout, seed))?;
    agent
        .log()
        .write_dir(&dir.join("transcripts"))
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(())
}

fn resolution(p: &PipelineConfig) -> u32 {
    p.refine.render_resolution.unwrap_or(DEFAULT_RESOLUTION)
}

fn read_scenes(text: &str) -> Result<Vec<ShortDescription>, Error> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| ShortDescription::new(l).map_err(Error::from))
        .collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::BuildMemory {
            manifest,
            out,
            common,
        } => {
            let s = Session::new(&common)?;
            let clients = s.clients()?;
            let parsed = match (&manifest, s.mode) {
                (Some(m), _) => resolve_manifest(parse_manifest(&read(m)?)?, &clients.agent)?,
                (None, Mode::Mock) => synthetic_corpus(crate::pipeline::MOCK_CORPUS_SIZE),
                (None, Mode::Live) => {
                    return Err(Error::Usage("--manifest is required in live mode".into()))
                }
            };
            let memory = build_memory(&parsed, &clients.embedder)?;
            write(&out, serialize_memory(&memory))?;
            info!("wrote {} entries to {}", memory.len(), out.display());
            Ok(())
        }
        Command::Retrieve {
            description,
            memory,
            k,
            theta_ret,
            out,
            common,
        } => {
            let s = Session::new(&common)?;
            let clients = s.clients()?;
            let mem = s.memory(memory.as_deref(), &clients.embedder)?;
            let d = ShortDescription::new(description)?;
            let pkg = retrieve(
                &d,
                &mem,
                k.unwrap_or(s.pipeline.top_k),
                theta_ret.unwrap_or(s.pipeline.theta_ret),
                &clients.embedder,
                &clients.agent,
            )?;
            let mut doc = pkg.to_document();
            doc.push_str("\n# augmented prompt\n");
            for line in augment(&d, &pkg).prompt_text().lines() {
                doc.push_str("# ");
                doc.push_str(line);
                doc.push('\n');
            }
            match out {
                Some(p) => write(&p, doc),
                None => {
                    print!("{doc}");
                    Ok(())
                }
            }
        }
        Command::Generate {
            description,
            memory,
            out,
            common,
        } => {
            let s = Session::new(&common)?;
            let clients = s.clients()?;
            let mem = s.memory(memory.as_deref(), &clients.embedder)?;
            let d = ShortDescription::new(description)?;
            let g = generate(&d, &mem, &s.pipeline, &clients, s.seed)?;
            for w in &g.warnings {
                eprintln!("warning: {w}");
            }
            write(&out.join("initial.scene"), serialize_layout(&g.initial))?;
            write(&out.join("priors.txt"), g.augmented.package.to_document())?;
            write_run(
                &out,
                &g.layout,
                &g.trace,
                &clients.agent,
                s.seed,
                resolution(&s.pipeline),
            )
        }
        Command::Rectify {
            layout,
            out,
            common,
        } => {
            let s = Session::new(&common)?;
            let clients = s.clients()?;
            let g0 = load_layout(&layout)?;
            let (g, trace) = refine(&g0, &s.pipeline, &clients.agent, s.seed)?;
            write_run(
                &out,
                &g,
                &trace,
                &clients.agent,
                s.seed,
                resolution(&s.pipeline),
            )
        }
        Command::Render {
            layout,
            out,
            resolution,
            common,
        } => {
            let s = Session::new(&common)?;
            let l = load_layout(&layout)?;
            write(&out, render_topdown(&l, resolution, s.seed).to_ppm())
        }
        Command::Eval {
            scenes,
            repeats,
            memory,
            out,
            common,
        } => {
            if repeats == 0 {
                return Err(Error::Usage("--repeats must be at least 1".into()));
            }
            let s = Session::new(&common)?;
            let clients = s.clients()?;
            let mem = s.memory(memory.as_deref(), &clients.embedder)?;
            let ds = read_scenes(&read(&scenes)?)?;
            if ds.is_empty() {
                return Err(Error::Usage(format!(
                    "{} lists no scenes",
                    scenes.display()
                )));
            }
            let report = evaluate_batch(&ds, repeats, &mem, &s.pipeline, &clients, s.seed);
            write(&out.join("report.tsv"), report.to_tsv())?;
            write(&out.join("report.txt"), report.to_document())?;
            for sc in &report.scenes {
                for f in &sc.failures {
                    eprintln!("warning: {}: {f}", sc.description);
                }
            }
            Ok(())
        }
        Command::Edit { op } => {
            let (op, target) = match op {
                EditCommand::Add {
                    category,
                    at,
                    yaw,
                    parent,
                    on_top,
                    target,
                } => (
                    EditOp::Add {
                        category,
                        x: at[0],
                        y: at[1],
                        yaw,
                        parent,
                        on_top,
                    },
                    target,
                ),
                EditCommand::Delete { id, target } => (EditOp::Delete { id }, target),
                EditCommand::Move { id, to, target } => (
                    EditOp::Move {
                        id,
                        x: to[0],
                        y: to[1],
                    },
                    target,
                ),
            };
            let s = Session::new(&target.common)?;
            let clients = s.clients()?;
            let l = load_layout(&target.layout)?;
            let out = target.out.unwrap_or_else(|| {
                target
                    .layout
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join("edit")
            });
            let res = edit_and_refine(
                &l,
                &op,
                &s.pipeline.catalog,
                &s.pipeline.refine,
                s.diagnoser(&clients.agent),
                s.seed,
            )?;
            write(
                &out.join("edited.scene"),
                serialize_layout(&res.edited.layout),
            )?;
            write_run(
                &out,
                &res.layout,
                &res.trace,
                &clients.agent,
                s.seed,
                resolution(&s.pipeline),
            )?;
            if let Some(step) = res.trace.steps.last() {
                if s.pipeline.refine.weights.triggers(step.penalty) {
                    eprintln!(
                        "warning: residual penalty {:.3} after {} steps",
                        step.penalty,
                        res.trace.len() - 1
                    );
                    for id in step.report.violating_ids() {
                        eprintln!("warning: residual violation involves {id}");
                    }
                }
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_lists() {
        assert_eq!(parse_pair("3.2, 0.6").unwrap(), [3.2, 0.6]);
        assert!(parse_pair("1").is_err());
        assert!(parse_triple("1,2,x").is_err());
        assert!(parse_triple("1,2,inf").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(dispatch(["scene-synth", "bogus"]), 1);
        assert_eq!(dispatch(["scene-synth", "--help"]), 0);
        assert_eq!(
            dispatch([
                "scene-synth",
                "edit",
                "move",
                "x",
                "--to",
                "1",
                "--layout",
                "l"
            ]),
            1
        );
    }

    #[test]
    fn scene_list_skips_comments() {
        let ds = read_scenes("# header\na bedroom\n\n  an office  \n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[1].as_str(), "an office");
    }
}
