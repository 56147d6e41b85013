use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use handtrack::eval::dataset::{self, frame_paths, poses_csv};
use handtrack::eval::sweep::{sweep, sweep_csv, SweepParam};
use handtrack::eval::{compare_tables, track_source, FrameSource, GenerateOptions, Scenario, Sequence, Stats};
use handtrack::objective::{correspondences_csv, mutual_correspondences, score, ObjectiveContext};
use handtrack::render::{model_roi, rasterize, Shading};
use handtrack::tracker::TrackerConfig;
use handtrack::{camera, imageio};

#[derive(Parser)]
#[command(name = "handtrack", version, about = "Stereo colour-consistency tracking of hands and objects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with ground truth.
    Generate {
        #[arg(long, default_value = "single-hand")]
        scenario: Scenario,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Flat colours on a flat background.
        #[arg(long)]
        untextured: bool,
        /// Texture feature size (mm).
        #[arg(long, default_value_t = 10.0)]
        texture_scale: f64,
        /// Calibration to render with; defaults to the 640x480 benchmark rig.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a sequence from its frame-0 ground truth.
    Track {
        #[arg(long)]
        seq: PathBuf,
        /// Overrides `SEQ/calib.json`.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed. Run `k` uses `seed + k`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-frame errors of a trajectory against ground truth.
    Eval {
        #[arg(long)]
        trajectory: PathBuf,
        /// Sequence providing the models and `gt.csv`.
        #[arg(long)]
        seq: PathBuf,
        /// Ground truth table; defaults to `SEQ/gt.csv`.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Directory for errors.csv and success.csv; summary goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tracking error as a function of beta, wt or the PSO budget.
    Sweep {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated; budgets written `PARTICLESxGENERATIONS`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump depth buffers, distinctiveness maps and correspondences for one
    /// frame.
    RenderDebug {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Trajectory to take the state from; ground truth otherwise.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Outcome {
    Done,
    Lost,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Lost) => ExitCode::from(2),
        Err(e) => {
            // library errors already print their cause inline
            let mut message = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !message.contains(&cause) {
                    message = format!("{message}: {cause}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Generate {
            scenario,
            frames,
            seed,
            untextured,
            texture_scale,
            calib,
            out,
        } => {
            let rig = match calib {
                Some(p) => camera::load_calibration(&p)?,
                None => dataset::default_rig(),
            };
            let mut options = GenerateOptions::new(scenario, frames, seed);
            options.untextured = untextured;
            options.texture_scale = texture_scale;
            dataset::generate_dataset(&options, &rig, &out)?;
            Ok(Outcome::Done)
        }
        Command::Track {
            seq,
            calib,
            config,
            seed,
            runs,
            out,
        } => track(&seq, calib.as_deref(), load_config(config.as_deref(), seed)?, runs, &out),
        Command::Eval {
            trajectory,
            seq,
            gt,
            out,
        } => {
            let sequence = Sequence::open(&seq, None)?;
            let gt = gt.unwrap_or_else(|| seq.join("gt.csv"));
            let report = compare_tables(&sequence.template, &read(&trajectory)?, &read(&gt)?)?;
            if let Some(out) = out {
                create_dir(&out)?;
                write(&out.join("errors.csv"), &report.errors_csv())?;
                write(&out.join("success.csv"), &report.success_csv())?;
            }
            print!("frames,mean_mm\n{},{}\n", report.frames.len(), report.mean);
            Ok(Outcome::Done)
        }
        Command::Sweep {
            seq,
            param,
            values,
            runs,
            config,
            seed,
            out,
        } => {
            let base = load_config(config.as_deref(), seed)?;
            let sequence = Sequence::open(&seq, None)?;
            let rows = sweep(&sequence, param, &values, &base, runs)?;
            let csv = sweep_csv(param, &rows);
            match out {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(Outcome::Done)
        }
        Command::RenderDebug {
            seq,
            frame,
            trajectory,
            config,
            out,
        } => render_debug(&seq, frame, trajectory.as_deref(), &load_config(config.as_deref(), None)?, &out),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<TrackerConfig> {
    let mut config = match path {
        Some(p) => TrackerConfig::load(p)?,
        None => TrackerConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn track(seq: &Path, calib: Option<&Path>, config: TrackerConfig, runs: usize, out: &Path) -> anyhow::Result<Outcome> {
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let sequence = Sequence::open(seq, calib)?;
    create_dir(out)?;
    let mut summary = String::from("run,seed,frames,lost_at,mean_mm\n");
    let mut means = Vec::new();
    let mut lost = false;
    for k in 0..runs {
        let mut run_config = config;
        run_config.seed = config.seed.wrapping_add(k as u64);
        let dir = if runs == 1 { out.to_path_buf() } else { out.join(format!("run_{k:02}")) };
        create_dir(&dir)?;
        let outcome = track_source(&sequence, &run_config)?;
        write(&dir.join("trajectory.csv"), &poses_csv(&outcome.states))?;
        let mut scores = String::from("frame,score\n");
        for (i, s) in outcome.scores.iter().enumerate() {
            writeln!(scores, "{i},{s}").unwrap();
        }
        write(&dir.join("scores.csv"), &scores)?;
        let report = outcome.report(&sequence)?;
        if let Some(report) = &report {
            write(&dir.join("errors.csv"), &report.errors_csv())?;
            write(&dir.join("success.csv"), &report.success_csv())?;
            means.push(report.mean);
        }
        let lost_at = outcome.lost_at.map_or(String::new(), |f| f.to_string());
        let mean = report.map_or(String::new(), |r| r.mean.to_string());
        writeln!(summary, "{k},{},{},{lost_at},{mean}", run_config.seed, outcome.states.len()).unwrap();
        if let Some(f) = outcome.lost_at {
            eprintln!("run {k}: tracking lost at frame {f}");
            lost = true;
        }
    }
    if runs > 1 {
        write(&out.join("runs.csv"), &summary)?;
        if !means.is_empty() {
            let s = Stats::of(&means);
            write(&out.join("summary.csv"), &format!("runs,mean_mm,std_mm\n{},{},{}\n", s.n, s.mean, s.std))?;
        }
    }
    Ok(if lost { Outcome::Lost } else { Outcome::Done })
}

fn render_debug(
    seq: &Path,
    frame: usize,
    trajectory: Option<&Path>,
    config: &TrackerConfig,
    out: &Path,
) -> anyhow::Result<Outcome> {
    let sequence = Sequence::open(seq, None)?;
    if frame >= sequence.len() {
        bail!("frame {frame} out of range: the sequence has {} frames", sequence.len());
    }
    let state = match trajectory {
        Some(path) => {
            let rows = dataset::parse_poses_csv(&read(path)?)?;
            let (_, values) = rows
                .iter()
                .find(|(f, _)| *f == frame)
                .with_context(|| format!("{}: no row for frame {frame}", path.display()))?;
            sequence.template.unflatten(values)?
        }
        None => sequence
            .truth(frame)
            .with_context(|| format!("no ground truth for frame {frame}; pass --trajectory"))?,
    };
    let rig = &sequence.rig;
    let (left, right) = sequence.frame(frame)?;
    let roi = model_roi(&state, rig, config.margin_for(rig))?;
    let ctx = ObjectiveContext::from_frames(rig, (&left, &right), roi, config.maps(), config.objective())?;
    create_dir(out)?;
    let meshes = state.posed_meshes();
    for (name, camera, view) in [("left", &rig.left, &ctx.left), ("right", &rig.right, &ctx.right)] {
        let buffers = rasterize(&meshes, camera, Shading::Flat([255, 255, 255]));
        imageio::write_pgm16(out.join(format!("depth_{name}.pgm")), buffers.width, buffers.height, &buffers.depth_u16())?;
        let map = &view.distinct;
        imageio::write_pgm16(out.join(format!("cmap_{name}.pgm")), map.width, map.height, &map.to_u16(65535.0))?;
    }
    let corrs = mutual_correspondences(&state, &ctx);
    write(&out.join("correspondences.csv"), &correspondences_csv(&corrs, &ctx))?;
    let (pl, _) = frame_paths(seq, frame);
    print!(
        "frame,image,score,correspondences\n{frame},{},{},{}\n",
        pl.display(),
        score(&state, &ctx),
        corrs.len()
    );
    Ok(Outcome::Done)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
