//! `cntrack` command line: track, synth, eval, bench.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::records::{read_records, write_records};
use crate::sequence_io::{load_sequence, parse_mot_ground_truth, write_ppm, Frame};
use crate::synth::{bench, evaluate, generate, write_scenario, EvalOptions, ScenarioSpec};
use crate::tracker::{TrackRecord, Tracker};

#[derive(Debug, Parser)]
#[command(name = "cntrack", version, about = "Color-names visual tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track moving targets in an image sequence and write a CSV.
    Track(TrackArgs),
    /// Render a synthetic scenario with ground truth.
    Synth(SynthArgs),
    /// Score a tracker CSV against MOT ground truth.
    Eval(EvalArgs),
    /// Measure tracking throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set theta=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Directory of frames, read in lexicographic order.
    #[arg(long)]
    pub input: PathBuf,
    /// Filename glob, e.g. `img*.png`. Defaults to all png and ppm files.
    #[arg(long)]
    pub pattern: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Write each tracked frame with boxes drawn in, as PPM.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Tracker CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// MOT-style ground truth CSV.
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Ignore this many leading frames.
    #[arg(long, default_value_t = 0)]
    pub skip_frames: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let res = match cli.command {
        Command::Track(a) => cmd_track(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

pub fn resolve_config(args: &ConfigArgs) -> Result<TrackerConfig> {
    let base = match &args.config {
        Some(p) => TrackerConfig::load(p)?,
        None => TrackerConfig::default(),
    };
    base.apply_overrides(&args.set)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn cmd_track(a: &TrackArgs) -> Result<()> {
    let config = resolve_config(&a.config)?;
    let frames = load_sequence(&a.input.input, a.input.pattern.as_deref())?.collect_frames()?;
    let mut tracker = Tracker::bootstrap(config.clone(), &frames)?;
    let mut records = Vec::new();
    if let Some(dir) = &a.overlay {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (i, f) in frames.iter().enumerate().skip(config.init_frames) {
        let states = tracker.step(f)?;
        if let Some(dir) = &a.overlay {
            let mut img = f.clone();
            for s in &states {
                draw_box(&mut img, &s.bbox, id_color(s.id));
            }
            write_ppm(&dir.join(format!("overlay_{:05}.ppm", i)), &img)?;
        }
        records.extend(states.into_iter().map(|state| TrackRecord { frame: i, state }));
    }
    let mut w = create(&a.out)?;
    write_records(&mut w, &records).map_err(|e| Error::io(&a.out, e))?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    eprintln!("{} frames, {} records -> {}", frames.len(), records.len(), a.out.display());
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = ScenarioSpec::load(&a.spec)?;
    let (frames, truth) = generate(&spec)?;
    write_scenario(&frames, &truth, &a.out)?;
    eprintln!("{} frames -> {}", frames.len(), a.out.display());
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let outputs = read_records(&a.output)?;
    let truth = parse_mot_ground_truth(&a.truth)?;
    let report = evaluate(&outputs, &truth, &EvalOptions { start_frame: a.skip_frames })?;
    print!("{}", report.to_table());
    if let Some(p) = &a.json {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let config = resolve_config(&a.config)?;
    let t0 = Instant::now();
    let frames = load_sequence(&a.input.input, a.input.pattern.as_deref())?.collect_frames()?;
    let load = t0.elapsed().as_secs_f64();
    let report = bench(&config, &frames, a.repeat)?;
    for (i, s) in report.samples.iter().enumerate() {
        println!("run {}: {:.1} fps", i + 1, s);
    }
    println!(
        "median: {:.1} fps over {} frames ({} runs, load {:.2}s excluded)",
        report.median_fps,
        report.frames,
        report.samples.len(),
        load
    );
    Ok(())
}

fn id_color(id: u64) -> [u8; 3] {
    const COLORS: [[u8; 3]; 6] = [
        [255, 0, 0],
        [0, 255, 0],
        [0, 0, 255],
        [255, 255, 0],
        [0, 255, 255],
        [255, 0, 255],
    ];
    COLORS[(id as usize).wrapping_sub(1) % COLORS.len()]
}

fn draw_box(img: &mut Frame, b: &BoundingBox, c: [u8; 3]) {
    let Some(r) = b.to_pixel_rect(img.width, img.height) else {
        return;
    };
    let (x1, y1) = (r.right() - 1, r.bottom() - 1);
    for x in r.x..=x1 {
        img.set_rgb(x, r.y, c);
        img.set_rgb(x, y1, c);
    }
    for y in r.y..=y1 {
        img.set_rgb(r.x, y, c);
        img.set_rgb(x1, y, c);
    }
}
