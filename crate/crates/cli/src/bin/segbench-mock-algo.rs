//! Stand-in segmentation algorithm for tests and demos.
//!
//! ```text
//! segbench-mock-algo [--labels DIR] [--sleep SECONDS] MODE INPUT OUTPUT_DIR
//! ```
//!
//! MODE is one of
//! - `identity`: writes the reference labels unchanged,
//! - `dilate`: grows every organ by one voxel (6-neighbourhood) into background,
//! - `crash`: exits with status 1 without writing anything,
//! - `hang`: never returns.
//!
//! The reference labels are `DIR/<case>.nii.gz` when `--labels` is given,
//! otherwise INPUT itself.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use segbench_core::profiler::case_id_from_path;
use segbench_core::volume::{load_volume, write_volume};
use segbench_core::LabelVolume;

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Identity,
    Dilate,
    Crash,
    Hang,
}

#[derive(Parser)]
struct Args {
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Sleep before doing anything.
    #[arg(long, default_value_t = 0.0)]
    sleep: f64,
    #[arg(value_enum)]
    mode: Mode,
    input: PathBuf,
    output_dir: PathBuf,
}

fn dilate(vol: &LabelVolume) -> Result<LabelVolume, Box<dyn std::error::Error>> {
    let [nx, ny, nz] = vol.dims();
    let src = vol.voxels();
    let mut out = src.to_vec();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = vol.linear_index([x, y, z]);
                if src[i] != 0 {
                    continue;
                }
                let mut neighbours = Vec::with_capacity(6);
                if x > 0 {
                    neighbours.push([x - 1, y, z]);
                }
                if x + 1 < nx {
                    neighbours.push([x + 1, y, z]);
                }
                if y > 0 {
                    neighbours.push([x, y - 1, z]);
                }
                if y + 1 < ny {
                    neighbours.push([x, y + 1, z]);
                }
                if z > 0 {
                    neighbours.push([x, y, z - 1]);
                }
                if z + 1 < nz {
                    neighbours.push([x, y, z + 1]);
                }
                // smallest neighbouring label wins
                if let Some(l) = neighbours.iter().map(|&p| vol.get(p)).filter(|&l| l != 0).min() {
                    out[i] = l;
                }
            }
        }
    }
    Ok(LabelVolume::new(vol.dims(), vol.spacing(), *vol.affine(), out)?)
}

fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    if args.sleep > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(args.sleep));
    }
    let case_id = case_id_from_path(&args.input).ok_or("cannot derive a case id from the input path")?;
    let reference: PathBuf = match &args.labels {
        Some(dir) => dir.join(format!("{case_id}.nii.gz")),
        None => args.input.clone(),
    };
    let output = args.output_dir.join(format!("{case_id}.nii.gz"));
    match args.mode {
        Mode::Crash => Err("crashing on purpose".into()),
        Mode::Hang => loop {
            std::thread::sleep(Duration::from_secs(1));
        },
        Mode::Identity => write(&load_volume(&reference)?, &output),
        Mode::Dilate => write(&dilate(&load_volume(&reference)?)?, &output),
    }
}

fn write(vol: &LabelVolume, path: &Path) -> Result<(), Box<dyn std::error::Error>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(write_volume(vol, path)?)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("segbench-mock-algo: {e}");
            ExitCode::FAILURE
        }
    }
}
