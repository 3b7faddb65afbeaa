//! Profiled execution of segmentation algorithms.
//!
//! An algorithm is an external command invoked as
//! `<program> [args...] <case-input> <output-dir>`. It must write
//! `<case-id>.nii.gz` into the output directory and exit with status 0, where
//! the case id is the input file name without its `.nii`/`.nii.gz` suffix.
//!
//! While the process runs, a background thread samples GPU memory and CPU
//! utilisation at a nominal 0.1 s cadence. Traces are reduced with the
//! rectangle rule using the actual sample spacing:
//!
//! ```text
//! AUC_GPU = Σ max(0, gpu_mb_i - 2048) · Δt_i      (MB·s)
//! AUC_CPU = Σ cpu_pct_i · Δt_i                     (%·s)
//! ```
//!
//! where `Δt_i` runs to the next sample and the last sample extends to the end
//! of the run. Runs exceeding the timeout are killed and receive the fixed
//! stuck-run penalties. Only one profiled process is alive at any time.

mod sampler;

use std::fmt::Write as _;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sampler::{MockSampler, ProcSampler, Reading, ResourceProvider};

pub const NOMINAL_CADENCE_S: f64 = 0.1;
pub const DEFAULT_TIMEOUT_S: f64 = 3600.0;
/// GPU memory below this level is free of charge.
pub const GPU_TOLERANCE_MB: f64 = 2048.0;

pub const STUCK_TIME_S: f64 = 3600.0;
/// One hour on a 10 GB card, minus the tolerance: 3600 · (1024·10 − 2048).
pub const STUCK_AUC_GPU: f64 = 3600.0 * (1024.0 * 10.0 - GPU_TOLERANCE_MB);
/// One hour at full CPU utilisation: 3600 · 100.
pub const STUCK_AUC_CPU: f64 = 3600.0 * 100.0;

const EXIT_POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Error)]
pub enum ProfilerError {
    #[error("failed to launch {program}: {source}")]
    Launch {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("profiler configuration: {0}")]
    Config(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    /// Seconds since process start.
    pub t: f64,
    pub gpu_mb: f64,
    pub cpu_pct: f64,
}

/// Ordered resource samples of one run plus its wall-clock duration.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceTrace {
    samples: Vec<ResourceSample>,
    cadence: f64,
    elapsed: f64,
}

impl ResourceTrace {
    pub fn new(samples: Vec<ResourceSample>, cadence: f64, elapsed: f64) -> Result<Self, ProfilerError> {
        if !(cadence > 0.0 && cadence.is_finite()) {
            return Err(ProfilerError::Trace(format!("cadence {cadence} must be > 0")));
        }
        if !(elapsed >= 0.0 && elapsed.is_finite()) {
            return Err(ProfilerError::Trace(format!("elapsed {elapsed} must be >= 0")));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t >= 0.0 && s.t.is_finite()) || (i > 0 && s.t <= samples[i - 1].t) {
                return Err(ProfilerError::Trace(format!(
                    "sample {i}: times must be non-negative and strictly increasing"
                )));
            }
            if !(s.gpu_mb >= 0.0 && s.cpu_pct >= 0.0 && s.gpu_mb.is_finite() && s.cpu_pct.is_finite()) {
                return Err(ProfilerError::Trace(format!("sample {i}: negative or non-finite reading")));
            }
        }
        if let Some(last) = samples.last() {
            if last.t > elapsed {
                return Err(ProfilerError::Trace(format!(
                    "last sample at {} s is after the end of the run ({elapsed} s)",
                    last.t
                )));
            }
        }
        Ok(Self {
            samples,
            cadence,
            elapsed,
        })
    }

    pub fn samples(&self) -> &[ResourceSample] {
        &self.samples
    }

    pub fn cadence(&self) -> f64 {
        self.cadence
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// `other` appended after this trace, its clock shifted by `self.elapsed`.
    pub fn concat(&self, other: &ResourceTrace) -> Result<ResourceTrace, ProfilerError> {
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().map(|s| ResourceSample {
            t: s.t + self.elapsed,
            ..*s
        }));
        ResourceTrace::new(samples, self.cadence, self.elapsed + other.elapsed)
    }

    fn integrate(&self, f: impl Fn(&ResourceSample) -> f64) -> Integral {
        let n = self.samples.len();
        let value = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let end = if i + 1 < n { self.samples[i + 1].t } else { self.elapsed };
                f(s) * (end - s.t)
            })
            .sum();
        Integral {
            value,
            empty_trace: n == 0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,gpu_mb,cpu_pct\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.t, s.gpu_mb, s.cpu_pct);
        }
        out
    }

    pub fn from_csv(text: &str, cadence: f64, elapsed: f64) -> Result<Self, ProfilerError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut samples = Vec::new();
        for rec in rdr.deserialize::<ResourceSample>() {
            samples.push(rec.map_err(|e| ProfilerError::Trace(e.to_string()))?);
        }
        Self::new(samples, cadence, elapsed)
    }
}

/// A reduced area-under-curve value; `empty_trace` flags a trace without
/// samples, for which the value is 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub empty_trace: bool,
}

/// GPU memory above the 2048 MB tolerance integrated over time, in MB·s.
pub fn auc_gpu(trace: &ResourceTrace) -> Integral {
    trace.integrate(|s| (s.gpu_mb - GPU_TOLERANCE_MB).max(0.0))
}

/// CPU utilisation integrated over time, in %·s.
pub fn auc_cpu(trace: &ResourceTrace) -> Integral {
    trace.integrate(|s| s.cpu_pct)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Stuck,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Stuck => "stuck",
            RunStatus::Failed => "failed",
        }
    }
}

/// Scalar outcome of a run, without the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub time_s: f64,
    pub auc_gpu: f64,
    pub auc_cpu: f64,
    pub exit_code: Option<i32>,
    /// The trace had no samples, so both AUC values are 0 by default.
    pub empty_trace: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub status: RunStatus,
    pub time_s: f64,
    pub auc_gpu: f64,
    pub auc_cpu: f64,
    pub exit_code: Option<i32>,
    pub empty_trace: bool,
    pub trace: ResourceTrace,
}

impl RunResult {
    /// Reduces a trace. Stuck runs carry the penalty triple regardless of
    /// what was measured.
    pub fn from_trace(status: RunStatus, trace: ResourceTrace, exit_code: Option<i32>) -> Self {
        let gpu = auc_gpu(&trace);
        let cpu = auc_cpu(&trace);
        let (time_s, auc_gpu, auc_cpu) = match status {
            RunStatus::Stuck => (STUCK_TIME_S, STUCK_AUC_GPU, STUCK_AUC_CPU),
            _ => (trace.elapsed(), gpu.value, cpu.value),
        };
        Self {
            status,
            time_s,
            auc_gpu,
            auc_cpu,
            exit_code,
            empty_trace: gpu.empty_trace,
            trace,
        }
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            status: self.status,
            time_s: self.time_s,
            auc_gpu: self.auc_gpu,
            auc_cpu: self.auc_cpu,
            exit_code: self.exit_code,
            empty_trace: self.empty_trace,
        }
    }
}

/// How to launch an algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Extra environment variables.
    #[serde(default)]
    pub env: Vec<(String, String)>,
    /// Pass the harness environment through to the algorithm.
    #[serde(default = "default_true")]
    pub inherit_env: bool,
}

fn default_true() -> bool {
    true
}

impl Invocation {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
            env: Vec::new(),
            inherit_env: true,
        }
    }

    pub fn command_line(&self) -> Vec<String> {
        std::iter::once(self.program.clone())
            .chain(self.args.iter().cloned())
            .collect()
    }
}

/// Case id of an input path: the file name without `.nii.gz` / `.nii`.
pub fn case_id_from_path(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    let stem = name
        .strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .unwrap_or(name);
    (!stem.is_empty()).then(|| stem.to_string())
}

static RUN_LOCK: Mutex<()> = Mutex::new(());
static ACTIVE_RUNS: AtomicUsize = AtomicUsize::new(0);

/// Number of profiled processes currently alive (0 or 1).
pub fn active_runs() -> usize {
    ACTIVE_RUNS.load(Ordering::SeqCst)
}

struct ActiveGuard;

impl ActiveGuard {
    fn enter() -> Self {
        let before = ACTIVE_RUNS.fetch_add(1, Ordering::SeqCst);
        assert_eq!(before, 0, "two profiled runs alive at once");
        ActiveGuard
    }
}

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        ACTIVE_RUNS.fetch_sub(1, Ordering::SeqCst);
    }
}

fn kill_group(pgid: u32) {
    // SAFETY: kill(2) with a negative pid signals the process group.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

/// Runs one case of an algorithm under the resource sampler.
///
/// The process is placed in its own process group, which is killed on
/// timeout and after exit so no descendants outlive the run. A global lock
/// serialises concurrent callers. `log_file`, when given, receives the
/// process's stdout and stderr.
pub fn run_and_profile(
    invocation: &Invocation,
    case_input: &Path,
    output_dir: &Path,
    timeout_s: f64,
    sampler: &mut dyn ResourceProvider,
    log_file: Option<&Path>,
) -> Result<RunResult, ProfilerError> {
    if !(timeout_s > 0.0 && timeout_s.is_finite()) {
        return Err(ProfilerError::Config(format!("timeout {timeout_s} must be > 0")));
    }
    let case_id = case_id_from_path(case_input).ok_or_else(|| {
        ProfilerError::Config(format!("cannot derive a case id from {}", case_input.display()))
    })?;
    std::fs::create_dir_all(output_dir).map_err(|source| ProfilerError::Io {
        path: output_dir.to_path_buf(),
        source,
    })?;
    let expected_output = output_dir.join(format!("{case_id}.nii.gz"));

    let mut cmd = Command::new(&invocation.program);
    cmd.args(&invocation.args)
        .arg(case_input)
        .arg(output_dir)
        .stdin(Stdio::null())
        .process_group(0);
    if !invocation.inherit_env {
        cmd.env_clear();
    }
    cmd.envs(invocation.env.iter().map(|(k, v)| (k, v)));
    match log_file {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|source| ProfilerError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let f2 = f.try_clone().map_err(|source| ProfilerError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            cmd.stdout(f).stderr(f2);
        }
        None => {
            cmd.stdout(Stdio::null()).stderr(Stdio::null());
        }
    }

    let _lock = RUN_LOCK.lock().unwrap_or_else(|p| p.into_inner());
    sampler.reset();
    log::info!("run lock acquired: {} on case {case_id}", invocation.program);

    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|source| ProfilerError::Launch {
        program: invocation.program.clone(),
        source,
    })?;
    let _active = ActiveGuard::enter();
    let pid = child.id();
    let timeout = Duration::from_secs_f64(timeout_s);
    let stop = AtomicBool::new(false);

    let (outcome, elapsed, mut samples) = std::thread::scope(|scope| {
        let sampling = scope.spawn(|| {
            let mut samples: Vec<ResourceSample> = Vec::new();
            let mut tick = 0u64;
            while !stop.load(Ordering::Acquire) {
                let t = start.elapsed().as_secs_f64();
                let r = sampler.sample(pid, t);
                if samples.last().is_none_or(|s| t > s.t) {
                    samples.push(ResourceSample {
                        t,
                        gpu_mb: r.gpu_mb.max(0.0),
                        cpu_pct: r.cpu_pct.max(0.0),
                    });
                }
                tick += 1;
                let next = Duration::from_secs_f64(tick as f64 * NOMINAL_CADENCE_S);
                while !stop.load(Ordering::Acquire) {
                    let now = start.elapsed();
                    if now >= next {
                        break;
                    }
                    std::thread::sleep((next - now).min(EXIT_POLL));
                }
            }
            samples
        });

        let outcome = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Ok(Some(status)),
                Ok(None) => {}
                Err(e) => break Err(e),
            }
            if start.elapsed() >= timeout {
                break Ok(None);
            }
            std::thread::sleep(EXIT_POLL);
        };
        let elapsed = start.elapsed().as_secs_f64();
        kill_group(pid);
        if matches!(outcome, Ok(None) | Err(_)) {
            let _ = child.kill();
            let _ = child.wait();
        }
        stop.store(true, Ordering::Release);
        let samples = sampling.join().expect("sampler thread panicked");
        (outcome, elapsed, samples)
    });

    samples.retain(|s| s.t <= elapsed);
    let trace = ResourceTrace::new(samples, NOMINAL_CADENCE_S, elapsed)?;
    let (status, exit_code) = match outcome {
        Ok(None) => {
            log::warn!("case {case_id}: timed out after {timeout_s} s");
            (RunStatus::Stuck, None)
        }
        Ok(Some(st)) if !st.success() => (RunStatus::Failed, st.code()),
        Ok(Some(st)) if !expected_output.is_file() => {
            log::warn!("case {case_id}: {} was not written", expected_output.display());
            (RunStatus::Failed, st.code())
        }
        Ok(Some(st)) => (RunStatus::Completed, st.code()),
        Err(e) => {
            log::warn!("case {case_id}: wait failed: {e}");
            (RunStatus::Failed, None)
        }
    };
    Ok(RunResult::from_trace(status, trace, exit_code))
}
