//! Resource providers: where GPU-memory and CPU-utilisation readings come from.

use std::path::Path;

use super::{ProfilerError, ResourceSample, ResourceTrace};

/// A single instantaneous reading.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Reading {
    pub gpu_mb: f64,
    /// Percent of total machine CPU capacity (100 = every core busy).
    pub cpu_pct: f64,
}

/// Source of resource readings for a running process.
pub trait ResourceProvider: Send {
    /// Called once before each profiled run.
    fn reset(&mut self) {}

    /// Reading for process `pid` at `t` seconds after it started.
    fn sample(&mut self, pid: u32, t: f64) -> Reading;

    fn name(&self) -> &str;
}

/// Replays a piecewise-linear script of `(t, gpu_mb, cpu_pct)` breakpoints.
///
/// Values are interpolated linearly between breakpoints and held constant
/// before the first and after the last one. An empty script reports zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MockSampler {
    breakpoints: Vec<ResourceSample>,
}

impl MockSampler {
    pub fn new(breakpoints: Vec<ResourceSample>) -> Result<Self, ProfilerError> {
        for (i, b) in breakpoints.iter().enumerate() {
            if !(b.t.is_finite() && b.t >= 0.0) {
                return Err(ProfilerError::Config(format!("breakpoint {i}: bad time {}", b.t)));
            }
            if !(b.gpu_mb.is_finite() && b.gpu_mb >= 0.0 && b.cpu_pct.is_finite() && b.cpu_pct >= 0.0) {
                return Err(ProfilerError::Config(format!(
                    "breakpoint {i}: resource values must be finite and >= 0"
                )));
            }
            if i > 0 && b.t <= breakpoints[i - 1].t {
                return Err(ProfilerError::Config(format!(
                    "breakpoint {i}: times must be strictly increasing"
                )));
            }
        }
        Ok(Self { breakpoints })
    }

    /// A script holding one reading for the whole run.
    pub fn constant(gpu_mb: f64, cpu_pct: f64) -> Result<Self, ProfilerError> {
        Self::new(vec![ResourceSample {
            t: 0.0,
            gpu_mb,
            cpu_pct,
        }])
    }

    /// Parses CSV text with rows `t,gpu_mb,cpu_pct`; a header row is optional.
    pub fn parse(text: &str) -> Result<Self, ProfilerError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut breakpoints = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| ProfilerError::Config(format!("trace script: {e}")))?;
            if i == 0 && rec.get(0) == Some("t") {
                continue;
            }
            if rec.len() != 3 {
                return Err(ProfilerError::Config(format!(
                    "trace script row {}: expected 3 fields, got {}",
                    i + 1,
                    rec.len()
                )));
            }
            let num = |k: usize| -> Result<f64, ProfilerError> {
                rec[k].parse().map_err(|_| {
                    ProfilerError::Config(format!("trace script row {}: '{}' is not a number", i + 1, &rec[k]))
                })
            };
            breakpoints.push(ResourceSample {
                t: num(0)?,
                gpu_mb: num(1)?,
                cpu_pct: num(2)?,
            });
        }
        Self::new(breakpoints)
    }

    pub fn from_file(path: &Path) -> Result<Self, ProfilerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProfilerError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn value_at(&self, t: f64) -> Reading {
        let b = &self.breakpoints;
        let reading = |s: &ResourceSample| Reading {
            gpu_mb: s.gpu_mb,
            cpu_pct: s.cpu_pct,
        };
        match b.iter().position(|s| s.t > t) {
            None => b.last().map(reading).unwrap_or_default(),
            Some(0) => reading(&b[0]),
            Some(k) => {
                let (p, q) = (&b[k - 1], &b[k]);
                let w = (t - p.t) / (q.t - p.t);
                Reading {
                    gpu_mb: p.gpu_mb + w * (q.gpu_mb - p.gpu_mb),
                    cpu_pct: p.cpu_pct + w * (q.cpu_pct - p.cpu_pct),
                }
            }
        }
    }

    /// Trace obtained by sampling the script at `t = i * cadence` for every
    /// `t < elapsed`, without running anything.
    pub fn trace(&self, elapsed: f64, cadence: f64) -> Result<ResourceTrace, ProfilerError> {
        if !(cadence > 0.0 && cadence.is_finite()) || !(elapsed >= 0.0 && elapsed.is_finite()) {
            return Err(ProfilerError::Config(format!(
                "invalid replay window: elapsed {elapsed}, cadence {cadence}"
            )));
        }
        let mut samples = Vec::new();
        let mut i = 0u64;
        loop {
            let t = i as f64 * cadence;
            if t >= elapsed {
                break;
            }
            let r = self.value_at(t);
            samples.push(ResourceSample {
                t,
                gpu_mb: r.gpu_mb,
                cpu_pct: r.cpu_pct,
            });
            i += 1;
        }
        ResourceTrace::new(samples, cadence, elapsed)
    }
}

impl ResourceProvider for MockSampler {
    fn sample(&mut self, _pid: u32, t: f64) -> Reading {
        self.value_at(t)
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Samples a live process tree on Linux.
///
/// CPU utilisation is the change in user+system time of the process and all
/// its descendants divided by wall time and core count. GPU memory is the
/// used memory of the first device reported by `nvidia-smi`, or 0 when no
/// NVIDIA tooling is present.
#[derive(Debug)]
pub struct ProcSampler {
    ticks_per_second: f64,
    cores: f64,
    gpu_query: bool,
    last: Option<(f64, f64)>,
}

impl ProcSampler {
    pub fn new() -> Self {
        // SAFETY: sysconf has no preconditions.
        let ticks = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
        let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let gpu_query = query_gpu_memory().is_some();
        if !gpu_query {
            log::info!("nvidia-smi unavailable; GPU memory will be reported as 0 MB");
        }
        Self {
            ticks_per_second: if ticks > 0 { ticks as f64 } else { 100.0 },
            cores: cores as f64,
            gpu_query,
            last: None,
        }
    }

    fn cpu_seconds(&self, root: u32) -> Option<f64> {
        let mut total_ticks = 0u64;
        let mut found_root = false;
        let mut stats = Vec::new();
        for entry in std::fs::read_dir("/proc").ok()?.flatten() {
            let Some(pid) = entry.file_name().to_str().and_then(|s| s.parse::<u32>().ok()) else {
                continue;
            };
            if let Some(stat) = read_stat(pid) {
                stats.push((pid, stat));
            }
        }
        // walk the tree rooted at `root`
        let mut frontier = vec![root];
        while let Some(p) = frontier.pop() {
            for (pid, stat) in &stats {
                if *pid == p {
                    found_root |= p == root;
                    total_ticks += stat.busy_ticks;
                    if p == root {
                        total_ticks += stat.child_ticks;
                    }
                }
                if stat.ppid == p {
                    frontier.push(*pid);
                }
            }
        }
        found_root.then(|| total_ticks as f64 / self.ticks_per_second)
    }
}

impl Default for ProcSampler {
    fn default() -> Self {
        Self::new()
    }
}

struct ProcStat {
    ppid: u32,
    busy_ticks: u64,
    child_ticks: u64,
}

fn read_stat(pid: u32) -> Option<ProcStat> {
    let text = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // the command name may contain spaces; fields resume after the last ')'
    let rest = &text[text.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let num = |i: usize| fields.get(i)?.parse::<u64>().ok();
    Some(ProcStat {
        ppid: num(1)? as u32,
        busy_ticks: num(11)? + num(12)?,
        child_ticks: num(13)? + num(14)?,
    })
}

fn query_gpu_memory() -> Option<f64> {
    let out = std::process::Command::new("nvidia-smi")
        .args(["--query-gpu=memory.used", "--format=csv,noheader,nounits"])
        .stderr(std::process::Stdio::null())
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    String::from_utf8_lossy(&out.stdout).lines().next()?.trim().parse().ok()
}

impl ResourceProvider for ProcSampler {
    fn reset(&mut self) {
        self.last = None;
    }

    fn sample(&mut self, pid: u32, t: f64) -> Reading {
        let gpu_mb = if self.gpu_query {
            query_gpu_memory().unwrap_or(0.0)
        } else {
            0.0
        };
        let cpu_pct = match self.cpu_seconds(pid) {
            Some(cpu) => {
                let pct = match self.last {
                    Some((t0, c0)) if t > t0 => ((cpu - c0) / (t - t0) / self.cores * 100.0).max(0.0),
                    _ => 0.0,
                };
                self.last = Some((t, cpu));
                pct
            }
            None => 0.0,
        };
        Reading { gpu_mb, cpu_pct }
    }

    fn name(&self) -> &str {
        "proc"
    }
}
