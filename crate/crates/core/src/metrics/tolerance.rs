use std::fmt::Write as _;
use std::path::Path;

use super::MetricsError;
use crate::volume::OrganId;

/// NSD boundary tolerance in millimetres for each of the 13 organs.
///
/// The text format is one `organ name: millimetres` pair per line, using the
/// organ names of [`OrganId::name`]. Blank lines and `#` comments are ignored.
/// Every organ must appear exactly once; unknown names are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct ToleranceTable {
    tau_mm: [f64; 13],
}

impl ToleranceTable {
    pub fn new(tau_mm: [f64; 13]) -> Result<Self, MetricsError> {
        for (organ, t) in OrganId::ALL.iter().zip(tau_mm) {
            if !t.is_finite() || t < 0.0 {
                return Err(MetricsError::Tolerance(format!("{organ}: {t} is not a finite value >= 0")));
            }
        }
        Ok(Self { tau_mm })
    }

    pub fn uniform(tau_mm: f64) -> Result<Self, MetricsError> {
        Self::new([tau_mm; 13])
    }

    pub fn get(&self, organ: OrganId) -> f64 {
        self.tau_mm[organ.index()]
    }

    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut slots: [Option<f64>; 13] = [None; 13];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| MetricsError::Tolerance(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| err(format!("expected 'organ: mm', got '{line}'")))?;
            let key = key.trim();
            let organ = OrganId::from_name(key).ok_or_else(|| err(format!("unknown organ '{key}'")))?;
            let value = value.trim();
            let tau: f64 = value
                .parse()
                .map_err(|_| err(format!("'{value}' is not a number")))?;
            if !tau.is_finite() || tau < 0.0 {
                return Err(err(format!("tolerance {tau} must be finite and >= 0")));
            }
            let slot = &mut slots[organ.index()];
            if slot.is_some() {
                return Err(err(format!("duplicate entry for '{key}'")));
            }
            *slot = Some(tau);
        }
        let mut tau_mm = [0.0; 13];
        for (organ, (slot, out)) in OrganId::ALL.iter().zip(slots.iter().zip(tau_mm.iter_mut())) {
            *out = slot.ok_or_else(|| MetricsError::Tolerance(format!("missing entry for '{organ}'")))?;
        }
        Self::new(tau_mm)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MetricsError::Tolerance(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for organ in OrganId::ALL {
            let _ = writeln!(out, "{}: {}", organ.name(), self.get(organ));
        }
        out
    }
}
