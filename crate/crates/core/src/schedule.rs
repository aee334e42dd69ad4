use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Width of the plateaus of the diminishing schedule.
pub const PLATEAU: u64 = 500;
/// Decay exponent of the diminishing schedule.
pub const DECAY: f64 = 0.6;

/// The step-size parameter sequence `{β_k}`, `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSchedule {
    Constant(f64),
    /// `β_k = ((⌈k/500⌉ − 1)·500 + 1)^(−0.6)`: piecewise constant on plateaus of 500.
    Diminishing,
    /// `β = ω_β/√k_max` for every iteration.
    Complexity { k_max: u64, omega_beta: f64 },
}

impl BetaSchedule {
    pub fn beta(&self, k: u64) -> f64 {
        match *self {
            BetaSchedule::Constant(b) => b,
            BetaSchedule::Diminishing => {
                let k = k.max(1);
                let plateau_start = (k.div_ceil(PLATEAU) - 1) * PLATEAU + 1;
                (plateau_start as f64).powf(-DECAY)
            }
            BetaSchedule::Complexity { k_max, omega_beta } => omega_beta / (k_max as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let ok = match *self {
            BetaSchedule::Constant(b) => b > 0.0 && b <= 1.0,
            BetaSchedule::Diminishing => true,
            BetaSchedule::Complexity { k_max, omega_beta } => {
                k_max > 0 && omega_beta > 0.0 && omega_beta / (k_max as f64).sqrt() <= 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("beta schedule {self} leaves (0, 1]")))
        }
    }
}

impl fmt::Display for BetaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSchedule::Constant(b) => write!(f, "const:{b}"),
            BetaSchedule::Diminishing => write!(f, "dimin"),
            BetaSchedule::Complexity { k_max, omega_beta } => write!(f, "complexity:{k_max}:{omega_beta}"),
        }
    }
}

impl FromStr for BetaSchedule {
    type Err = Error;

    /// Accepts `const:<v>`, `dimin` and `complexity:<k_max>:<omega_beta>`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::Config(format!("invalid beta schedule `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        let schedule = match parts.as_slice() {
            ["const", v] => BetaSchedule::Constant(v.parse().map_err(|_| bad())?),
            ["dimin"] | ["diminishing"] => BetaSchedule::Diminishing,
            ["complexity", k, w] => BetaSchedule::Complexity {
                k_max: k.parse().map_err(|_| bad())?,
                omega_beta: w.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}
