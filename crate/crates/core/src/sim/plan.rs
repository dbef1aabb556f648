use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One machine, the whole graph.
    Single,
    /// Local training on subgraphs, fixed-length epochs, plain averaging.
    PsgdPa,
    /// Workers sample on the global graph, fetching remote features, and
    /// synchronize every iteration.
    Ggs,
    /// Growing local epochs, averaging, then server correction.
    Llcg,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Single, Strategy::PsgdPa, Strategy::Ggs, Strategy::Llcg];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Single => "single",
            Strategy::PsgdPa => "psgd_pa",
            Strategy::Ggs => "ggs",
            Strategy::Llcg => "llcg",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid("strategy", format!("unknown strategy `{s}`")))
    }
}

/// When to evaluate the (expensive) discrepancy estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KappaSchedule {
    #[default]
    Off,
    /// Rounds 1, R/2 and R.
    Checkpoints,
    Every,
}

impl KappaSchedule {
    pub fn includes(self, round: usize, rounds: usize) -> bool {
        match self {
            KappaSchedule::Off => false,
            KappaSchedule::Every => true,
            KappaSchedule::Checkpoints => round == 1 || round == (rounds / 2).max(1) || round == rounds,
        }
    }
}

/// Strategy plus every hyperparameter of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub strategy: Strategy,
    /// Machine count; must match the partition.
    pub machines: usize,
    pub rounds: usize,
    /// Base local epoch size.
    pub k: usize,
    /// Local epoch growth factor (LLCG only).
    pub rho: f64,
    /// Server correction steps per round (LLCG only).
    pub correction_steps: usize,
    /// Local learning rate.
    pub eta: f64,
    /// Server correction learning rate.
    pub gamma: f64,
    pub fanout: usize,
    pub local_batch: usize,
    pub server_batch: usize,
    /// Neighbor sampling for correction batches; `None` uses full neighbors.
    pub correction_fanout: Option<usize>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub kappa: KappaSchedule,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            strategy: Strategy::Llcg,
            machines: 4,
            rounds: 40,
            k: 8,
            rho: 1.1,
            correction_steps: 1,
            eta: DEFAULT_ETA,
            gamma: DEFAULT_ETA,
            fanout: 10,
            local_batch: 32,
            server_batch: 64,
            correction_fanout: None,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
            kappa: KappaSchedule::Off,
        }
    }
}

/// Local learning rate of the default plan, picked by a sweep on the default
/// dataset for the single-machine baseline.
pub const DEFAULT_ETA: f64 = 0.2;

/// Local iterations in round `r` (1-based): `max(1, ⌊K·ρ^r⌋)`.
pub fn epoch_size(k: usize, rho: f64, r: usize) -> usize {
    ((k as f64 * rho.powi(r as i32)).floor() as usize).max(1)
}

/// Fewest rounds whose epochs add up to at least `total` iterations.
pub fn rounds_for_budget(k: usize, rho: f64, total: usize) -> usize {
    let mut done = 0;
    let mut r = 0;
    while done < total {
        r += 1;
        done += epoch_size(k, rho, r);
    }
    r
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: usize| {
            if v == 0 {
                Err(Error::invalid(field, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("machines", self.machines)?;
        positive("rounds", self.rounds)?;
        positive("k", self.k)?;
        positive("fanout", self.fanout)?;
        positive("local_batch", self.local_batch)?;
        positive("server_batch", self.server_batch)?;
        if let Some(f) = self.correction_fanout {
            positive("correction_fanout", f)?;
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return Err(Error::invalid(
                "rho",
                format!("{} must be a finite value >= 1", self.rho),
            ));
        }
        for (field, lr) in [("eta", self.eta), ("gamma", self.gamma)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::invalid(
                    field,
                    format!("{lr} must be a finite non-negative rate"),
                ));
            }
        }
        Ok(())
    }

    /// Local iterations per worker in round `r` under this plan's strategy.
    pub fn local_iterations(&self, r: usize) -> usize {
        match self.strategy {
            Strategy::Llcg => epoch_size(self.k, self.rho, r),
            _ => self.k,
        }
    }

    /// Correction steps the server applies per round.
    pub fn server_steps(&self) -> usize {
        match self.strategy {
            Strategy::Llcg => self.correction_steps,
            _ => 0,
        }
    }
}
