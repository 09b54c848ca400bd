use crate::error::{Error, Result};

/// Cubic ramp from 0 to `rho_f` over `total_rounds` rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsitySchedule {
    rho_f: f64,
    total_rounds: u32,
}

impl SparsitySchedule {
    pub fn new(rho_f: f64, total_rounds: u32) -> Result<Self> {
        if !(0.0..1.0).contains(&rho_f) {
            return Err(Error::input(format!("final sparsity {rho_f} not in [0, 1)")));
        }
        if total_rounds == 0 {
            return Err(Error::input("total rounds must be positive"));
        }
        Ok(Self {
            rho_f,
            total_rounds,
        })
    }

    pub fn rho_f(&self) -> f64 {
        self.rho_f
    }

    pub fn total_rounds(&self) -> u32 {
        self.total_rounds
    }

    /// `ρ_t = ρ_f + (t/T − 1)³ ρ_f` for `t ∈ [1, T]`.
    pub fn target(&self, t: u32) -> Result<f64> {
        if t == 0 || t > self.total_rounds {
            return Err(Error::input(format!(
                "round {t} outside [1, {}]",
                self.total_rounds
            )));
        }
        let x = t as f64 / self.total_rounds as f64 - 1.0;
        Ok(self.rho_f + x * x * x * self.rho_f)
    }
}

pub fn target_sparsity(schedule: &SparsitySchedule, t: u32) -> Result<f64> {
    schedule.target(t)
}
