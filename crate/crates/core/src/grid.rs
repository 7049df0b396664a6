use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::process::{CorrelationMatrix, GbmParams};

/// One microgrid: its critical demand and its generation dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridSpec {
    pub label: String,
    /// Critical demand to be met at the horizon, kW.
    pub demand: f64,
    pub gbm: GbmParams,
}

impl MicrogridSpec {
    pub fn new(label: impl Into<String>, demand: f64, gbm: GbmParams) -> Result<Self> {
        if !(demand > 0.0) || !demand.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "demand must be positive, got {demand}"
            )));
        }
        Ok(Self {
            label: label.into(),
            demand,
            gbm,
        })
    }
}

/// The microgrids served by one operator, their generation correlation,
/// and the power of one battery unit.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEnsemble {
    microgrids: Vec<MicrogridSpec>,
    corr: CorrelationMatrix,
    battery_unit: f64,
}

impl GridEnsemble {
    pub fn new(
        microgrids: Vec<MicrogridSpec>,
        corr: CorrelationMatrix,
        battery_unit: f64,
    ) -> Result<Self> {
        if microgrids.is_empty() {
            return Err(Error::InvalidArgument("no microgrids".into()));
        }
        if corr.dim() != microgrids.len() {
            return Err(Error::LengthMismatch {
                expected: microgrids.len(),
                found: corr.dim(),
            });
        }
        if !(battery_unit > 0.0) || !battery_unit.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "battery unit power must be positive, got {battery_unit}"
            )));
        }
        Ok(Self {
            microgrids,
            corr,
            battery_unit,
        })
    }

    /// The two-microgrid system used throughout the case studies:
    /// μ = (0.006, 0.005), σ = (0.03, 0.04), ρ = 0.6, D = (20, 25) kW, P_b = 1 kW.
    pub fn reference_pair() -> Self {
        let mg = |label: &str, d, mu, sigma| {
            MicrogridSpec::new(label, d, GbmParams::new(mu, sigma).expect("valid"))
                .expect("valid")
        };
        Self::new(
            alloc::vec![mg("mg1", 20.0, 0.006, 0.03), mg("mg2", 25.0, 0.005, 0.04)],
            CorrelationMatrix::pair(0.6).expect("valid"),
            1.0,
        )
        .expect("valid")
    }

    pub fn len(&self) -> usize {
        self.microgrids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.microgrids.is_empty()
    }

    pub fn microgrids(&self) -> &[MicrogridSpec] {
        &self.microgrids
    }

    pub fn correlation(&self) -> &CorrelationMatrix {
        &self.corr
    }

    pub fn battery_unit(&self) -> f64 {
        self.battery_unit
    }

    pub fn params(&self) -> Vec<GbmParams> {
        self.microgrids.iter().map(|m| m.gbm).collect()
    }

    pub fn demands(&self) -> Vec<f64> {
        self.microgrids.iter().map(|m| m.demand).collect()
    }

    pub fn check_state(&self, generation: &[f64]) -> Result<()> {
        if generation.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: generation.len(),
            });
        }
        if let Some(&g) = generation.iter().find(|&&g| !(g > 0.0)) {
            return Err(Error::NonPositiveGeneration(g));
        }
        Ok(())
    }
}
