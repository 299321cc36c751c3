//! Built-in scatterer layouts: the "close" set (three scatterers within a
//! couple of degrees of each other plus two outliers) stresses resolution,
//! the "far-apart" set is benign. Both pair with the default UE at
//! `(15*sqrt(3), 15)` m moving at `(0, 10)` m/s.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{ClockModel, Position2D, Scatterer, Scenario, UeState};

/// `(range m, angle deg)` pairs of the close-scatterer layout.
pub const CLOSE_SCATTERERS: [(f64, f64); 5] = [
    (19.9, -18.0),
    (20.9, -19.0),
    (20.3, -21.0),
    (2.1, -24.0),
    (7.8, 14.0),
];

/// `(range m, angle deg)` pairs of the far-apart layout.
pub const FAR_SCATTERERS: [(f64, f64); 5] = [
    (26.6, 11.0),
    (5.7, -23.0),
    (23.0, 57.0),
    (17.8, -16.0),
    (15.4, -6.0),
];

/// Default UE position, meters.
pub fn default_ue_position() -> [f64; 2] {
    [15.0 * 3.0f64.sqrt(), 15.0]
}

/// Default UE velocity, m/s.
pub const DEFAULT_UE_VELOCITY: [f64; 2] = [0.0, 10.0];

/// Default clock difference, seconds. Small enough that both preset
/// layouts stay within the cyclic prefix of every profile.
pub const DEFAULT_CLOCK_DIFFERENCE: f64 = 0.1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetKind {
    Close,
    Far,
}

impl PresetKind {
    pub fn label(self) -> &'static str {
        match self {
            PresetKind::Close => "close",
            PresetKind::Far => "far",
        }
    }

    pub fn scatterer_table(self) -> &'static [(f64, f64); 5] {
        match self {
            PresetKind::Close => &CLOSE_SCATTERERS,
            PresetKind::Far => &FAR_SCATTERERS,
        }
    }

    pub fn scatterers(self) -> Result<Vec<Scatterer<f64>>> {
        self.scatterer_table()
            .iter()
            .map(|&(r, deg)| Scatterer::new(r, deg.to_radians()))
            .collect()
    }

    /// Scenario with the preset layout and default UE/clock state.
    pub fn scenario(self) -> Result<Scenario<f64>> {
        let ue_pos = default_ue_position();
        Ok(Scenario {
            scatterers: self.scatterers()?,
            ue: UeState {
                position: Position2D::new(ue_pos[0], ue_pos[1]),
                velocity: DEFAULT_UE_VELOCITY,
            },
            clock: ClockModel::new(DEFAULT_CLOCK_DIFFERENCE)?,
            doppler_overrides: None,
        })
    }
}
