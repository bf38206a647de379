use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GripperState {
    Open,
    Engaged,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperGeometry {
    /// Distance between the two guide tips.
    pub tip_separation: f64,
    /// Depth below the guide mouth at which the cable reaches the core.
    pub engage_depth: f64,
    /// Extra ascent after engagement that closes the core.
    pub closure_stroke: f64,
    pub roll_tolerance_deg: f64,
    /// Height of the guide mouth above the drone reference point.
    pub mouth_height: f64,
    /// Half-width of the channel at the bottom of the guides.
    pub core_half_width: f64,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        Self {
            tip_separation: 0.45,
            engage_depth: 0.20,
            closure_stroke: 0.10,
            roll_tolerance_deg: 15.0,
            mouth_height: 0.40,
            core_half_width: 0.02,
        }
    }
}

impl GripperGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.tip_separation > 0.0 && self.engage_depth > 0.0 && self.closure_stroke > 0.0) {
            return Err(SimError::Config("gripper dimensions must be positive".into()));
        }
        if !(self.core_half_width >= 0.0 && self.core_half_width < self.max_misalignment()) {
            return Err(SimError::Config("core_half_width must be below half the tip separation".into()));
        }
        Ok(())
    }

    /// Largest lateral error the guides can still funnel onto the core.
    pub fn max_misalignment(&self) -> f64 {
        0.5 * self.tip_separation
    }

    /// Half-width of the guide channel at `depth` below the mouth.
    pub fn guide_half_width(&self, depth: f64) -> f64 {
        if depth <= 0.0 {
            return self.max_misalignment();
        }
        let f = (depth / self.engage_depth).min(1.0);
        self.max_misalignment() * (1.0 - f) + self.core_half_width * f
    }

    /// Drone reference point below the cable once the core is closed.
    pub fn closed_offset(&self) -> f64 {
        self.mouth_height - self.engage_depth - self.closure_stroke
    }
}

/// Cable position relative to the gripper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismInput {
    pub lateral_error: f64,
    /// Cable height minus guide-mouth height; negative once the cable is
    /// inside the guides.
    pub vertical_offset: f64,
    pub vertical_velocity: f64,
    pub roll_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperMechanism {
    pub state: GripperState,
    /// Cable entered between the guides through the mouth.
    pub in_guides: bool,
    last_depth: Option<f64>,
}

impl Default for GripperMechanism {
    fn default() -> Self {
        Self { state: GripperState::Open, in_guides: false, last_depth: None }
    }
}

impl GripperMechanism {
    pub fn closed() -> Self {
        Self { state: GripperState::Closed, in_guides: true, last_depth: None }
    }

    /// Passive opening once the magnetic hold has been released.
    pub fn release(&mut self) {
        self.state = GripperState::Open;
        self.in_guides = false;
        self.last_depth = None;
    }
}

/// Passive mechanism update. The cable can only enter the guides through the
/// mouth while ascending and within the misalignment and roll envelope.
pub fn update_mechanism(m: &GripperMechanism, geom: &GripperGeometry, input: &MechanismInput) -> GripperMechanism {
    let mut n = *m;
    let depth = -input.vertical_offset;
    if m.state == GripperState::Closed {
        n.last_depth = Some(depth);
        return n;
    }
    if !m.in_guides {
        let crossed = matches!(m.last_depth, Some(d) if d < 0.0) && depth >= 0.0;
        let inside_envelope = input.lateral_error.abs() <= geom.max_misalignment()
            && input.roll_deg.abs() <= geom.roll_tolerance_deg;
        if crossed && inside_envelope && input.vertical_velocity > 0.0 {
            n.in_guides = true;
        }
    } else if depth < 0.0 {
        n.in_guides = false;
    }
    n.state = if !n.in_guides {
        GripperState::Open
    } else if depth >= geom.engage_depth + geom.closure_stroke {
        GripperState::Closed
    } else if depth >= geom.engage_depth {
        GripperState::Engaged
    } else {
        GripperState::Open
    };
    n.last_depth = Some(depth);
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ascend(lateral: f64, ascent: f64) -> GripperMechanism {
        let g = GripperGeometry::default();
        let mut m = GripperMechanism::default();
        let start = 0.1;
        let steps = 1000;
        for i in 0..=steps {
            let off = start - (start + ascent) * i as f64 / steps as f64;
            m = update_mechanism(
                &m,
                &g,
                &MechanismInput { lateral_error: lateral, vertical_offset: off, vertical_velocity: 0.5, roll_deg: 0.0 },
            );
        }
        m
    }

    #[test]
    fn centred_ascent_closes() {
        assert_eq!(ascend(0.0, 0.30).state, GripperState::Closed);
        assert_eq!(ascend(0.0, 0.25).state, GripperState::Engaged);
        assert_eq!(ascend(0.0, 0.10).state, GripperState::Open);
    }

    #[test]
    fn outside_envelope_never_closes() {
        assert_eq!(ascend(0.30, 1.0).state, GripperState::Open);
        assert_eq!(ascend(0.226, 1.0).state, GripperState::Open);
        assert_eq!(ascend(0.225, 0.30).state, GripperState::Closed);
    }

    #[test]
    fn descending_through_mouth_does_nothing() {
        let g = GripperGeometry::default();
        let mut m = GripperMechanism::default();
        for off in [0.1, -0.05, -0.3] {
            m = update_mechanism(
                &m,
                &g,
                &MechanismInput { lateral_error: 0.0, vertical_offset: off, vertical_velocity: -0.5, roll_deg: 0.0 },
            );
        }
        assert_eq!(m.state, GripperState::Open);
        assert!(!m.in_guides);
    }

    #[test]
    fn guide_narrows_to_core() {
        let g = GripperGeometry::default();
        assert_eq!(g.guide_half_width(-1.0), 0.225);
        assert!((g.guide_half_width(0.2) - 0.02).abs() < 1e-12);
        assert!(g.guide_half_width(0.1) < 0.225);
    }
}
