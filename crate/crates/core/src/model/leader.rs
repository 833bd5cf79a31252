use serde::{Deserialize, Serialize};

/// One acceleration segment on `[start, end)`, linear from `accel_start` to
/// `accel_end` (constant when the two are equal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSegment {
    pub start: f64,
    pub end: f64,
    pub accel_start: f64,
    pub accel_end: f64,
}

impl AccelSegment {
    pub fn constant(start: f64, end: f64, accel: f64) -> Self {
        Self {
            start,
            end,
            accel_start: accel,
            accel_end: accel,
        }
    }

    pub fn linear(start: f64, end: f64, accel_start: f64, accel_end: f64) -> Self {
        Self {
            start,
            end,
            accel_start,
            accel_end,
        }
    }

    fn accel_at(&self, t: f64) -> f64 {
        let frac = (t - self.start) / (self.end - self.start);
        self.accel_start + (self.accel_end - self.accel_start) * frac
    }

    /// Integral of the acceleration from `start` to `min(t, end)`.
    fn velocity_gain(&self, t: f64) -> f64 {
        if t <= self.start {
            return 0.0;
        }
        let u = t.min(self.end) - self.start;
        let slope = (self.accel_end - self.accel_start) / (self.end - self.start);
        self.accel_start * u + 0.5 * slope * u * u
    }
}

/// Lead-vehicle motion. The leader cruises at `initial_velocity` for `t <= 0`
/// and follows the acceleration segments afterwards; it is settled once the
/// last segment ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderProfile {
    pub initial_velocity: f64,
    #[serde(default)]
    pub segments: Vec<AccelSegment>,
}

impl LeaderProfile {
    /// Leader that is settled for all time.
    pub fn constant(velocity: f64) -> Self {
        Self {
            initial_velocity: velocity,
            segments: Vec::new(),
        }
    }

    pub fn with_segments(initial_velocity: f64, segments: Vec<AccelSegment>) -> Self {
        Self {
            initial_velocity,
            segments,
        }
    }

    pub fn accel(&self, t: f64) -> f64 {
        for seg in &self.segments {
            if t >= seg.start && t < seg.end {
                return seg.accel_at(t);
            }
        }
        0.0
    }

    pub fn velocity(&self, t: f64) -> f64 {
        let mut v = self.initial_velocity;
        for seg in &self.segments {
            v += seg.velocity_gain(t);
        }
        v
    }

    /// Time after which the acceleration is identically zero.
    pub fn settle_time(&self) -> f64 {
        self.segments.iter().map(|s| s.end).fold(0.0, f64::max)
    }

    pub fn terminal_velocity(&self) -> f64 {
        self.velocity(self.settle_time())
    }

    pub fn is_settled_at(&self, t: f64) -> bool {
        t >= self.settle_time()
    }

    /// Same acceleration pattern, shifted so the settled velocity is `velocity`.
    pub fn with_terminal_velocity(&self, velocity: f64) -> Self {
        let mut out = self.clone();
        if out.segments.is_empty() {
            out.initial_velocity = velocity;
        } else {
            out.initial_velocity += velocity - self.terminal_velocity();
        }
        out
    }

    /// Problems with the profile, empty when it is admissible.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.initial_velocity.is_finite() || self.initial_velocity <= 0.0 {
            out.push(format!(
                "leader initial velocity {} m/s must be positive and finite",
                self.initial_velocity
            ));
        }
        let mut last_end = 0.0;
        for (k, seg) in self.segments.iter().enumerate() {
            let finite = [seg.start, seg.end, seg.accel_start, seg.accel_end]
                .iter()
                .all(|x| x.is_finite());
            if !finite {
                out.push(format!("leader segment {k} does not settle (non-finite bounds or acceleration)"));
                continue;
            }
            if seg.start < last_end || seg.end <= seg.start {
                out.push(format!(
                    "leader segment {k} [{}, {}) must be non-empty, start at t >= 0 and follow the previous segment",
                    seg.start, seg.end
                ));
            }
            last_end = seg.end;
        }
        if out.is_empty() {
            let terminal = self.terminal_velocity();
            if !(terminal > 0.0 && terminal.is_finite()) {
                out.push(format!("leader terminal velocity {terminal} m/s must be positive"));
            }
        }
        out
    }
}
