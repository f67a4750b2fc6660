use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// One regression task `y = amplitude * sin(x + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidTask {
    pub amplitude: f64,
    pub phase: f64,
    pub points: Vec<Point>,
}

impl SinusoidTask {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (x + self.phase).sin()
    }
}

/// `num_tasks` sinusoids with amplitude and phase uniform in the given
/// ranges and `points_per_task` inputs uniform in `[-5, 5]`.
pub fn sinusoid_family(
    amplitude_range: (f64, f64),
    phase_range: (f64, f64),
    num_tasks: usize,
    points_per_task: usize,
    seed: u64,
) -> Result<Vec<SinusoidTask>> {
    for (name, (lo, hi)) in [("amplitude", amplitude_range), ("phase", phase_range)] {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("empty {name} range [{lo}, {hi}]")));
        }
    }
    let root = Stream::new(seed, "sinusoid");
    Ok((0..num_tasks)
        .map(|t| {
            let mut rng = root.derive_index("task", t as u64);
            let amplitude = rng.uniform(amplitude_range.0, amplitude_range.1);
            let phase = rng.uniform(phase_range.0, phase_range.1);
            let points = (0..points_per_task)
                .map(|_| {
                    let x = rng.uniform(-5.0, 5.0);
                    Point {
                        x,
                        y: amplitude * (x + phase).sin(),
                    }
                })
                .collect();
            SinusoidTask {
                amplitude,
                phase,
                points,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    #[test]
    fn reference_values() {
        let t = SinusoidTask {
            amplitude: 1.0,
            phase: 0.0,
            points: vec![],
        };
        assert_eq!(t.eval(0.0), 0.0);
        let t = SinusoidTask {
            amplitude: 2.0,
            phase: FRAC_PI_2,
            points: vec![],
        };
        assert!((t.eval(0.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_and_in_range() {
        let a = sinusoid_family((0.1, 5.0), (0.0, std::f64::consts::PI), 8, 10, 42).unwrap();
        assert_eq!(a, sinusoid_family((0.1, 5.0), (0.0, std::f64::consts::PI), 8, 10, 42).unwrap());
        for t in &a {
            assert!((0.1..5.0).contains(&t.amplitude));
            for p in &t.points {
                assert!((-5.0..5.0).contains(&p.x));
                assert!((p.y - t.eval(p.x)).abs() < 1e-15);
            }
        }
        assert!(sinusoid_family((2.0, 1.0), (0.0, 1.0), 1, 1, 0).is_err());
    }
}
