//! Data of the reference experiments: the Gaussian peak initial state and
//! the circling Gaussian pulse used as desired state.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::Discretization;
use crate::trajectory::{TimeGrid, Trajectory};

/// `exp(−20 r²)` with `r` the distance to the centre of the square.
pub fn gaussian_peak(x: f64, y: f64) -> f64 {
    let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
    (-20.0 * r2).exp()
}

/// Analytic Laplacian of [`gaussian_peak`]: `(1600 r² − 80) exp(−20 r²)`.
pub fn gaussian_peak_laplacian(x: f64, y: f64) -> f64 {
    let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
    (1600.0 * r2 - 80.0) * (-20.0 * r2).exp()
}

/// Centre of the desired pulse: a counter-clockwise circle of radius ¼
/// around (½, ½), starting at (¾, ½).
pub fn pulse_centre(t: f64) -> (f64, f64) {
    (0.5 + 0.25 * (2.0 * PI * t).cos(), 0.5 + 0.25 * (2.0 * PI * t).sin())
}

pub fn moving_pulse(t: f64, x: f64, y: f64) -> f64 {
    let (cx, cy) = pulse_centre(t);
    (-20.0 * ((x - cx).powi(2) + (y - cy).powi(2))).exp()
}

/// Smooth random space-time field vanishing on the boundary: a seeded
/// combination of `sin(aπx) sin(bπy)` modes (`a, b ≤ 3`) with random
/// low-frequency time profiles. The same seed gives the same continuous
/// field on every grid.
pub fn random_modal_field(grid: TimeGrid, disc: &Discretization, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, [f64; 4])> = (1..=3)
        .flat_map(|a| (1..=3).map(move |b| (a as f64, b as f64)))
        .map(|(a, b)| (a, b, std::array::from_fn(|_| rng.gen_range(-1.0..1.0))))
        .collect();
    let horizon = grid.horizon();
    Trajectory::interpolate(grid, disc, |t, x, y| {
        let s = t / horizon;
        modes
            .iter()
            .map(|(a, b, c)| {
                let profile = c[0] + c[1] * (PI * s).cos() + c[2] * (2.0 * PI * s).sin() + c[3] * s * s;
                profile * (a * PI * x).sin() * (b * PI * y).sin() / (a * b)
            })
            .sum()
    })
}
