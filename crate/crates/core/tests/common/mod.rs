//! Independent oracles shared by the integration suites.

#![allow(dead_code)]

use gazehead_core::metrics::GazeLabel;
use ndarray::{Array2, ArrayView2};
use rand::Rng;

/// Dispersion of rows `a..b` recomputed from scratch: yaw spread over both
/// eyes plus pitch spread over both eyes.
pub fn dispersion(gaze: ArrayView2<'_, f64>, a: usize, b: usize) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in a..b {
        ys.push(gaze[[t, 0]]);
        xs.push(gaze[[t, 1]]);
        ys.push(gaze[[t, 2]]);
        xs.push(gaze[[t, 3]]);
    }
    let spread = |v: &[f64]| {
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    spread(&xs) + spread(&ys)
}

/// Maximal-window labeler: from each start, scan every candidate end and
/// keep the longest window whose dispersion stays within the threshold.
pub fn brute_force_idt(gaze: ArrayView2<'_, f64>, disp_max: f64, min_dur: usize) -> Vec<GazeLabel> {
    let n = gaze.nrows();
    let mut labels = vec![GazeLabel::Saccade; n];
    let mut i = 0;
    while i + min_dur <= n {
        let mut best = None;
        for end in i + min_dur..=n {
            if (i + 1..=end).all(|e| dispersion(gaze, i, e) <= disp_max) {
                best = Some(end);
            }
        }
        match best {
            Some(end) => {
                for l in &mut labels[i..end] {
                    *l = GazeLabel::Fixation;
                }
                i = end;
            }
            None => i += 1,
        }
    }
    labels
}

/// Gaze points whose pairwise dispersions land below, exactly on, and above
/// the default 3.5° threshold.
pub const ALPHABET: [[f64; 4]; 4] = [
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 2.0, 0.0, 2.0],
    [1.5, 0.0, 1.5, 0.0],
    [0.0, 4.0, 0.0, 4.0],
];

/// Sequence number `code` in base-`ALPHABET.len()` enumeration of length `t`.
pub fn alphabet_sequence(code: usize, t: usize) -> Array2<f64> {
    let mut out = Array2::zeros((t, 4));
    let mut c = code;
    for r in 0..t {
        let p = ALPHABET[c % ALPHABET.len()];
        c /= ALPHABET.len();
        for k in 0..4 {
            out[[r, k]] = p[k];
        }
    }
    out
}

/// Random gaze with fixation plateaus, small jitter and occasional jumps.
pub fn random_gaze(rng: &mut impl Rng, t: usize) -> Array2<f64> {
    let mut out = Array2::zeros((t, 4));
    let mut base = [0.0f64; 2];
    let jitter = rng.random_range(0.05..1.5);
    for r in 0..t {
        if rng.random_bool(0.12) {
            base = [rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0)];
        }
        for k in 0..4 {
            out[[r, k]] = base[k % 2] + rng.random_range(-jitter..jitter);
        }
    }
    out
}
