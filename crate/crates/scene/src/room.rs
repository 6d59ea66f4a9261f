//! Shoebox rooms and image-source impulse responses.

use std::f64::consts::{LN_10, PI};

use headsteer_core::array::{distance, Position};
use serde::{Deserialize, Serialize};

use crate::error::{geometry, invalid, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
/// Taps of the windowed-sinc fractional delay.
pub const FRACTIONAL_DELAY_TAPS: usize = 8;

/// Wall absorption, either from a reverberation-time target (Sabine, the same
/// on every wall) or per wall in the order `x0, x1, y0, y1, z0, z1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absorption {
    T60(f64),
    Coefficients([f64; 6]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dims: Position,
    pub absorption: Absorption,
    pub max_image_order: usize,
    pub speed_of_sound: f64,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(geometry(format!("room dimensions {:?} must be positive", self.dims)));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(invalid("speed of sound must be positive"));
        }
        match self.absorption {
            Absorption::T60(t) if !(t >= 0.0) || !t.is_finite() => {
                Err(invalid(format!("T60 must be non-negative, got {t}")))
            }
            Absorption::Coefficients(a) if a.iter().any(|&v| !(0.0..=1.0).contains(&v)) => {
                Err(invalid("absorption coefficients must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Pressure reflection coefficients `sqrt(1 - alpha)` per wall.
    pub fn reflection_coefficients(&self) -> Result<[f64; 6]> {
        self.validate()?;
        let alpha = match self.absorption {
            Absorption::T60(t) if t == 0.0 => [1.0; 6],
            Absorption::T60(t) => [sabine_absorption(self.volume(), self.surface(), t, self.speed_of_sound)?; 6],
            Absorption::Coefficients(a) => a,
        };
        Ok(alpha.map(|a| (1.0 - a).max(0.0).sqrt()))
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.iter().zip(&self.dims).all(|(&x, &l)| x > 0.0 && x < l)
    }

    /// Image order whose shortest reflection path just exceeds `seconds`.
    pub fn order_for_duration(&self, seconds: f64) -> usize {
        let min_dim = self.dims.iter().cloned().fold(f64::INFINITY, f64::min);
        (self.speed_of_sound * seconds / min_dim).ceil() as usize + 1
    }
}

/// Uniform absorption giving `t60` by Sabine's formula.
pub fn sabine_absorption(volume: f64, surface: f64, t60: f64, c: f64) -> Result<f64> {
    let alpha = 24.0 * LN_10 * volume / (c * surface * t60);
    if alpha > 1.0 {
        return Err(invalid(format!(
            "T60 {t60} s is too short for this room (absorption {alpha:.2} > 1)"
        )));
    }
    Ok(alpha)
}

/// Eight Hann-windowed sinc taps for a delay of `delay` samples, normalised
/// to unit DC gain. Returns the index of the first tap and the taps.
pub fn fractional_delay_taps(delay: f64) -> (i64, [f64; FRACTIONAL_DELAY_TAPS]) {
    let half = (FRACTIONAL_DELAY_TAPS / 2) as i64;
    let first = delay.floor() as i64 - half + 1;
    let mut taps = [0.0; FRACTIONAL_DELAY_TAPS];
    for (i, t) in taps.iter_mut().enumerate() {
        let x = (first + i as i64) as f64 - delay;
        let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let w = 0.5 * (1.0 + (PI * x / half as f64).cos());
        *t = sinc * w;
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    (first, taps)
}

/// Image-source RIR of `len` samples from `src` to `mic`. Each image adds a
/// fractionally delayed impulse of amplitude `beta_product / (4 pi d)`.
pub fn image_rir(room: &RoomSpec, src: &Position, mic: &Position, sample_rate: f64, len: usize) -> Result<Vec<f64>> {
    let beta = room.reflection_coefficients()?;
    if !room.contains(src) || !room.contains(mic) {
        return Err(geometry("source and microphone must lie inside the room"));
    }
    if distance(src, mic) < 1e-6 {
        return Err(geometry("source and microphone coincide"));
    }
    let c = room.speed_of_sound;
    let order = room.max_image_order as i64;
    let max_dist = (len as f64 + FRACTIONAL_DELAY_TAPS as f64) * c / sample_rate;
    let mut h = vec![0.0; len];
    let l = room.dims;
    // Per axis, the image coordinate offset and reflection gain for each
    // (n, q); q = 1 mirrors the source in the wall at 0.
    let axis = |a: usize| -> Vec<(i64, f64, f64)> {
        let n_max = (max_dist / (2.0 * l[a])).ceil() as i64 + 1;
        let mut out = Vec::new();
        for n in -n_max..=n_max {
            for q in 0..2i64 {
                let reflections = (2 * n - q).abs();
                if reflections > order {
                    continue;
                }
                let pos = (1 - 2 * q) as f64 * src[a] + 2.0 * n as f64 * l[a];
                let gain = beta[2 * a].powi((n - q).abs() as i32) * beta[2 * a + 1].powi(n.abs() as i32);
                out.push((reflections, pos - mic[a], gain));
            }
        }
        out
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    for &(rx, dx, gx) in &ax {
        for &(ry, dy, gy) in &ay {
            if rx + ry > order {
                continue;
            }
            let dxy2 = dx * dx + dy * dy;
            if dxy2.sqrt() > max_dist {
                continue;
            }
            for &(rz, dz, gz) in &az {
                if rx + ry + rz > order {
                    continue;
                }
                let g = gx * gy * gz;
                if g == 0.0 {
                    continue;
                }
                let d = (dxy2 + dz * dz).sqrt();
                if d > max_dist {
                    continue;
                }
                let (first, taps) = fractional_delay_taps(d / c * sample_rate);
                let amp = g / (4.0 * PI * d);
                for (i, t) in taps.iter().enumerate() {
                    let idx = first + i as i64;
                    if idx >= 0 && (idx as usize) < len {
                        h[idx as usize] += amp * t;
                    }
                }
            }
        }
    }
    Ok(h)
}

/// T60 from the Schroeder backward-integrated energy decay, fitted between
/// -5 and -25 dB and extrapolated to -60 dB.
pub fn schroeder_t60(ir: &[f64], sample_rate: f64) -> Result<f64> {
    let mut edc = vec![0.0; ir.len()];
    let mut acc = 0.0;
    for (i, &v) in ir.iter().enumerate().rev() {
        acc += v * v;
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return Err(invalid("impulse response has no energy"));
    }
    let (mut n, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if db <= -5.0 && db >= -25.0 {
            let t = i as f64 / sample_rate;
            n += 1.0;
            st += t;
            sy += db;
            stt += t * t;
            sty += t * db;
        }
    }
    if n < 2.0 {
        return Err(invalid("decay does not span -5 to -25 dB"));
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    if !(slope < 0.0) {
        return Err(invalid("energy decay is not decreasing"));
    }
    Ok(-60.0 / slope)
}

/// Index of the largest-magnitude sample.
pub fn peak_index(ir: &[f64]) -> usize {
    ir.iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i)
}
