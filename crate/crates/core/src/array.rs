//! Array model: scene geometry, acoustic transfer functions and the relative
//! transfer functions (steering vectors) the hypotheses are built on.
//!
//! Room coordinates are metres with `z` up. Talker azimuths are measured in the
//! horizontal plane relative to the listener's look direction, counter-clockwise
//! (positive azimuth is to the listener's left).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::{Error, Result, C64};

pub type Position = [f64; 3];

pub fn distance(a: &Position, b: &Position) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TalkerPlacement {
    pub azimuth_deg: f64,
    pub radius_m: f64,
    pub height_m: f64,
}

/// Default hearing-aid layout: two microphones per ear, 1 cm front/rear
/// spacing, +-9 cm from the head centre. Channel 0 is left-front.
pub fn default_ha_offsets() -> Vec<Position> {
    vec![
        [0.005, 0.09, 0.0],
        [-0.005, 0.09, 0.0],
        [0.005, -0.09, 0.0],
        [-0.005, -0.09, 0.0],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub room_dims: Position,
    /// Head centre.
    pub ha_user_position: Position,
    /// Look direction in room coordinates, degrees from +x towards +y.
    pub head_yaw_deg: f64,
    /// Microphone offsets in the head frame (x forward, y left, z up).
    pub ha_mic_offsets: Vec<Position>,
    pub talker_positions: Vec<TalkerPlacement>,
    pub rm_positions: Vec<Position>,
}

impl SceneGeometry {
    fn head_to_room(&self, offset: &Position) -> Position {
        let yaw = self.head_yaw_deg.to_radians();
        let (s, c) = yaw.sin_cos();
        [
            self.ha_user_position[0] + c * offset[0] - s * offset[1],
            self.ha_user_position[1] + s * offset[0] + c * offset[1],
            self.ha_user_position[2] + offset[2],
        ]
    }

    pub fn ha_mic_positions(&self) -> Vec<Position> {
        self.ha_mic_offsets.iter().map(|o| self.head_to_room(o)).collect()
    }

    /// Point at `azimuth_deg` / `radius_m` around the listener, at absolute
    /// height `height_m`.
    pub fn polar_to_room(&self, azimuth_deg: f64, radius_m: f64, height_m: f64) -> Position {
        let a = (self.head_yaw_deg + azimuth_deg).to_radians();
        [
            self.ha_user_position[0] + radius_m * a.cos(),
            self.ha_user_position[1] + radius_m * a.sin(),
            height_m,
        ]
    }

    pub fn talker_position(&self, i: usize) -> Position {
        let t = &self.talker_positions[i];
        self.polar_to_room(t.azimuth_deg, t.radius_m, t.height_m)
    }

    pub fn num_mics(&self) -> usize {
        self.ha_mic_offsets.len()
    }

    pub fn inside_room(&self, p: &Position) -> bool {
        p.iter().zip(&self.room_dims).all(|(&x, &l)| x > 0.0 && x < l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.room_dims.iter().any(|&d| d <= 0.0) {
            return Err(Error::invalid("room dimensions must be positive"));
        }
        if self.num_mics() < 2 {
            return Err(Error::invalid("the hearing-aid array needs at least 2 microphones"));
        }
        for (m, p) in self.ha_mic_positions().iter().enumerate() {
            if !self.inside_room(p) {
                return Err(Error::invalid(format!("hearing-aid mic {m} is outside the room")));
            }
        }
        for i in 0..self.talker_positions.len() {
            if !self.inside_room(&self.talker_position(i)) {
                return Err(Error::invalid(format!("talker {i} is outside the room")));
            }
            for j in 0..i {
                let a = self.talker_positions[i].azimuth_deg.rem_euclid(360.0);
                let b = self.talker_positions[j].azimuth_deg.rem_euclid(360.0);
                if (a - b).abs() < 1e-9 {
                    return Err(Error::invalid(format!(
                        "talkers {j} and {i} share azimuth {a} deg"
                    )));
                }
            }
        }
        for (r, p) in self.rm_positions.iter().enumerate() {
            if !self.inside_room(p) {
                return Err(Error::invalid(format!("remote mic {r} is outside the room")));
            }
        }
        Ok(())
    }
}

/// ATFs per `(source, mic, bin)` together with the impulse responses they
/// were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunctionSet {
    num_sources: usize,
    num_mics: usize,
    fft_size: usize,
    atf: Vec<C64>,
    impulse_responses: Vec<Vec<f64>>,
}

impl TransferFunctionSet {
    /// `irs[source][mic]`. Each ATF is the `fft_size`-point DFT of the first
    /// `fft_size` samples of its impulse response.
    pub fn from_impulse_responses(irs: Vec<Vec<Vec<f64>>>, fft_size: usize) -> Result<Self> {
        let num_sources = irs.len();
        let num_mics = irs.first().map_or(0, Vec::len);
        if num_sources == 0 || num_mics == 0 {
            return Err(Error::invalid("empty impulse-response set"));
        }
        if irs.iter().any(|s| s.len() != num_mics) {
            return Err(Error::invalid("every source needs one response per mic"));
        }
        if fft_size < 2 || fft_size % 2 != 0 {
            return Err(Error::invalid(format!("invalid fft size {fft_size}")));
        }
        let num_bins = fft_size / 2 + 1;
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        let mut atf = Vec::with_capacity(num_sources * num_mics * num_bins);
        let mut buf = vec![C64::new(0.0, 0.0); fft_size];
        for source in &irs {
            for ir in source {
                buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
                for (b, &h) in buf.iter_mut().zip(ir.iter()) {
                    *b = C64::new(h, 0.0);
                }
                fft.process(&mut buf);
                atf.extend_from_slice(&buf[..num_bins]);
            }
        }
        Ok(TransferFunctionSet {
            num_sources,
            num_mics,
            fft_size,
            atf,
            impulse_responses: irs.into_iter().flatten().collect(),
        })
    }

    /// Builds a set directly from ATF values laid out `(source, mic, bin)`,
    /// without time-domain responses.
    pub fn from_atf(
        num_sources: usize,
        num_mics: usize,
        num_bins: usize,
        atf: Vec<C64>,
    ) -> Result<Self> {
        if atf.len() != num_sources * num_mics * num_bins || num_bins < 2 {
            return Err(Error::invalid("ATF length does not match dimensions"));
        }
        Ok(TransferFunctionSet {
            num_sources,
            num_mics,
            fft_size: 2 * (num_bins - 1),
            atf,
            impulse_responses: Vec::new(),
        })
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn atf(&self, source: usize, mic: usize, bin: usize) -> C64 {
        self.atf[(source * self.num_mics + mic) * self.num_bins() + bin]
    }

    pub fn impulse_response(&self, source: usize, mic: usize) -> Option<&[f64]> {
        self.impulse_responses
            .get(source * self.num_mics + mic)
            .map(Vec::as_slice)
    }

    pub fn has_impulse_responses(&self) -> bool {
        !self.impulse_responses.is_empty()
    }
}

/// Relative transfer function per bin, normalized so the reference entry is
/// exactly one. Stored `(bin, mic)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    num_mics: usize,
    reference_mic: usize,
    d: Vec<C64>,
}

impl SteeringVector {
    /// Normalizes each bin of `per_bin` (one `num_mics` vector per bin) by its
    /// reference entry.
    pub fn from_bins(per_bin: &[Vec<C64>], reference_mic: usize) -> Result<Self> {
        let num_mics = per_bin.first().map_or(0, Vec::len);
        if num_mics == 0 || reference_mic >= num_mics {
            return Err(Error::invalid("reference mic out of range"));
        }
        let peak = per_bin
            .iter()
            .flatten()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        let floor = 1e-12 * peak;
        let mut d = Vec::with_capacity(per_bin.len() * num_mics);
        for (k, v) in per_bin.iter().enumerate() {
            if v.len() != num_mics {
                return Err(Error::invalid("ragged steering input"));
            }
            let r = v[reference_mic];
            if r.norm() <= floor || r.norm() == 0.0 {
                return Err(Error::DegenerateReference {
                    bin: k,
                    magnitude: r.norm(),
                });
            }
            for (m, &x) in v.iter().enumerate() {
                d.push(if m == reference_mic { C64::new(1.0, 0.0) } else { x / r });
            }
        }
        Ok(SteeringVector {
            num_mics,
            reference_mic,
            d,
        })
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_bins(&self) -> usize {
        self.d.len() / self.num_mics
    }

    pub fn reference_mic(&self) -> usize {
        self.reference_mic
    }

    pub fn bin(&self, k: usize) -> &[C64] {
        &self.d[k * self.num_mics..(k + 1) * self.num_mics]
    }

    pub fn get(&self, mic: usize, bin: usize) -> C64 {
        self.d[bin * self.num_mics + mic]
    }
}

/// RATF of `source`: its ATF column divided by the reference-mic ATF.
pub fn ratf_from_atf(
    atfs: &TransferFunctionSet,
    source: usize,
    reference_mic: usize,
) -> Result<SteeringVector> {
    if source >= atfs.num_sources() {
        return Err(Error::invalid(format!("source {source} out of range")));
    }
    let per_bin: Vec<Vec<C64>> = (0..atfs.num_bins())
        .map(|k| (0..atfs.num_mics()).map(|m| atfs.atf(source, m, k)).collect())
        .collect();
    SteeringVector::from_bins(&per_bin, reference_mic)
}

/// Closed-form point-source RATF for omnidirectional mics in free field.
pub fn free_field_steering(
    source: &Position,
    mics: &[Position],
    reference_mic: usize,
    sample_rate: f64,
    fft_size: usize,
    speed_of_sound: f64,
) -> Result<SteeringVector> {
    let r_ref = distance(source, &mics[reference_mic]);
    let per_bin: Vec<Vec<C64>> = (0..fft_size / 2 + 1)
        .map(|k| {
            let f = k as f64 * sample_rate / fft_size as f64;
            mics.iter()
                .map(|m| {
                    let r = distance(source, m);
                    C64::from_polar(r_ref / r, -2.0 * PI * f * (r - r_ref) / speed_of_sound)
                })
                .collect()
        })
        .collect();
    SteeringVector::from_bins(&per_bin, reference_mic)
}

/// Steering vectors available by azimuth, e.g. one per talker position.
#[derive(Debug, Clone, Default)]
pub struct SteeringBank {
    entries: Vec<(f64, SteeringVector)>,
}

impl SteeringBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, azimuth_deg: f64, d: SteeringVector) {
        self.entries.push((azimuth_deg.rem_euclid(360.0), d));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry nearest to `azimuth_deg`, if one lies within `tolerance_deg`.
    pub fn nearest(&self, azimuth_deg: f64, tolerance_deg: f64) -> Result<&SteeringVector> {
        let target = azimuth_deg.rem_euclid(360.0);
        self.entries
            .iter()
            .map(|(a, d)| {
                let diff = (a - target).abs();
                (diff.min(360.0 - diff), d)
            })
            .filter(|(diff, _)| *diff <= tolerance_deg)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, d)| d)
            .ok_or(Error::UnavailableAngle { azimuth_deg })
    }
}

/// How the steering vector handed to the selector differs from the truth.
#[derive(Debug, Clone)]
pub enum Perturbation<'a> {
    /// Use a different RATF (e.g. another head, or a free-field model).
    Substitute(SteeringVector),
    /// Use the RATF of the bank entry nearest to the given azimuth.
    Rotate {
        degrees: f64,
        bank: &'a SteeringBank,
        tolerance_deg: f64,
    },
    /// Random per-bin phase and log-magnitude errors on non-reference mics.
    /// `phase_rad` and `magnitude_db` are standard deviations.
    Jitter {
        phase_rad: f64,
        magnitude_db: f64,
        seed: u64,
    },
}

pub fn perturb_steering(d: &SteeringVector, mode: Perturbation<'_>) -> Result<SteeringVector> {
    match mode {
        Perturbation::Substitute(s) => {
            if s.num_bins() != d.num_bins()
                || s.num_mics() != d.num_mics()
                || s.reference_mic() != d.reference_mic()
            {
                return Err(Error::invalid(
                    "substitute steering vector must share bins, mics and reference",
                ));
            }
            Ok(s)
        }
        Perturbation::Rotate {
            degrees,
            bank,
            tolerance_deg,
        } => {
            let s = bank.nearest(degrees, tolerance_deg)?;
            perturb_steering(d, Perturbation::Substitute(s.clone()))
        }
        Perturbation::Jitter {
            phase_rad,
            magnitude_db,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = |rng: &mut ChaCha8Rng| -> f64 {
                // Box-Muller; keeps the perturbation stream independent of
                // distribution-crate versions.
                let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            };
            let mut out = d.clone();
            for k in 0..d.num_bins() {
                for m in 0..d.num_mics() {
                    if m == d.reference_mic() {
                        continue;
                    }
                    let g = 10f64.powf(magnitude_db * normal(&mut rng) / 20.0);
                    let p = phase_rad * normal(&mut rng);
                    out.d[k * d.num_mics + m] *= C64::from_polar(g, p);
                }
            }
            Ok(out)
        }
    }
}

/// The candidate channels and the steering vector the hypotheses share.
#[derive(Debug, Clone)]
pub struct HypothesisSet {
    pub channel_ids: Vec<String>,
    pub steering: SteeringVector,
}

impl HypothesisSet {
    pub fn new(channel_ids: Vec<String>, steering: SteeringVector) -> Result<Self> {
        if channel_ids.is_empty() {
            return Err(Error::invalid("no candidate channels"));
        }
        for (i, id) in channel_ids.iter().enumerate() {
            if channel_ids[..i].contains(id) {
                return Err(Error::invalid(format!("duplicate channel id {id:?}")));
            }
        }
        Ok(HypothesisSet {
            channel_ids,
            steering,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channel_ids.len()
    }

    /// With a single candidate there is nothing to test.
    pub fn is_trivial(&self) -> bool {
        self.channel_ids.len() < 2
    }
}
