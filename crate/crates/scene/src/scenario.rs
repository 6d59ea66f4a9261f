//! Scenario files (TOML, `schema_version = 1`).
//!
//! Relative paths inside a scenario resolve against the file's directory.
//! Unknown fields are rejected by name.

use std::path::{Path, PathBuf};

use headsteer_core::array::{default_ha_offsets, Position};
use serde::{Deserialize, Serialize};

use crate::conversation::TurnModel;
use crate::error::{Result, SceneError};
use crate::room::{Absorption, RoomSpec, DEFAULT_SPEED_OF_SOUND};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneMode {
    /// One close-talking remote mic per talker.
    CloseTalkingRms,
    /// Fixed MPDR beams of a table array are the remote channels.
    TableBeamBank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Likelihood selector, noisy output PSD as weight.
    Proposed,
    /// Likelihood selector, isolated-noise output PSD as weight.
    Optimal,
    Ncc,
    Mog,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Proposed, Method::Optimal, Method::Ncc, Method::Mog, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Optimal => "optimal",
            Method::Ncc => "ncc",
            Method::Mog => "mog",
            Method::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s.trim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub dims: Position,
    /// Reverberation time; mutually exclusive with `absorption`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t60: Option<f64>,
    /// Per-wall energy absorption `x0, x1, y0, y1, z0, z1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorption: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_image_order: Option<usize>,
    #[serde(default = "default_c")]
    pub speed_of_sound: f64,
    /// Impulse-response length; defaults to the longest direct path plus T60.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rir_length_s: Option<f64>,
}

fn default_c() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl RoomConfig {
    pub fn absorption(&self) -> Result<Absorption> {
        match (self.t60, self.absorption) {
            (Some(t), None) => Ok(Absorption::T60(t)),
            (None, Some(a)) => Ok(Absorption::Coefficients(a)),
            (None, None) => Ok(Absorption::T60(0.0)),
            (Some(_), Some(_)) => Err(SceneError::OutOfRange(
                "room: give either t60 or absorption, not both".into(),
            )),
        }
    }

    /// Nominal decay time used for RIR length and image order defaults.
    pub fn nominal_t60(&self) -> f64 {
        match (self.t60, self.absorption) {
            (Some(t), _) => t,
            (None, Some(a)) => {
                let [x, y, z] = self.dims;
                let areas = [y * z, y * z, x * z, x * z, x * y, x * y];
                let sabins: f64 = a.iter().zip(areas).map(|(a, s)| a * s).sum();
                if sabins > 0.0 {
                    24.0 * std::f64::consts::LN_10 * x * y * z / (self.speed_of_sound * sabins)
                } else {
                    1.0
                }
            }
            (None, None) => 0.0,
        }
    }

    pub fn rir_length_s(&self) -> f64 {
        let diag = self.dims.iter().map(|d| d * d).sum::<f64>().sqrt();
        self.rir_length_s
            .unwrap_or(diag / self.speed_of_sound + self.nominal_t60() + 0.002)
    }

    pub fn spec(&self) -> Result<RoomSpec> {
        let len = self.rir_length_s();
        let mut spec = RoomSpec {
            dims: self.dims,
            absorption: self.absorption()?,
            max_image_order: 0,
            speed_of_sound: self.speed_of_sound,
        };
        spec.max_image_order = self.max_image_order.unwrap_or_else(|| {
            if self.nominal_t60() == 0.0 {
                0
            } else {
                spec.order_for_duration(len)
            }
        });
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloseTalkingConfig {
    /// Equally spaced talker azimuths around the wearer; index 0 is frontal.
    pub num_positions: usize,
    pub radius_m: f64,
    /// Remote mic distance from its talker, towards the wearer.
    pub rm_distance_m: f64,
    pub talker_height_m: f64,
    /// Head centre; the room centre at `talker_height_m` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_position: Option<Position>,
    pub head_yaw_deg: f64,
}

impl Default for CloseTalkingConfig {
    fn default() -> Self {
        CloseTalkingConfig {
            num_positions: 16,
            radius_m: 1.9,
            rm_distance_m: 0.2,
            talker_height_m: 1.2,
            user_position: None,
            head_yaw_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamBankConfig {
    /// Table centre `(x, y)`; the room centre when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_center: Option<[f64; 2]>,
    pub table_height_m: f64,
    pub num_table_mics: usize,
    pub array_radius_m: f64,
    /// Candidate talker seats around the table, degrees from +x.
    pub seat_azimuths_deg: Vec<f64>,
    pub seat_radius_m: f64,
    pub talker_height_m: f64,
    /// The wearer's seat, degrees from +x on the same circle.
    pub user_azimuth_deg: f64,
    /// Index into `seat_azimuths_deg` of the target the wearer faces.
    pub target_seat: usize,
    /// Seats the beams point at; must include `target_seat`.
    pub beam_seats: Vec<usize>,
    /// Radius of the ring of isotropic noise sources around the table.
    pub noise_radius_m: f64,
}

impl Default for BeamBankConfig {
    fn default() -> Self {
        BeamBankConfig {
            table_center: None,
            table_height_m: 0.8,
            num_table_mics: 8,
            array_radius_m: 0.1,
            seat_azimuths_deg: vec![0.0, 30.0, -30.0, 60.0, -60.0, 90.0, -90.0, 120.0, -120.0, 150.0],
            seat_radius_m: 1.3,
            talker_height_m: 1.2,
            user_azimuth_deg: 180.0,
            target_seat: 0,
            beam_seats: vec![0, 3, 7, 8, 4],
            noise_radius_m: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmNoiseMode {
    /// Independent SSN per remote mic at the wearer's noise energy.
    #[default]
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Target-to-background SNR at the hearing-aid reference mic.
    pub ssn_snr_db: f64,
    pub rm_noise: RmNoiseMode,
    /// Number of equally spaced isotropic noise directions.
    pub isotropic_directions: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            ssn_snr_db: 15.0,
            rm_noise: RmNoiseMode::Independent,
            isotropic_directions: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Corpus manifest; see [`crate::speech::WavCorpus`].
    pub manifest: PathBuf,
}

/// Where the selector's frontal RATF comes from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SteeringConfig {
    /// RATF of the simulated frontal impulse responses.
    #[default]
    Matched,
    /// Closed-form free-field RATF of the frontal position.
    FreeField,
    /// Matched RATF with random per-bin phase and magnitude errors.
    Jitter {
        phase_rad: f64,
        magnitude_db: f64,
        #[serde(default)]
        seed: u64,
    },
    /// RATF from an imported impulse-response set (e.g. another head).
    IrSet {
        path: PathBuf,
        #[serde(default)]
        azimuth_deg: f64,
        #[serde(default = "default_tolerance")]
        tolerance_deg: f64,
    },
}

fn default_tolerance() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_competing: Vec<usize>,
    pub t_int_s: Vec<f64>,
    pub combos: usize,
    pub methods: Vec<Method>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_competing: vec![2, 4, 6],
            t_int_s: vec![0.5, 2.0, 15.0],
            combos: 5,
            methods: Method::ALL.to_vec(),
        }
    }
}

impl SweepConfig {
    /// Full grid: 40 combinations, 2 to 8 competitors, five integration times.
    pub fn paper_scale() -> Self {
        SweepConfig {
            n_competing: (2..=8).collect(),
            t_int_s: vec![0.5, 1.0, 2.0, 5.0, 15.0],
            combos: 40,
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub mode: SceneMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub reference_mic: usize,
    pub room: RoomConfig,
    #[serde(default)]
    pub close_talking: CloseTalkingConfig,
    #[serde(default)]
    pub beam_bank: BeamBankConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub conversation: TurnModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusConfig>,
    #[serde(default)]
    pub steering: SteeringConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Hearing-aid mic offsets in the head frame; two per ear by default.
    #[serde(default = "default_ha_offsets")]
    pub ha_mic_offsets: Vec<Position>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_duration() -> f64 {
    30.0
}

fn default_rate() -> u32 {
    16_000
}

fn out_of_range(msg: impl Into<String>) -> SceneError {
    SceneError::OutOfRange(msg.into())
}

impl Scenario {
    /// Close-talking desk scene: 7 x 6 x 3 m room, mild reverberation.
    pub fn default_close_talking() -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            mode: SceneMode::CloseTalkingRms,
            seed: 1,
            duration_s: default_duration(),
            sample_rate: default_rate(),
            reference_mic: 0,
            room: RoomConfig {
                dims: [7.0, 6.0, 3.0],
                t60: Some(0.25),
                absorption: None,
                max_image_order: None,
                speed_of_sound: DEFAULT_SPEED_OF_SOUND,
                rir_length_s: None,
            },
            close_talking: CloseTalkingConfig::default(),
            beam_bank: BeamBankConfig::default(),
            noise: NoiseConfig::default(),
            conversation: TurnModel::default(),
            corpus: None,
            steering: SteeringConfig::Matched,
            sweep: SweepConfig::default(),
            ha_mic_offsets: default_ha_offsets(),
            base_dir: PathBuf::from("."),
        }
    }

    /// Conference-table scene with a beam bank on an 8-mic table array.
    pub fn default_beam_bank() -> Self {
        Scenario {
            mode: SceneMode::TableBeamBank,
            room: RoomConfig {
                dims: [10.0, 8.0, 5.0],
                t60: Some(0.4),
                ..Self::default_close_talking().room
            },
            sweep: SweepConfig {
                n_competing: vec![3],
                t_int_s: vec![0.5, 1.0, 2.0],
                combos: 5,
                methods: vec![Method::Proposed, Method::Random],
            },
            ..Self::default_close_talking()
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| SceneError::Scenario {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SceneError::Scenario {
            path: path.to_path_buf(),
            message: format!("cannot read scenario: {e}"),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    /// Talker positions available besides the frontal target.
    pub fn max_competing(&self) -> usize {
        match self.mode {
            SceneMode::CloseTalkingRms => self.close_talking.num_positions.saturating_sub(1),
            SceneMode::TableBeamBank => self.beam_bank.seat_azimuths_deg.len().saturating_sub(1),
        }
    }

    pub fn user_position(&self) -> Position {
        self.close_talking.user_position.unwrap_or([
            self.room.dims[0] / 2.0,
            self.room.dims[1] / 2.0,
            self.close_talking.talker_height_m,
        ])
    }

    pub fn table_center(&self) -> [f64; 2] {
        self.beam_bank
            .table_center
            .unwrap_or([self.room.dims[0] / 2.0, self.room.dims[1] / 2.0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(out_of_range(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(out_of_range("duration_s must be positive"));
        }
        if self.sample_rate == 0 {
            return Err(out_of_range("sample_rate must be positive"));
        }
        if self.ha_mic_offsets.len() < 2 {
            return Err(out_of_range("ha_mic_offsets needs at least 2 microphones"));
        }
        if self.reference_mic >= self.ha_mic_offsets.len() {
            return Err(out_of_range(format!(
                "reference_mic {} out of range ({} hearing-aid mics)",
                self.reference_mic,
                self.ha_mic_offsets.len()
            )));
        }
        self.room.spec()?;
        self.conversation.validate()?;
        if self.noise.isotropic_directions == 0 {
            return Err(out_of_range("noise.isotropic_directions must be at least 1"));
        }
        let max_n = self.max_competing();
        let sweep = &self.sweep;
        if sweep.n_competing.is_empty() || sweep.t_int_s.is_empty() || sweep.methods.is_empty() {
            return Err(out_of_range("sweep needs at least one N, T_int and method"));
        }
        for &n in &sweep.n_competing {
            if n == 0 || n > max_n {
                return Err(out_of_range(match self.mode {
                    SceneMode::CloseTalkingRms => format!(
                        "sweep.n_competing = {n} is outside 1..={max_n}: the frontal target occupies one of the {} positions, leaving {max_n} for competitors",
                        self.close_talking.num_positions
                    ),
                    SceneMode::TableBeamBank => format!(
                        "sweep.n_competing = {n} is outside 1..={max_n}: {} seats, one taken by the target",
                        self.beam_bank.seat_azimuths_deg.len()
                    ),
                }));
            }
        }
        if sweep.t_int_s.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(out_of_range("sweep.t_int_s values must be positive"));
        }
        if sweep.combos == 0 {
            return Err(out_of_range("sweep.combos must be at least 1"));
        }
        match self.mode {
            SceneMode::CloseTalkingRms => {
                let c = &self.close_talking;
                if c.num_positions < 2 {
                    return Err(out_of_range("close_talking.num_positions must be at least 2"));
                }
                if !(c.rm_distance_m > 0.0 && c.rm_distance_m < c.radius_m) {
                    return Err(out_of_range("close_talking.rm_distance_m must lie in (0, radius_m)"));
                }
            }
            SceneMode::TableBeamBank => {
                let b = &self.beam_bank;
                if b.target_seat >= b.seat_azimuths_deg.len() {
                    return Err(out_of_range("beam_bank.target_seat is not a seat index"));
                }
                if b.beam_seats.is_empty() || !b.beam_seats.contains(&b.target_seat) {
                    return Err(out_of_range("beam_bank.beam_seats must include target_seat"));
                }
                if b.beam_seats.iter().any(|&s| s >= b.seat_azimuths_deg.len()) {
                    return Err(out_of_range("beam_bank.beam_seats holds an unknown seat"));
                }
                if b.num_table_mics < 2 || !(b.array_radius_m > 0.0) {
                    return Err(out_of_range("beam_bank needs >= 2 table mics and a positive radius"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario> {
        Scenario::from_toml(text, Path::new("."), Path::new("test.toml"))
    }

    const MINIMAL: &str = r#"
schema_version = 1
mode = "close_talking_rms"
[room]
dims = [7.0, 6.0, 3.0]
t60 = 0.25
"#;

    #[test]
    fn minimal_file_takes_defaults() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.sample_rate, 16_000);
        assert_eq!(s.close_talking.num_positions, 16);
        assert_eq!(s.sweep.n_competing, vec![2, 4, 6]);
        assert_eq!(s.steering, SteeringConfig::Matched);
        assert_eq!(s.num_samples(), 480_000);
    }

    #[test]
    fn unknown_field_is_named() {
        let err = parse(&format!("{MINIMAL}colour = 3\n")).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        let err = parse(&MINIMAL.replace("t60", "t6o")).unwrap_err().to_string();
        assert!(err.contains("t6o"), "{err}");
    }

    #[test]
    fn out_of_range_n_cites_position_limit() {
        let err = parse(&format!("{MINIMAL}[sweep]\nn_competing = [16]\n")).unwrap_err().to_string();
        assert!(err.contains("16 positions") && err.contains("1..=15"), "{err}");
    }

    #[test]
    fn round_trip_through_toml() {
        for s in [Scenario::default_close_talking(), Scenario::default_beam_bank()] {
            s.validate().unwrap();
            let back = parse(&s.to_toml()).unwrap();
            assert_eq!(back, Scenario { base_dir: PathBuf::from("."), ..s });
        }
    }

    #[test]
    fn steering_variants_parse() {
        let s = parse(&format!("{MINIMAL}[steering]\nmode = \"jitter\"\nphase_rad = 0.1\nmagnitude_db = 1.0\n")).unwrap();
        assert!(matches!(s.steering, SteeringConfig::Jitter { .. }));
        assert!(parse(&format!("{MINIMAL}[steering]\nmode = \"jitter\"\nphase = 0.1\n")).is_err());
    }

    #[test]
    fn conflicting_absorption() {
        assert!(parse(&MINIMAL.replace("t60 = 0.25", "t60 = 0.25\nabsorption = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5]")).is_err());
    }

    #[test]
    fn paper_scale_grid() {
        let p = SweepConfig::paper_scale();
        assert_eq!(p.combos, 40);
        assert_eq!(p.n_competing, vec![2, 3, 4, 5, 6, 7, 8]);
    }
}
