//! Per-combination scene layout: which positions the competitors occupy,
//! where every sensor sits and how remote channels are ordered.

use headsteer_core::array::{distance, Position, SceneGeometry, TalkerPlacement};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{geometry, invalid, Result};
use crate::room::RoomSpec;
use crate::scenario::{SceneMode, Scenario};
use crate::seeds;

/// Mouth offset in front of the head centre.
pub const MOUTH_OFFSET_M: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TalkerSlot {
    /// Index of the azimuth (close-talking) or seat (beam bank) used.
    pub slot: usize,
    /// Azimuth relative to the wearer's look direction, degrees.
    pub azimuth_deg: f64,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Beam {
    pub seat: usize,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneLayout {
    pub mode: SceneMode,
    pub num_competing: usize,
    pub combo_seed: u64,
    #[serde(skip)]
    pub room: RoomSpec,
    pub head: Position,
    pub head_yaw_deg: f64,
    pub mouth: Position,
    pub ha_mics: Vec<Position>,
    /// Target first, then the competitors.
    pub talkers: Vec<TalkerSlot>,
    /// Remote mics per talker (close-talking) or table mics (beam bank).
    pub sensors: Vec<Position>,
    /// Beam look positions; empty for close-talking scenes.
    pub beams: Vec<Beam>,
    pub noise_sources: Vec<Position>,
    /// Remote channel `r` carries talker (close-talking) or beam (beam bank)
    /// `remote_order[r]`.
    pub remote_order: Vec<usize>,
    /// Remote channel carrying the target.
    pub target_channel: usize,
    /// Corpus talker ids for the wearer, target and competitors.
    pub voices: Vec<usize>,
}

impl SceneLayout {
    pub fn num_remotes(&self) -> usize {
        self.remote_order.len()
    }

    /// Room-frame geometry of the close-talking layout.
    pub fn geometry(&self, ha_mic_offsets: &[Position]) -> SceneGeometry {
        SceneGeometry {
            room_dims: self.room.dims,
            ha_user_position: self.head,
            head_yaw_deg: self.head_yaw_deg,
            ha_mic_offsets: ha_mic_offsets.to_vec(),
            talker_positions: self
                .talkers
                .iter()
                .map(|t| TalkerPlacement {
                    azimuth_deg: t.azimuth_deg,
                    radius_m: horizontal_distance(&self.head, &t.position),
                    height_m: t.position[2],
                })
                .collect(),
            rm_positions: if self.mode == SceneMode::CloseTalkingRms { self.sensors.clone() } else { Vec::new() },
        }
    }

    fn check_inside(&self) -> Result<()> {
        let named = std::iter::once(("mouth", &self.mouth))
            .chain(self.ha_mics.iter().map(|p| ("hearing-aid mic", p)))
            .chain(self.talkers.iter().map(|t| ("talker", &t.position)))
            .chain(self.sensors.iter().map(|p| ("sensor", p)))
            .chain(self.noise_sources.iter().map(|p| ("noise source", p)));
        for (what, p) in named {
            if !self.room.contains(p) {
                return Err(geometry(format!("{what} at {p:?} is outside the room {:?}", self.room.dims)));
            }
        }
        Ok(())
    }
}

fn horizontal_distance(a: &Position, b: &Position) -> f64 {
    distance(&[a[0], a[1], 0.0], &[b[0], b[1], 0.0])
}

fn relative_azimuth(head: &Position, yaw_deg: f64, p: &Position) -> f64 {
    let abs = (p[1] - head[1]).atan2(p[0] - head[0]).to_degrees();
    let rel = (abs - yaw_deg).rem_euclid(360.0);
    if rel > 180.0 {
        rel - 360.0
    } else {
        rel
    }
}

fn ring(centre: [f64; 2], radius: f64, height: f64, azimuth_deg: f64) -> Position {
    let a = azimuth_deg.to_radians();
    [centre[0] + radius * a.cos(), centre[1] + radius * a.sin(), height]
}

fn head_to_room(head: &Position, yaw_deg: f64, o: &Position) -> Position {
    let (s, c) = yaw_deg.to_radians().sin_cos();
    [head[0] + c * o[0] - s * o[1], head[1] + s * o[0] + c * o[1], head[2] + o[2]]
}

/// Distinct corpus talker ids for the wearer, the target and `n` competitors.
fn pick_voices(n: usize, corpus_talkers: Option<usize>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let needed = n + 2;
    match corpus_talkers {
        Some(avail) if avail < needed => Err(invalid(format!(
            "corpus has {avail} talkers but the scene needs {needed} (wearer, target, {n} competitors)"
        ))),
        Some(avail) => Ok(index::sample(rng, avail, needed).into_vec()),
        None => Ok((0..needed).collect()),
    }
}

/// Lays out combination `combo` with `n` competitors.
pub fn build_scene(scenario: &Scenario, n: usize, combo: u64, corpus_talkers: Option<usize>) -> Result<SceneLayout> {
    let max = scenario.max_competing();
    if n == 0 || n > max {
        return Err(invalid(format!("number of competitors {n} outside 1..={max}")));
    }
    let combo_seed = seeds::derive(seeds::derive(scenario.seed, n as u64), combo);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_named(combo_seed, "layout"));
    let room = scenario.room.spec()?;
    let layout = match scenario.mode {
        SceneMode::CloseTalkingRms => close_talking(scenario, n, combo_seed, room, &mut rng)?,
        SceneMode::TableBeamBank => beam_bank(scenario, n, combo_seed, room, &mut rng)?,
    };
    layout.check_inside()?;
    Ok(SceneLayout {
        voices: pick_voices(n, corpus_talkers, &mut rng)?,
        ..layout
    })
}

fn close_talking(s: &Scenario, n: usize, combo_seed: u64, room: RoomSpec, rng: &mut ChaCha8Rng) -> Result<SceneLayout> {
    let c = &s.close_talking;
    let head = s.user_position();
    let yaw = c.head_yaw_deg;
    let step = 360.0 / c.num_positions as f64;
    let at = |slot: usize, radius: f64| {
        let a = yaw + slot as f64 * step;
        ring([head[0], head[1]], radius, c.talker_height_m, a)
    };
    let mut slots = vec![0usize];
    slots.extend(index::sample(rng, c.num_positions - 1, n).into_iter().map(|i| i + 1));
    let talkers: Vec<TalkerSlot> = slots
        .iter()
        .map(|&slot| {
            let rel = slot as f64 * step;
            TalkerSlot {
                slot,
                azimuth_deg: if rel > 180.0 { rel - 360.0 } else { rel },
                position: at(slot, c.radius_m),
            }
        })
        .collect();
    let sensors = slots.iter().map(|&slot| at(slot, c.radius_m - c.rm_distance_m)).collect();
    let noise_sources = (0..s.noise.isotropic_directions)
        .map(|i| ring([head[0], head[1]], c.radius_m, c.talker_height_m, yaw + i as f64 * 360.0 / s.noise.isotropic_directions as f64))
        .collect();
    let mut remote_order: Vec<usize> = (0..=n).collect();
    remote_order.shuffle(rng);
    let target_channel = remote_order.iter().position(|&t| t == 0).expect("target present");
    Ok(SceneLayout {
        mode: SceneMode::CloseTalkingRms,
        num_competing: n,
        combo_seed,
        room,
        head,
        head_yaw_deg: yaw,
        mouth: head_to_room(&head, yaw, &[MOUTH_OFFSET_M, 0.0, 0.0]),
        ha_mics: s.ha_mic_offsets.iter().map(|o| head_to_room(&head, yaw, o)).collect(),
        talkers,
        sensors,
        beams: Vec::new(),
        noise_sources,
        remote_order,
        target_channel,
        voices: Vec::new(),
    })
}

fn beam_bank(s: &Scenario, n: usize, combo_seed: u64, room: RoomSpec, rng: &mut ChaCha8Rng) -> Result<SceneLayout> {
    let b = &s.beam_bank;
    let centre = s.table_center();
    let seat = |i: usize| ring(centre, b.seat_radius_m, b.talker_height_m, b.seat_azimuths_deg[i]);
    let head = ring(centre, b.seat_radius_m, b.talker_height_m, b.user_azimuth_deg);
    let target = seat(b.target_seat);
    for (i, a) in b.seat_azimuths_deg.iter().enumerate() {
        let d = (a - b.user_azimuth_deg).rem_euclid(360.0);
        if d.min(360.0 - d) < 1e-9 {
            return Err(geometry(format!("seat {i} coincides with the wearer's seat")));
        }
    }
    let yaw = (target[1] - head[1]).atan2(target[0] - head[0]).to_degrees();
    let others: Vec<usize> = (0..b.seat_azimuths_deg.len()).filter(|&i| i != b.target_seat).collect();
    let mut slots = vec![b.target_seat];
    slots.extend(index::sample(rng, others.len(), n).into_iter().map(|i| others[i]));
    let talkers = slots
        .iter()
        .map(|&slot| {
            let p = seat(slot);
            TalkerSlot {
                slot,
                azimuth_deg: relative_azimuth(&head, yaw, &p),
                position: p,
            }
        })
        .collect();
    let sensors = (0..b.num_table_mics)
        .map(|m| ring(centre, b.array_radius_m, b.table_height_m, m as f64 * 360.0 / b.num_table_mics as f64))
        .collect();
    let beams: Vec<Beam> = b.beam_seats.iter().map(|&i| Beam { seat: i, position: seat(i) }).collect();
    let noise_sources = (0..s.noise.isotropic_directions)
        .map(|i| ring(centre, b.noise_radius_m, b.talker_height_m, i as f64 * 360.0 / s.noise.isotropic_directions as f64))
        .collect();
    let target_beam = b.beam_seats.iter().position(|&i| i == b.target_seat).expect("validated");
    let mut remote_order: Vec<usize> = (0..beams.len()).collect();
    remote_order.shuffle(rng);
    let target_channel = remote_order.iter().position(|&t| t == target_beam).expect("target beam present");
    Ok(SceneLayout {
        mode: SceneMode::TableBeamBank,
        num_competing: n,
        combo_seed,
        room,
        head,
        head_yaw_deg: yaw,
        mouth: head_to_room(&head, yaw, &[MOUTH_OFFSET_M, 0.0, 0.0]),
        ha_mics: s.ha_mic_offsets.iter().map(|o| head_to_room(&head, yaw, o)).collect(),
        talkers,
        sensors,
        beams,
        noise_sources,
        remote_order,
        target_channel,
        voices: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_is_frontal_and_competitors_distinct() {
        let s = Scenario::default_close_talking();
        for combo in 0..20 {
            let l = build_scene(&s, 6, combo, None).unwrap();
            assert_eq!(l.talkers[0].slot, 0);
            assert_eq!(l.talkers[0].azimuth_deg, 0.0);
            let mut slots: Vec<usize> = l.talkers.iter().map(|t| t.slot).collect();
            slots.sort_unstable();
            slots.dedup();
            assert_eq!(slots.len(), 7);
            assert_eq!(l.remote_order[l.target_channel], 0);
            assert_eq!(l.voices.len(), 8);
            for (t, rm) in l.talkers.iter().zip(&l.sensors) {
                assert!((distance(&t.position, rm) - 0.2).abs() < 1e-12);
            }
            l.geometry(&s.ha_mic_offsets).validate().unwrap();
        }
    }

    #[test]
    fn n_limits_and_corpus_size() {
        let s = Scenario::default_close_talking();
        assert!(build_scene(&s, 15, 0, None).is_ok());
        assert!(build_scene(&s, 16, 0, None).is_err());
        assert!(build_scene(&s, 0, 0, None).is_err());
        assert!(build_scene(&s, 4, 0, Some(5)).is_err());
        let l = build_scene(&s, 4, 0, Some(10)).unwrap();
        assert!(l.voices.iter().all(|&v| v < 10));
    }

    #[test]
    fn same_combo_same_layout() {
        let s = Scenario::default_close_talking();
        assert_eq!(build_scene(&s, 3, 7, None).unwrap(), build_scene(&s, 3, 7, None).unwrap());
        assert_ne!(build_scene(&s, 3, 7, None).unwrap().combo_seed, build_scene(&s, 3, 8, None).unwrap().combo_seed);
    }

    #[test]
    fn beam_bank_faces_target() {
        let s = Scenario::default_beam_bank();
        let l = build_scene(&s, 3, 0, None).unwrap();
        assert!(l.talkers[0].azimuth_deg.abs() < 1e-9);
        assert_eq!(l.num_remotes(), 5);
        assert_eq!(l.beams[l.remote_order[l.target_channel]].seat, s.beam_bank.target_seat);
        assert_eq!(l.sensors.len(), 8);
        assert!((l.head[0] - (s.room.dims[0] / 2.0 - 1.3)).abs() < 1e-12);
    }

    #[test]
    fn outside_room_rejected() {
        let mut s = Scenario::default_close_talking();
        s.close_talking.radius_m = 3.2;
        assert!(build_scene(&s, 2, 0, None).is_err());
    }
}
