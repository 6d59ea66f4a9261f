//! Turn-taking stimuli: the wearer converses with the target talker while
//! the competing talkers hold their own conversations in pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seeds;
use crate::speech::UtteranceSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurnModel {
    /// Turn durations are uniform on `[min_turn_s, max_turn_s]`.
    pub min_turn_s: f64,
    pub max_turn_s: f64,
    /// Silence between consecutive turns.
    pub gap_s: f64,
    /// Chance that a turn starts before the previous one has ended.
    pub overlap_prob: f64,
    pub overlap_s: f64,
}

impl Default for TurnModel {
    fn default() -> Self {
        TurnModel {
            min_turn_s: 1.0,
            max_turn_s: 3.0,
            gap_s: 0.2,
            overlap_prob: 0.05,
            overlap_s: 0.3,
        }
    }
}

impl TurnModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_turn_s > 0.0) || self.max_turn_s < self.min_turn_s {
            return Err(invalid("turn durations need 0 < min_turn_s <= max_turn_s"));
        }
        if !(self.gap_s >= 0.0) || !(self.overlap_s >= 0.0) {
            return Err(invalid("gap and overlap must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.overlap_prob) {
            return Err(invalid("overlap probability must lie in [0, 1]"));
        }
        if self.overlap_s >= self.min_turn_s {
            return Err(invalid("overlap must be shorter than the shortest turn"));
        }
        Ok(())
    }
}

/// One talker's turn, samples `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Turn {
    /// 0 or 1 within the pair.
    pub speaker: usize,
    pub start: usize,
    pub end: usize,
}

/// Alternating turns filling `len` samples.
pub fn dialogue_turns(len: usize, sample_rate: f64, model: &TurnModel, seed: u64) -> Result<Vec<Turn>> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = |secs: f64| (secs * sample_rate).round() as usize;
    let mut speaker = rng.random_range(0..2usize);
    let mut t = s(rng.random_range(0.0..=model.gap_s.max(1e-3)));
    let mut turns: Vec<Turn> = Vec::new();
    while t < len {
        let dur = s(rng.random_range(model.min_turn_s..=model.max_turn_s));
        let end = (t + dur).min(len);
        turns.push(Turn { speaker, start: t, end });
        speaker = 1 - speaker;
        t = if rng.random_bool(model.overlap_prob) {
            end.saturating_sub(s(model.overlap_s))
        } else {
            end + s(model.gap_s)
        };
    }
    Ok(turns)
}

/// Renders a pair's turns. A `None` talker is a silent partner.
pub fn render_dialogue(
    source: &mut dyn UtteranceSource,
    talkers: [Option<usize>; 2],
    turns: &[Turn],
    len: usize,
) -> Result<[Vec<f64>; 2]> {
    let mut out = [vec![0.0; len], vec![0.0; len]];
    for turn in turns {
        if let Some(t) = talkers[turn.speaker] {
            let speech = source.speech(t, turn.end - turn.start)?;
            out[turn.speaker][turn.start..turn.end].copy_from_slice(&speech);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversationStimuli {
    pub own_voice: Vec<f64>,
    pub target: Vec<f64>,
    pub competing: Vec<Vec<f64>>,
    /// Turns of the wearer (speaker 0) and target (speaker 1).
    pub main_turns: Vec<Turn>,
}

/// `talkers` lists the corpus talker for the wearer, the target and each
/// competitor, in that order.
pub fn synth_conversation(
    source: &mut dyn UtteranceSource,
    talkers: &[usize],
    len: usize,
    model: &TurnModel,
    seed: u64,
) -> Result<ConversationStimuli> {
    if talkers.len() < 2 {
        return Err(invalid("need at least the wearer and the target talker"));
    }
    let fs = source.sample_rate() as f64;
    let main_turns = dialogue_turns(len, fs, model, seeds::derive_named(seed, "main-turns"))?;
    let [own_voice, target] = render_dialogue(source, [Some(talkers[0]), Some(talkers[1])], &main_turns, len)?;
    let others = &talkers[2..];
    let mut competing = Vec::with_capacity(others.len());
    for (pair, chunk) in others.chunks(2).enumerate() {
        let turns = dialogue_turns(len, fs, model, seeds::derive(seeds::derive_named(seed, "competing-turns"), pair as u64))?;
        let [a, b] = render_dialogue(source, [Some(chunk[0]), chunk.get(1).copied()], &turns, len)?;
        competing.push(a);
        if chunk.len() == 2 {
            competing.push(b);
        }
    }
    Ok(ConversationStimuli {
        own_voice,
        target,
        competing,
        main_turns,
    })
}
