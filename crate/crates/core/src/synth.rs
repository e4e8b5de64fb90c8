//! Seeded synthetic corpora: streams with word segmentations and references.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{AlignmentRecord, ManifestEntry};
use crate::pre_decision::{build_alignment_table, AlignmentLevel, AlignmentTable, Segment};
use crate::report::References;
use crate::stream::{encoder_state_count, SourceStream};
use crate::time::Millis;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub utterances: usize,
    pub seed: u64,
    pub frame_period: Millis,
    pub min_words: usize,
    pub max_words: usize,
    /// Word durations are drawn uniformly from this range, in whole frames.
    pub min_word: Millis,
    pub max_word: Millis,
    /// Silence between consecutive words, drawn uniformly, in whole frames.
    pub max_pause: Millis,
    pub tokens_per_word: usize,
    pub vocab_size: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            utterances: 100,
            seed: 0,
            frame_period: Millis::from_ms(10),
            min_words: 8,
            max_words: 30,
            min_word: Millis::from_ms(150),
            max_word: Millis::from_ms(390),
            max_pause: Millis::ZERO,
            tokens_per_word: 1,
            vocab_size: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub stream: SourceStream,
    pub segments: Vec<Segment>,
    pub reference: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub utterances: Vec<SynthUtterance>,
}

fn frames_in(span: Millis, frame_period: Millis) -> i64 {
    span.ticks() / frame_period.ticks()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    let ts = spec.frame_period;
    if !ts.is_positive() {
        return Err(Error::config("frame period must be positive"));
    }
    if spec.min_words == 0 || spec.max_words < spec.min_words {
        return Err(Error::config("word count range must satisfy 1 <= min <= max"));
    }
    let (lo, hi) = (frames_in(spec.min_word, ts), frames_in(spec.max_word, ts));
    if lo < 1 || hi < lo {
        return Err(Error::config("word duration range must cover at least one frame"));
    }
    if spec.tokens_per_word == 0 || spec.vocab_size == 0 {
        return Err(Error::config("tokens per word and vocabulary size must be positive"));
    }
    let max_pause = frames_in(spec.max_pause, ts).max(0);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.utterances.max(1).to_string().len().max(4);
    let mut utterances = Vec::with_capacity(spec.utterances);
    for u in 0..spec.utterances {
        let words = rng.gen_range(spec.min_words..=spec.max_words);
        let mut cursor = 0i64;
        let mut segments = Vec::with_capacity(words);
        let mut reference = Vec::with_capacity(words * spec.tokens_per_word);
        for w in 0..words {
            if w > 0 && max_pause > 0 {
                cursor += rng.gen_range(0..=max_pause);
            }
            let len = rng.gen_range(lo..=hi);
            segments.push(Segment::new(
                format!("w{w}"),
                Millis::from_ticks(cursor * ts.ticks()),
                Millis::from_ticks((cursor + len) * ts.ticks()),
            ));
            cursor += len;
            for _ in 0..spec.tokens_per_word {
                reference.push(format!("v{}", rng.gen_range(0..spec.vocab_size)));
            }
        }
        let stream = SourceStream::new(format!("utt{u:0width$}"), cursor as usize, ts)?;
        utterances.push(SynthUtterance {
            stream,
            segments,
            reference,
        });
    }
    Ok(SynthCorpus { utterances })
}

impl SynthCorpus {
    pub fn streams(&self) -> Vec<SourceStream> {
        self.utterances.iter().map(|u| u.stream.clone()).collect()
    }

    pub fn references(&self) -> References {
        self.utterances
            .iter()
            .map(|u| (u.stream.id.clone(), u.reference.clone()))
            .collect()
    }

    pub fn alignment_tables(
        &self,
        level: AlignmentLevel,
        subsample_factor: usize,
    ) -> Result<BTreeMap<String, AlignmentTable>> {
        self.utterances
            .iter()
            .map(|u| {
                let states = encoder_state_count(u.stream.num_frames(), subsample_factor)?;
                let table =
                    build_alignment_table(&u.segments, level, states, subsample_factor, u.stream.frame_period())?;
                Ok((u.stream.id.clone(), table))
            })
            .collect()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.utterances
            .iter()
            .map(|u| ManifestEntry {
                id: u.stream.id.clone(),
                num_frames: u.stream.num_frames(),
                frame_period_ms: u.stream.frame_period(),
                feature_file: None,
                alignment_id: None,
            })
            .collect()
    }

    pub fn alignment_records(&self, level: AlignmentLevel) -> Vec<AlignmentRecord> {
        self.utterances
            .iter()
            .map(|u| AlignmentRecord {
                id: u.stream.id.clone(),
                level,
                segments: u.segments.clone(),
            })
            .collect()
    }
}
