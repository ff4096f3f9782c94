//! Replayable episode records.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic            4 bytes  "SPKC"
//! version          u32      1
//! step_ms          u32      step duration in milliseconds
//! channels         u32
//! seed             u64
//! duration_steps   u64
//! per step         varint n, then n varint channel indices (ascending)
//! event_count      u64
//! per event        u8 kind (0 = reward, 1 = punishment), u64 step
//! ```
//!
//! Varints are unsigned LEB128.

use std::io::{self, Read, Write};

use crate::encoder::{EncoderLayout, SpikeClock, SpikeEncoder};
use crate::error::{Error, Result};
use crate::neuron::InputFrame;
use crate::pong::{EnvEvent, EventKind, PongEnv, RacketParams};

pub const MAGIC: &[u8; 4] = b"SPKC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub version: u32,
    pub step_ms: u32,
    pub channels: u32,
    pub seed: u64,
    pub duration_steps: u64,
}

/// Per-step sparse spike frames plus reward/punishment events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeRecord {
    header: RecordHeader,
    /// `offsets[t]..offsets[t + 1]` indexes the spikes of step `t`.
    offsets: Vec<usize>,
    spikes: Vec<u16>,
    events: Vec<EnvEvent>,
}

impl EpisodeRecord {
    pub fn builder(channels: usize, seed: u64) -> RecordBuilder {
        RecordBuilder::new(channels, seed)
    }

    pub fn header(&self) -> &RecordHeader {
        &self.header
    }

    pub fn channels(&self) -> usize {
        self.header.channels as usize
    }

    pub fn duration_steps(&self) -> u64 {
        self.header.duration_steps
    }

    pub fn events(&self) -> &[EnvEvent] {
        &self.events
    }

    pub fn spikes_at(&self, step: u64) -> &[u16] {
        let t = step as usize;
        &self.spikes[self.offsets[t]..self.offsets[t + 1]]
    }

    fn steps_of(&self, kind: EventKind) -> Vec<u64> {
        self.events.iter().filter(|e| e.kind == kind).map(|e| e.step).collect()
    }

    pub fn reward_steps(&self) -> Vec<u64> {
        self.steps_of(EventKind::Reward)
    }

    pub fn punishment_steps(&self) -> Vec<u64> {
        self.steps_of(EventKind::Punishment)
    }

    /// Iterates frames in order; the dopamine flag marks reward steps.
    pub fn frames(&self) -> Frames<'_> {
        self.frames_from(0)
    }

    pub fn frames_from(&self, start: u64) -> Frames<'_> {
        let next_reward = self.events.partition_point(|e| e.step < start);
        Frames {
            record: self,
            step: start,
            next_event: next_reward,
            frame: InputFrame::new(self.channels()),
        }
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut out = io::BufWriter::new(out);
        out.write_all(MAGIC)?;
        out.write_all(&self.header.version.to_le_bytes())?;
        out.write_all(&self.header.step_ms.to_le_bytes())?;
        out.write_all(&self.header.channels.to_le_bytes())?;
        out.write_all(&self.header.seed.to_le_bytes())?;
        out.write_all(&self.header.duration_steps.to_le_bytes())?;
        let mut buf = Vec::with_capacity(16);
        for t in 0..self.header.duration_steps {
            let spikes = self.spikes_at(t);
            buf.clear();
            write_varint(&mut buf, spikes.len() as u64);
            for &c in spikes {
                write_varint(&mut buf, u64::from(c));
            }
            out.write_all(&buf)?;
        }
        out.write_all(&(self.events.len() as u64).to_le_bytes())?;
        for e in &self.events {
            let kind: u8 = match e.kind {
                EventKind::Reward => 0,
                EventKind::Punishment => 1,
            };
            out.write_all(&[kind])?;
            out.write_all(&e.step.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = io::BufReader::new(input);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an episode record (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported record version {version}")));
        }
        let step_ms = read_u32(&mut r)?;
        let channels = read_u32(&mut r)?;
        let seed = read_u64(&mut r)?;
        let duration_steps = read_u64(&mut r)?;
        if channels == 0 || channels > u32::from(u16::MAX) + 1 {
            return Err(Error::Format(format!("bad channel count {channels}")));
        }
        let mut b = RecordBuilder::new(channels as usize, seed);
        b.header.step_ms = step_ms;
        let mut scratch = Vec::new();
        for _ in 0..duration_steps {
            let n = read_varint(&mut r)?;
            if n > u64::from(channels) {
                return Err(Error::Format(format!("{n} spikes in one step")));
            }
            scratch.clear();
            for _ in 0..n {
                let c = read_varint(&mut r)?;
                if c >= u64::from(channels) {
                    return Err(Error::Format(format!("channel {c} out of range")));
                }
                if scratch.last().is_some_and(|&p| p as u64 >= c) {
                    return Err(Error::Format("channel indices not ascending".into()));
                }
                scratch.push(c as usize);
            }
            b.push_step(&scratch);
        }
        let count = read_u64(&mut r)?;
        for _ in 0..count {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind).map_err(truncated)?;
            let kind = match kind[0] {
                0 => EventKind::Reward,
                1 => EventKind::Punishment,
                k => return Err(Error::Format(format!("unknown event kind {k}"))),
            };
            let step = read_u64(&mut r)?;
            b.push_event(EnvEvent { kind, step })?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after event table".into()));
        }
        b.finish()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }

    /// Writes one CSV row per step that carries spikes or an event:
    /// `step,channels,event` with channels separated by spaces.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = io::BufWriter::new(out);
        writeln!(out, "step,channels,event")?;
        let mut ev = self.events.iter().peekable();
        for t in 0..self.header.duration_steps {
            let spikes = self.spikes_at(t);
            let event = match ev.peek() {
                Some(e) if e.step == t => {
                    let e = ev.next().unwrap();
                    match e.kind {
                        EventKind::Reward => "reward",
                        EventKind::Punishment => "punishment",
                    }
                }
                _ => "",
            };
            if spikes.is_empty() && event.is_empty() {
                continue;
            }
            let chans: Vec<String> = spikes.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{t},{},{event}", chans.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Replay cursor over a record. Reuses one frame buffer.
pub struct Frames<'a> {
    record: &'a EpisodeRecord,
    step: u64,
    next_event: usize,
    frame: InputFrame,
}

impl Frames<'_> {
    /// Next `(step, frame)`, or `None` at the end of the record.
    pub fn next_frame(&mut self) -> Option<(u64, &InputFrame)> {
        let t = self.step;
        if t >= self.record.duration_steps() {
            return None;
        }
        self.frame.clear();
        for &c in self.record.spikes_at(t) {
            self.frame.set(c as usize);
        }
        let events = &self.record.events;
        while self.next_event < events.len() && events[self.next_event].step < t {
            self.next_event += 1;
        }
        if let Some(e) = events.get(self.next_event) {
            if e.step == t && e.kind == EventKind::Reward {
                self.frame.dopamine = true;
            }
        }
        self.step += 1;
        Some((t, &self.frame))
    }
}

pub struct RecordBuilder {
    header: RecordHeader,
    offsets: Vec<usize>,
    spikes: Vec<u16>,
    events: Vec<EnvEvent>,
}

impl RecordBuilder {
    pub fn new(channels: usize, seed: u64) -> Self {
        Self {
            header: RecordHeader {
                version: VERSION,
                step_ms: 1,
                channels: channels as u32,
                seed,
                duration_steps: 0,
            },
            offsets: vec![0],
            spikes: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.header.duration_steps
    }

    /// Appends the next step. Channels must be ascending and in range.
    pub fn push_step(&mut self, channels: &[usize]) {
        debug_assert!(channels.windows(2).all(|w| w[0] < w[1]));
        self.spikes.extend(channels.iter().map(|&c| {
            assert!(c < self.header.channels as usize, "channel {c} out of range");
            c as u16
        }));
        self.offsets.push(self.spikes.len());
        self.header.duration_steps += 1;
    }

    pub fn push_frame(&mut self, frame: &InputFrame) {
        self.spikes.extend(frame.active().map(|c| c as u16));
        self.offsets.push(self.spikes.len());
        self.header.duration_steps += 1;
    }

    /// Events must arrive in strictly increasing step order.
    pub fn push_event(&mut self, event: EnvEvent) -> Result<()> {
        if self.events.last().is_some_and(|e| e.step >= event.step) {
            return Err(Error::Format(format!(
                "event at step {} out of order or duplicated",
                event.step
            )));
        }
        self.events.push(event);
        Ok(())
    }

    pub fn finish(self) -> Result<EpisodeRecord> {
        if let Some(e) = self.events.last() {
            if e.step >= self.header.duration_steps {
                return Err(Error::Format(format!(
                    "event at step {} beyond record end {}",
                    e.step, self.header.duration_steps
                )));
            }
        }
        Ok(EpisodeRecord {
            header: self.header,
            offsets: self.offsets,
            spikes: self.spikes,
            events: self.events,
        })
    }
}

/// Runs the seeded pong arena with the chaotic racket and records encoded
/// spikes and events. A reward at step `t` sets the dopamine flag of frame `t`.
pub fn record_pong(duration_steps: u64, seed: u64, layout: EncoderLayout, clock: SpikeClock) -> EpisodeRecord {
    record_pong_with(duration_steps, seed, RacketParams::default(), layout, clock)
}

pub fn record_pong_with(
    duration_steps: u64,
    seed: u64,
    racket: RacketParams,
    layout: EncoderLayout,
    clock: SpikeClock,
) -> EpisodeRecord {
    let mut env = PongEnv::with_racket(seed, racket);
    let mut encoder = SpikeEncoder::new(layout, clock);
    let mut b = RecordBuilder::new(encoder.layout.channels(), seed);
    let mut frame = InputFrame::new(encoder.layout.channels());
    for t in 0..duration_steps {
        if let Some(ev) = env.step() {
            b.push_event(ev).expect("environment emits one event per step at most");
        }
        encoder.encode_into(env.state(), t, &mut frame);
        b.push_frame(&frame);
    }
    b.finish().expect("events lie within the recorded span")
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("record truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn read_varint<R: Read>(r: &mut R) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let mut b = [0u8; 1];
        r.read_exact(&mut b).map_err(truncated)?;
        v |= u64::from(b[0] & 0x7f) << shift;
        if b[0] & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::Format("varint too long".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EpisodeRecord {
        let mut b = EpisodeRecord::builder(5, 42);
        b.push_step(&[0, 3]);
        b.push_step(&[]);
        b.push_step(&[4]);
        b.push_event(EnvEvent {
            kind: EventKind::Reward,
            step: 1,
        })
        .unwrap();
        b.push_event(EnvEvent {
            kind: EventKind::Punishment,
            step: 2,
        })
        .unwrap();
        b.finish().unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let rec = tiny();
        let mut buf = Vec::new();
        rec.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SPKC");
        let back = EpisodeRecord::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, rec);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn frames_carry_dopamine_on_rewards_only() {
        let rec = tiny();
        let mut it = rec.frames();
        let (t, f) = it.next_frame().unwrap();
        assert_eq!((t, f.active().collect::<Vec<_>>(), f.dopamine), (0, vec![0, 3], false));
        let (_, f) = it.next_frame().unwrap();
        assert!(f.dopamine && f.count() == 0);
        let (_, f) = it.next_frame().unwrap();
        assert!(!f.dopamine);
        assert!(it.next_frame().is_none());
    }

    #[test]
    fn rejects_corrupt_input() {
        let rec = tiny();
        let mut buf = Vec::new();
        rec.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(EpisodeRecord::read_from(bad.as_slice()).is_err());
        assert!(EpisodeRecord::read_from(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(EpisodeRecord::read_from(extra.as_slice()).is_err());
    }

    #[test]
    fn events_must_be_ordered_and_in_range() {
        let mut b = EpisodeRecord::builder(2, 0);
        b.push_step(&[]);
        b.push_event(EnvEvent {
            kind: EventKind::Reward,
            step: 0,
        })
        .unwrap();
        assert!(b
            .push_event(EnvEvent {
                kind: EventKind::Reward,
                step: 0
            })
            .is_err());
        b.push_event(EnvEvent {
            kind: EventKind::Reward,
            step: 5,
        })
        .unwrap();
        assert!(b.finish().is_err());
    }

    #[test]
    fn varint_edges() {
        for v in [0u64, 1, 127, 128, 300, u32::MAX as u64, u64::MAX] {
            let mut buf = Vec::new();
            write_varint(&mut buf, v);
            assert_eq!(read_varint(&mut buf.as_slice()).unwrap(), v);
        }
    }

    #[test]
    fn pong_record_matches_environment() {
        let rec = record_pong(60_000, 4, EncoderLayout::default(), SpikeClock::Shared);
        assert_eq!(rec.channels(), 133);
        let mut env = PongEnv::new(4);
        let mut rewards = Vec::new();
        for _ in 0..60_000 {
            if let Some(EnvEvent {
                kind: EventKind::Reward,
                step,
            }) = env.step()
            {
                rewards.push(step);
            }
        }
        assert_eq!(rec.reward_steps(), rewards);
        for t in 0..60_000 {
            let n = rec.spikes_at(t).len();
            if SpikeClock::shared_tick(t) {
                assert!(n == 5 || n == 6);
            } else {
                assert_eq!(n, 0);
            }
        }
    }
}
