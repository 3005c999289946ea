//! Pulse programs: data model, `.pp` text format and interval compilation.
//!
//! Grammar, one directive per line, `#` to end of line is a comment:
//!
//! ```text
//! name <text>
//! total <µs>
//! sample every=<µs>
//! seg <CHANNEL> t=<µs> dur=<µs> f=<MHz> amp=<MHz> ph=<rad>
//! kick t=<µs> ph=<rad>
//! ```
//!
//! Channels are `MW`, `MW<n>` (electron drive) or `RF`, `RF<n>` (nuclear
//! drive). `amp` is the Rabi frequency of a transition whose drive matrix
//! element is 1/2; the engine rescales by the actual element. `kick` is an
//! instantaneous phase applied to the nuclear-`1` qubit levels. Phases are
//! stored modulo 2π in [0, 2π).

use std::f64::consts::TAU;
use std::fmt;

use thiserror::Error;

use crate::model::DriveKind;

/// Boundary tolerance for overlap and partition checks, µs.
pub const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("unknown channel `{0}` (expected MW, MW<n>, RF or RF<n>)")]
    UnknownChannel(String),
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("start time must be non-negative, got {0}")]
    NegativeStart(f64),
    #[error("amplitude must be non-negative, got {0}")]
    NegativeAmplitude(f64),
    #[error("carrier must be positive, got {0}")]
    NonPositiveCarrier(f64),
    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),
    #[error("segments {first} and {second} overlap on channel {channel}")]
    Overlap {
        channel: String,
        first: usize,
        second: usize,
    },
    #[error("total duration {total} is shorter than the last segment end {end}")]
    TotalTooShort { total: f64, end: f64 },
    #[error("kick at {time} lies outside [0, {total}]")]
    KickOutOfRange { time: f64, total: f64 },
    #[error("sample step must be positive, got {0}")]
    BadSampleStep(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error(transparent)]
    Invalid(#[from] ProgramError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

/// Map a phase into [0, 2π).
pub fn canonical_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Channel(String);

impl Channel {
    pub fn new(name: &str) -> Result<Self, ProgramError> {
        let ok = ["MW", "RF"].iter().any(|prefix| {
            name.strip_prefix(prefix)
                .is_some_and(|rest| rest.chars().all(|c| c.is_ascii_digit()))
        });
        if ok {
            Ok(Channel(name.to_string()))
        } else {
            Err(ProgramError::UnknownChannel(name.to_string()))
        }
    }

    pub fn mw() -> Self {
        Channel("MW".into())
    }

    pub fn rf() -> Self {
        Channel("RF".into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn kind(&self) -> DriveKind {
        if self.0.starts_with("MW") {
            DriveKind::Electron
        } else {
            DriveKind::Nuclear
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A rectangular drive on one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub channel: Channel,
    /// µs
    pub t_start: f64,
    /// µs
    pub duration: f64,
    /// MHz
    pub carrier: f64,
    /// Rabi frequency ν1 for a matrix element of 1/2, MHz.
    pub amplitude: f64,
    /// rad, in [0, 2π)
    pub phase: f64,
}

impl Segment {
    pub fn new(
        channel: Channel,
        t_start: f64,
        duration: f64,
        carrier: f64,
        amplitude: f64,
        phase: f64,
    ) -> Result<Self, ProgramError> {
        for (name, v) in [
            ("t", t_start),
            ("dur", duration),
            ("f", carrier),
            ("amp", amplitude),
            ("ph", phase),
        ] {
            if !v.is_finite() {
                return Err(ProgramError::NonFinite(name));
            }
        }
        if t_start < 0.0 {
            return Err(ProgramError::NegativeStart(t_start));
        }
        if duration <= 0.0 {
            return Err(ProgramError::NonPositiveDuration(duration));
        }
        if carrier <= 0.0 {
            return Err(ProgramError::NonPositiveCarrier(carrier));
        }
        if amplitude < 0.0 {
            return Err(ProgramError::NegativeAmplitude(amplitude));
        }
        Ok(Self {
            channel,
            t_start,
            duration,
            carrier,
            amplitude,
            phase: canonical_phase(phase),
        })
    }

    pub fn end(&self) -> f64 {
        self.t_start + self.duration
    }
}

/// Instantaneous phase kick on the nuclear qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct Kick {
    pub time: f64,
    pub phase: f64,
}

impl Kick {
    pub fn new(time: f64, phase: f64) -> Result<Self, ProgramError> {
        if !time.is_finite() {
            return Err(ProgramError::NonFinite("t"));
        }
        if !phase.is_finite() {
            return Err(ProgramError::NonFinite("ph"));
        }
        if time < 0.0 {
            return Err(ProgramError::NegativeStart(time));
        }
        Ok(Self {
            time,
            phase: canonical_phase(phase),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseProgram {
    pub name: String,
    pub segments: Vec<Segment>,
    pub kicks: Vec<Kick>,
    /// µs
    pub total_duration: f64,
    /// Observable sampling step, µs. `None` records only the endpoints.
    pub sample_every: Option<f64>,
}

impl PulseProgram {
    pub fn new(name: impl Into<String>, total_duration: f64) -> Self {
        Self {
            name: name.into(),
            segments: Vec::new(),
            kicks: Vec::new(),
            total_duration,
            sample_every: None,
        }
    }

    pub fn with_sampling(mut self, step: f64) -> Self {
        self.sample_every = Some(step);
        self
    }

    pub fn push_segment(&mut self, seg: Segment) -> Result<(), ProgramError> {
        self.segments.push(seg);
        if let Err(e) = self.check_overlaps() {
            self.segments.pop();
            return Err(e);
        }
        if self.total_duration < self.max_end() - TIME_EPS {
            self.total_duration = self.max_end();
        }
        Ok(())
    }

    pub fn push_kick(&mut self, kick: Kick) -> Result<(), ProgramError> {
        if kick.time > self.total_duration + TIME_EPS {
            return Err(ProgramError::KickOutOfRange {
                time: kick.time,
                total: self.total_duration,
            });
        }
        self.kicks.push(kick);
        Ok(())
    }

    pub fn max_end(&self) -> f64 {
        self.segments.iter().map(Segment::end).fold(0.0, f64::max)
    }

    fn check_overlaps(&self) -> Result<(), ProgramError> {
        let mut order: Vec<usize> = (0..self.segments.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&self.segments[a], &self.segments[b]);
            sa.channel
                .cmp(&sb.channel)
                .then(sa.t_start.total_cmp(&sb.t_start))
        });
        for w in order.windows(2) {
            let (a, b) = (&self.segments[w[0]], &self.segments[w[1]]);
            if a.channel == b.channel && b.t_start < a.end() - TIME_EPS {
                return Err(ProgramError::Overlap {
                    channel: a.channel.to_string(),
                    first: w[0].min(w[1]),
                    second: w[0].max(w[1]),
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        if !self.total_duration.is_finite() {
            return Err(ProgramError::NonFinite("total"));
        }
        self.check_overlaps()?;
        let end = self.max_end();
        if self.total_duration < end - TIME_EPS {
            return Err(ProgramError::TotalTooShort {
                total: self.total_duration,
                end,
            });
        }
        if let Some(k) = self
            .kicks
            .iter()
            .find(|k| k.time > self.total_duration + TIME_EPS)
        {
            return Err(ProgramError::KickOutOfRange {
                time: k.time,
                total: self.total_duration,
            });
        }
        if let Some(step) = self.sample_every {
            if !(step.is_finite() && step > 0.0) {
                return Err(ProgramError::BadSampleStep(step));
            }
        }
        Ok(())
    }

    /// Observation times: multiples of the sampling step up to the total
    /// duration, always including both endpoints.
    pub fn sample_points(&self) -> Vec<f64> {
        let total = self.total_duration;
        let mut pts = vec![0.0];
        if let Some(step) = self.sample_every {
            let n = ((total / step) + 1e-9).floor() as usize;
            pts.extend((1..=n).map(|k| k as f64 * step));
        }
        if total - pts.last().copied().unwrap_or(0.0) > TIME_EPS {
            pts.push(total);
        } else if let Some(last) = pts.last_mut() {
            if total > 0.0 {
                *last = last.min(total);
            }
        }
        pts
    }
}

fn fmt_num(x: f64) -> String {
    // shortest representation that parses back to the same f64
    format!("{x}")
}

/// Canonical text form; `parse_program` of the output reproduces `program`.
pub fn serialize(program: &PulseProgram) -> String {
    let mut out = String::new();
    out.push_str(&format!("name {}\n", program.name));
    out.push_str(&format!("total {}\n", fmt_num(program.total_duration)));
    if let Some(step) = program.sample_every {
        out.push_str(&format!("sample every={}\n", fmt_num(step)));
    }
    for s in &program.segments {
        out.push_str(&format!(
            "seg {} t={} dur={} f={} amp={} ph={}\n",
            s.channel,
            fmt_num(s.t_start),
            fmt_num(s.duration),
            fmt_num(s.carrier),
            fmt_num(s.amplitude),
            fmt_num(s.phase)
        ));
    }
    for k in &program.kicks {
        out.push_str(&format!("kick t={} ph={}\n", fmt_num(k.time), fmt_num(k.phase)));
    }
    out
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    tokens
}

struct LineParser {
    line: usize,
}

impl LineParser {
    fn err(&self, column: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column,
            kind: ParseErrorKind::Syntax(msg.into()),
        }
    }

    fn invalid(&self, column: usize, e: ProgramError) -> ParseError {
        ParseError {
            line: self.line,
            column,
            kind: ParseErrorKind::Invalid(e),
        }
    }

    fn number(&self, tok: &Token<'_>, text: &str) -> Result<f64, ParseError> {
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(tok.column, format!("invalid number `{text}`")))
    }

    /// Parse `key=value` fields, requiring exactly the keys in `wanted`.
    fn fields(
        &self,
        tokens: &[Token<'_>],
        wanted: &[&'static str],
        directive_col: usize,
    ) -> Result<Vec<(f64, usize)>, ParseError> {
        let mut values: Vec<Option<(f64, usize)>> = vec![None; wanted.len()];
        for tok in tokens {
            let (k, v) = tok
                .text
                .split_once('=')
                .ok_or_else(|| self.err(tok.column, format!("expected key=value, found `{}`", tok.text)))?;
            let slot = wanted
                .iter()
                .position(|w| *w == k)
                .ok_or_else(|| self.err(tok.column, format!("unknown field `{k}`")))?;
            if values[slot].is_some() {
                return Err(self.err(tok.column, format!("duplicate field `{k}`")));
            }
            values[slot] = Some((self.number(tok, v)?, tok.column));
        }
        values
            .into_iter()
            .zip(wanted)
            .map(|(v, k)| v.ok_or_else(|| self.err(directive_col, format!("missing field `{k}`"))))
            .collect()
    }
}

pub fn parse_program(text: &str) -> Result<PulseProgram, ParseError> {
    let mut name: Option<String> = None;
    let mut total: Option<(f64, usize)> = None;
    let mut sample: Option<f64> = None;
    let mut segments: Vec<(Segment, usize)> = Vec::new();
    let mut kicks: Vec<(Kick, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let p = LineParser { line: idx + 1 };
        let content = raw.split('#').next().unwrap_or("");
        let tokens = tokenize(content);
        let Some(head) = tokens.first() else { continue };
        let rest = &tokens[1..];
        match head.text {
            "name" => {
                if name.is_some() {
                    return Err(p.err(head.column, "duplicate `name` directive"));
                }
                if rest.is_empty() {
                    return Err(p.err(head.column, "`name` needs a value"));
                }
                let first = rest[0].column;
                let text: String = content.chars().skip(first - 1).collect();
                name = Some(text.trim().to_string());
            }
            "total" => {
                if total.is_some() {
                    return Err(p.err(head.column, "duplicate `total` directive"));
                }
                let [tok] = rest else {
                    return Err(p.err(head.column, "`total` takes exactly one value"));
                };
                let v = p.number(tok, tok.text)?;
                if v < 0.0 {
                    return Err(p.err(tok.column, "total duration must be non-negative"));
                }
                total = Some((v, idx + 1));
            }
            "sample" => {
                if sample.is_some() {
                    return Err(p.err(head.column, "duplicate `sample` directive"));
                }
                let vals = p.fields(rest, &["every"], head.column)?;
                let (step, col) = vals[0];
                if step <= 0.0 {
                    return Err(p.invalid(col, ProgramError::BadSampleStep(step)));
                }
                sample = Some(step);
            }
            "seg" => {
                let Some(ch_tok) = rest.first() else {
                    return Err(p.err(head.column, "`seg` needs a channel"));
                };
                let channel = Channel::new(ch_tok.text).map_err(|e| p.invalid(ch_tok.column, e))?;
                let vals = p.fields(&rest[1..], &["t", "dur", "f", "amp", "ph"], head.column)?;
                let seg = Segment::new(channel, vals[0].0, vals[1].0, vals[2].0, vals[3].0, vals[4].0)
                    .map_err(|e| {
                        let col = match e {
                            ProgramError::NegativeStart(_) => vals[0].1,
                            ProgramError::NonPositiveDuration(_) => vals[1].1,
                            ProgramError::NonPositiveCarrier(_) => vals[2].1,
                            ProgramError::NegativeAmplitude(_) => vals[3].1,
                            _ => head.column,
                        };
                        p.invalid(col, e)
                    })?;
                segments.push((seg, idx + 1));
            }
            "kick" => {
                let vals = p.fields(rest, &["t", "ph"], head.column)?;
                let kick = Kick::new(vals[0].0, vals[1].0).map_err(|e| p.invalid(vals[0].1, e))?;
                kicks.push((kick, idx + 1));
            }
            other => {
                return Err(p.err(head.column, format!("unknown directive `{other}`")));
            }
        }
    }

    let max_end = segments.iter().map(|(s, _)| s.end()).fold(0.0, f64::max);
    let max_kick = kicks.iter().map(|(k, _)| k.time).fold(0.0, f64::max);
    let total_duration = match total {
        Some((t, line)) => {
            if t < max_end - TIME_EPS {
                return Err(ParseError {
                    line,
                    column: 1,
                    kind: ProgramError::TotalTooShort { total: t, end: max_end }.into(),
                });
            }
            if let Some((k, kline)) = kicks.iter().find(|(k, _)| k.time > t + TIME_EPS) {
                return Err(ParseError {
                    line: *kline,
                    column: 1,
                    kind: ProgramError::KickOutOfRange { time: k.time, total: t }.into(),
                });
            }
            t
        }
        None => max_end.max(max_kick),
    };

    let mut program = PulseProgram {
        name: name.unwrap_or_else(|| "unnamed".to_string()),
        segments: Vec::with_capacity(segments.len()),
        kicks: kicks.iter().map(|(k, _)| k.clone()).collect(),
        total_duration,
        sample_every: sample,
    };
    for (seg, line) in segments.iter() {
        program.segments.push(seg.clone());
        if let Err(ProgramError::Overlap { channel, first, second }) = program.check_overlaps() {
            return Err(ParseError {
                line: *line,
                column: 1,
                kind: ProgramError::Overlap {
                    channel,
                    first: segments[first].1,
                    second: segments[second].1,
                }
                .into(),
            });
        }
    }
    Ok(program)
}

/// A drive active throughout a control interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveDrive {
    pub channel: Channel,
    pub carrier: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub drives: Vec<ActiveDrive>,
}

impl ControlInterval {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn is_free(&self) -> bool {
        self.drives.is_empty()
    }
}

/// Split [0, total] at every segment boundary; the drive set is constant on
/// each piece.
pub fn compile_intervals(program: &PulseProgram) -> Vec<ControlInterval> {
    let total = program.total_duration;
    let mut cuts = vec![0.0, total];
    for s in &program.segments {
        cuts.push(s.t_start);
        cuts.push(s.end().min(total));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|b, a| (*b - *a).abs() <= TIME_EPS);

    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 - t0 <= TIME_EPS {
            continue;
        }
        let mid = 0.5 * (t0 + t1);
        let drives = program
            .segments
            .iter()
            .filter(|s| s.t_start <= mid && mid < s.end())
            .map(|s| ActiveDrive {
                channel: s.channel.clone(),
                carrier: s.carrier,
                amplitude: s.amplitude,
                phase: s.phase,
            })
            .collect();
        out.push(ControlInterval {
            t_start: t0,
            t_end: t1,
            drives,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_single_mw_segment() {
        let p = parse_program("seg MW t=0 dur=0.1 f=9660.0 amp=5.0 ph=0\n").unwrap();
        assert_eq!(p.segments.len(), 1);
        let s = &p.segments[0];
        assert_eq!(s.channel, Channel::mw());
        assert_eq!(s.duration, 0.1);
        assert_eq!(s.amplitude, 5.0);
        assert_eq!(s.carrier, 9660.0);
        assert_eq!(p.total_duration, 0.1);
        assert_eq!(s.channel.kind(), DriveKind::Electron);
    }

    #[test]
    fn dual_rf_needs_two_channels() {
        let ok = "seg RF t=0 dur=50 f=22.598 amp=0.004 ph=0\nseg RF2 t=0 dur=50 f=24.782 amp=0.004 ph=0\n";
        let p = parse_program(ok).unwrap();
        assert_eq!(p.segments.len(), 2);
        assert_eq!(p.segments[1].channel.kind(), DriveKind::Nuclear);

        let bad = "seg RF t=0 dur=50 f=22.598 amp=0.004 ph=0\nseg RF t=10 dur=50 f=24.782 amp=0.004 ph=0\n";
        let err = parse_program(bad).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(matches!(err.kind, ParseErrorKind::Invalid(ProgramError::Overlap { first: 1, second: 2, .. })));
    }

    #[test]
    fn rejects_negative_duration_with_position() {
        let err = parse_program("name x\nseg MW t=0 dur=-1 f=9660 amp=1 ph=0\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.column, 12);
        assert!(matches!(err.kind, ParseErrorKind::Invalid(ProgramError::NonPositiveDuration(_))));
    }

    #[test]
    fn rejects_bad_input_with_line_numbers() {
        let cases = [
            ("seg XY t=0 dur=1 f=1 amp=1 ph=0", 1, 5),
            ("\n\nseg MW t=0 dur=1 f=1 amp=1", 3, 1),
            ("total 1\nfoo bar", 2, 1),
            ("seg MW t=0 dur=1 f=abc amp=1 ph=0", 1, 18),
            ("seg MW t=0 dur=1 f=1 amp=-2 ph=0", 1, 22),
            ("total 1\nseg MW t=0 dur=2 f=1 amp=1 ph=0", 1, 1),
            ("total 1\nkick t=2 ph=1", 2, 1),
            ("seg MW t=0 t=1 dur=1 f=1 amp=1 ph=0", 1, 12),
            ("sample every=0", 1, 8),
        ];
        for (text, line, col) in cases {
            let err = parse_program(text).unwrap_err();
            assert_eq!((err.line, err.column), (line, col), "{text}: {err}");
            assert!(err.to_string().starts_with(&format!("line {line}")));
        }
    }

    #[test]
    fn empty_program_is_header_only() {
        let p = PulseProgram::new("empty", 0.0);
        let text = serialize(&p);
        assert_eq!(text, "name empty\ntotal 0\n");
        assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn phase_is_canonicalized() {
        let s = Segment::new(Channel::mw(), 0.0, 1.0, 1.0, 1.0, TAU + 0.1).unwrap();
        assert!((s.phase - 0.1).abs() < 1e-12);
        let mut p = PulseProgram::new("x", 1.0);
        p.push_segment(s).unwrap();
        let text = serialize(&p);
        let back = parse_program(&text).unwrap();
        assert!((back.segments[0].phase - 0.1).abs() < 1e-12);
        assert_eq!(canonical_phase(-1e-18), 0.0);
        assert!((canonical_phase(-0.5) - (TAU - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn comments_and_names() {
        let text = "# header\nname  fig 2 style  # trailing\ntotal 10 # µs\nsample every=0.5\n";
        let p = parse_program(text).unwrap();
        assert_eq!(p.name, "fig 2 style");
        assert_eq!(p.total_duration, 10.0);
        assert_eq!(p.sample_every, Some(0.5));
        assert_eq!(p.sample_points().len(), 21);
    }

    fn rf_with_kicks(kicks: usize) -> PulseProgram {
        let mut p = PulseProgram::new("rf-kicks", 60.0).with_sampling(0.5);
        p.push_segment(Segment::new(Channel::mw(), 0.0, 0.5, 9673.9, 1.0, 0.0).unwrap())
            .unwrap();
        p.push_segment(Segment::new(Channel::rf(), 1.0, 50.0, 22.56, 0.0028, 0.0).unwrap())
            .unwrap();
        for k in 0..kicks {
            let t = 5.0 + 10.0 * k as f64;
            p.push_segment(Segment::new(Channel::mw(), t, 0.1055, 9665.8, 5.2, 0.0).unwrap())
                .unwrap();
        }
        p
    }

    #[test]
    fn rf_with_kicks_round_trip() {
        let p = rf_with_kicks(4);
        assert_eq!(parse_program(&serialize(&p)).unwrap(), p);
    }

    #[test]
    fn intervals_single_segment() {
        let mut p = PulseProgram::new("x", 0.2);
        p.push_segment(Segment::new(Channel::mw(), 0.0, 0.1, 1.0, 1.0, 0.0).unwrap())
            .unwrap();
        let iv = compile_intervals(&p);
        assert_eq!(iv.len(), 2);
        assert_eq!((iv[0].t_start, iv[0].t_end), (0.0, 0.1));
        assert_eq!(iv[0].drives.len(), 1);
        assert!(iv[1].is_free());
        assert!((iv[1].t_end - 0.2).abs() < 1e-15);
    }

    #[test]
    fn intervals_rf_with_kick() {
        let mut p = PulseProgram::new("x", 50.0);
        p.push_segment(Segment::new(Channel::rf(), 0.0, 50.0, 22.5, 0.001, 0.0).unwrap())
            .unwrap();
        p.push_segment(Segment::new(Channel::mw(), 10.0, 0.1, 9660.0, 1.0, 0.0).unwrap())
            .unwrap();
        let iv = compile_intervals(&p);
        assert_eq!(iv.len(), 3);
        assert_eq!(iv[0].drives.len(), 1);
        assert_eq!(iv[1].drives.len(), 2);
        assert_eq!(iv[2].drives.len(), 1);
    }

    #[test]
    fn intervals_count_for_n_kicks() {
        // oracle: each kick strictly inside the drive adds two cut points
        for n in 0..6 {
            let mut p = PulseProgram::new("x", 100.0);
            p.push_segment(Segment::new(Channel::rf(), 0.0, 100.0, 22.5, 0.001, 0.0).unwrap())
                .unwrap();
            for k in 0..n {
                let t = 10.0 + 15.0 * k as f64;
                p.push_segment(Segment::new(Channel::mw(), t, 0.1, 9660.0, 1.0, 0.0).unwrap())
                    .unwrap();
            }
            assert_eq!(compile_intervals(&p).len(), 2 * n + 1);
        }
    }

    pub(crate) fn arb_program() -> impl Strategy<Value = PulseProgram> {
        let seg = (
            prop::sample::select(vec!["MW", "MW2", "RF", "RF2", "RF10"]),
            0.0f64..5.0,
            0.001f64..3.0,
            0.1f64..12000.0,
            0.0f64..50.0,
            -20.0f64..20.0,
        );
        (
            "[a-z][a-z0-9_]{0,12}",
            prop::collection::vec(seg, 0..8),
            prop::collection::vec((0.0f64..1.0, -10.0f64..10.0), 0..5),
            prop::option::of(0.001f64..2.0),
            0.0f64..3.0,
        )
            .prop_map(|(name, segs, kicks, sample, slack)| {
                let mut p = PulseProgram::new(name, 0.0);
                let mut cursor: std::collections::HashMap<&str, f64> = Default::default();
                for (ch, gap, dur, f, amp, ph) in segs {
                    let start = cursor.get(ch).copied().unwrap_or(0.0) + gap;
                    let s = Segment::new(Channel::new(ch).unwrap(), start, dur, f, amp, ph).unwrap();
                    cursor.insert(ch, s.end());
                    p.push_segment(s).unwrap();
                }
                p.total_duration = p.max_end() + slack;
                for (frac, ph) in kicks {
                    p.push_kick(Kick::new(frac * p.total_duration, ph).unwrap()).unwrap();
                }
                p.sample_every = sample;
                p
            })
    }

    proptest! {
        #[test]
        fn round_trip(p in arb_program()) {
            prop_assert!(p.validate().is_ok());
            let back = parse_program(&serialize(&p)).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn intervals_partition_timeline(p in arb_program()) {
            let iv = compile_intervals(&p);
            prop_assert!(iv.len() <= 2 * p.segments.len() + 1);
            if p.total_duration > TIME_EPS {
                prop_assert!(iv[0].t_start.abs() <= TIME_EPS);
                prop_assert!((iv.last().unwrap().t_end - p.total_duration).abs() <= TIME_EPS);
            }
            for w in iv.windows(2) {
                prop_assert!((w[1].t_start - w[0].t_end).abs() <= TIME_EPS);
            }
            for s in &p.segments {
                for edge in [s.t_start, s.end()] {
                    prop_assert!(
                        edge <= TIME_EPS
                            || (edge - p.total_duration).abs() <= TIME_EPS
                            || iv.iter().any(|i| (i.t_end - edge).abs() <= TIME_EPS)
                    );
                }
            }
        }
    }
}
