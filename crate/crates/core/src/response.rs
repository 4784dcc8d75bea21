//! Serializer and parser for the `<think>…</think><answer>(x1, y1), (x2, y2)</answer>`
//! response format.
//!
//! Integer coordinates are bin indices and map to `k / (G - 1)`; decimal
//! coordinates (those containing a `.`) are already normalized. When the full
//! grammar fails but a coordinate pair pattern can still be found somewhere in
//! the text, the box is salvaged and `format_ok` stays false.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

/// Reasoning text the toy policy emits in place of generated reasoning.
pub const THINK_PLACEHOLDER: &str = "locate the referred object";

const INSTRUCTION: &str = "First output the thinking process in <think> </think> tags and then output the bounding box in <answer> </answer> tags.";

/// Prompt suffix appended to every question during the RL stage.
pub fn canonical_instruction() -> &'static str {
    INSTRUCTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think_text: String,
    pub bbox: Option<BBox>,
    pub format_ok: bool,
}

impl ParsedResponse {
    pub fn garbage() -> Self {
        Self {
            think_text: String::new(),
            bbox: None,
            format_ok: false,
        }
    }
}

/// Renders four bin indices into the response template. With `corrupt` set the
/// closing answer tag is dropped.
pub fn render(think_text: &str, bins: [usize; 4], corrupt: bool) -> Result<String> {
    if think_text.contains(THINK_CLOSE) {
        return Err(Error::UnserializableThink);
    }
    let [x1, y1, x2, y2] = bins;
    let mut out =
        format!("{THINK_OPEN}{think_text}{THINK_CLOSE}{ANSWER_OPEN}({x1}, {y1}), ({x2}, {y2})");
    if !corrupt {
        out.push_str(ANSWER_CLOSE);
    }
    Ok(out)
}

/// Bin index to normalized coordinate.
pub fn bin_to_coord(bin: usize, bins: usize) -> f64 {
    bin as f64 / (bins - 1) as f64
}

/// Nearest bin for a normalized coordinate; exact ties go to the lower bin.
pub fn coord_to_bin(coord: f64, bins: usize) -> usize {
    let scaled = coord.clamp(0.0, 1.0) * (bins - 1) as f64;
    let lower = scaled.floor();
    let bin = if scaled - lower > 0.5 {
        lower + 1.0
    } else {
        lower
    };
    (bin as usize).min(bins - 1)
}

pub fn box_to_bins(b: &BBox, bins: usize) -> [usize; 4] {
    b.to_array().map(|c| coord_to_bin(c, bins))
}

pub fn bins_to_box(b: [usize; 4], bins: usize) -> BBox {
    BBox::new(
        bin_to_coord(b[0], bins),
        bin_to_coord(b[1], bins),
        bin_to_coord(b[2], bins),
        bin_to_coord(b[3], bins),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Number {
    Bin(u64),
    Decimal(f64),
}

impl Number {
    // None when the value falls outside the unit square.
    fn to_coord(self, bins: usize) -> Option<f64> {
        match self {
            Number::Bin(k) if (k as usize) < bins => Some(bin_to_coord(k as usize, bins)),
            Number::Bin(_) => None,
            Number::Decimal(v) if (0.0..=1.0).contains(&v) => Some(v),
            Number::Decimal(_) => None,
        }
    }

    fn clamped(self, bins: usize) -> f64 {
        match self {
            Number::Bin(k) => bin_to_coord((k as usize).min(bins - 1), bins),
            Number::Decimal(v) => v.clamp(0.0, 1.0),
        }
    }
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str, pos: usize) -> Self {
        Self {
            s: s.as_bytes(),
            pos,
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.s[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn digits(&mut self) -> Option<&'a str> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            // ASCII digits are valid UTF-8.
            std::str::from_utf8(&self.s[start..self.pos]).ok()
        }
    }

    fn number(&mut self) -> Option<Number> {
        let int = self.digits()?;
        let save = self.pos;
        if self.eat(".") {
            if let Some(frac) = self.digits() {
                return format!("{int}.{frac}").parse().ok().map(Number::Decimal);
            }
            self.pos = save;
        }
        int.parse().ok().map(Number::Bin)
    }

    // `(a, b), (c, d)`; `lenient` allows arbitrary whitespace around tokens.
    fn pair_of_points(&mut self, lenient: bool) -> Option<[Number; 4]> {
        let sep = |c: &mut Self, lit: &str| -> bool {
            if lenient {
                c.skip_ws();
                let ok = c.eat(lit.trim());
                c.skip_ws();
                ok
            } else {
                c.eat(lit)
            }
        };
        let mut out = [Number::Bin(0); 4];
        if !sep(self, "(") {
            return None;
        }
        out[0] = self.number()?;
        if !sep(self, ", ") {
            return None;
        }
        out[1] = self.number()?;
        if !sep(self, ")") || !sep(self, ", ") || !sep(self, "(") {
            return None;
        }
        out[2] = self.number()?;
        if !sep(self, ", ") {
            return None;
        }
        out[3] = self.number()?;
        if !sep(self, ")") {
            return None;
        }
        Some(out)
    }
}

fn strict_parse(text: &str, bins: usize) -> Option<(String, BBox)> {
    let body = text.strip_prefix(THINK_OPEN)?;
    let close = body.find(THINK_CLOSE)?;
    let think = &body[..close];
    let offset = THINK_OPEN.len() + close + THINK_CLOSE.len();
    let mut cur = Cursor::new(text, offset);
    if !cur.eat(ANSWER_OPEN) {
        return None;
    }
    let nums = cur.pair_of_points(false)?;
    if !cur.eat(ANSWER_CLOSE) {
        return None;
    }
    cur.skip_ws();
    if cur.pos != cur.s.len() {
        return None;
    }
    let c: Vec<f64> = nums
        .iter()
        .map(|n| n.to_coord(bins))
        .collect::<Option<_>>()?;
    Some((think.to_string(), BBox::new(c[0], c[1], c[2], c[3])))
}

fn salvage(text: &str, bins: usize) -> Option<BBox> {
    text.match_indices('(').find_map(|(i, _)| {
        let mut cur = Cursor::new(text, i);
        cur.pair_of_points(true).map(|n| {
            BBox::new(
                n[0].clamped(bins),
                n[1].clamped(bins),
                n[2].clamped(bins),
                n[3].clamped(bins),
            )
        })
    })
}

fn salvage_think(text: &str) -> String {
    text.find(THINK_OPEN)
        .and_then(|start| {
            let rest = &text[start + THINK_OPEN.len()..];
            rest.find(THINK_CLOSE).map(|end| rest[..end].to_string())
        })
        .unwrap_or_default()
}

/// Parses a response string. Never fails; malformed inputs yield
/// `format_ok = false`.
pub fn parse(text: &str, bins: usize) -> ParsedResponse {
    debug_assert!(bins >= 2);
    if let Some((think_text, bbox)) = strict_parse(text, bins) {
        return ParsedResponse {
            think_text,
            bbox: Some(bbox),
            format_ok: true,
        };
    }
    ParsedResponse {
        think_text: salvage_think(text),
        bbox: salvage(text, bins),
        format_ok: false,
    }
}
