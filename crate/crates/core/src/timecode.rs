//! `HH:MM:SS.mmm` timecodes over integer milliseconds.

use crate::error::{Error, Result};

/// Formats milliseconds as `HH:MM:SS.mmm`. Hours widen past two digits.
pub fn format(ms: u64) -> String {
    let millis = ms % 1000;
    let total_secs = ms / 1000;
    let secs = total_secs % 60;
    let mins = (total_secs / 60) % 60;
    let hours = total_secs / 3600;
    format!("{hours:02}:{mins:02}:{secs:02}.{millis:03}")
}

/// Parses either a bare integer (milliseconds) or a timecode
/// `[H+:]MM:SS[.f{1,3}]`.
pub fn parse(text: &str) -> Result<u64> {
    let text = text.trim();
    let bad = || Error::Validation(format!("invalid timecode `{text}`"));
    if text.is_empty() {
        return Err(bad());
    }
    if text.bytes().all(|b| b.is_ascii_digit()) {
        return text.parse::<u64>().map_err(|_| bad());
    }

    let (clock, frac) = match text.split_once('.') {
        Some((c, f)) => (c, Some(f)),
        None => (text, None),
    };
    let parts: Vec<&str> = clock.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let num = |s: &str| -> Result<u64> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        s.parse::<u64>().map_err(|_| bad())
    };
    let (hours, mins, secs) = if parts.len() == 3 {
        (num(parts[0])?, num(parts[1])?, num(parts[2])?)
    } else {
        (0, num(parts[0])?, num(parts[1])?)
    };
    let two_digit_mins = parts.len() == 2 || parts[1].len() == 2;
    if mins >= 60 || secs >= 60 || parts[parts.len() - 1].len() != 2 || !two_digit_mins {
        return Err(bad());
    }
    let millis = match frac {
        None => 0,
        Some(f) if (1..=3).contains(&f.len()) => {
            let digits = num(f)?;
            digits * 10u64.pow(3 - f.len() as u32)
        }
        Some(_) => return Err(bad()),
    };
    hours
        .checked_mul(3_600_000)
        .and_then(|h| h.checked_add(mins * 60_000 + secs * 1000 + millis))
        .ok_or_else(bad)
}
