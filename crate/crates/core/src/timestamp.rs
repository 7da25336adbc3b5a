//! Canonical CRM timestamps: `yyyy-MM-ddTHH:mm:ss.SSSZ`, always UTC with
//! millisecond precision.

/// Simulated "current time" used by the simulator and prompts.
pub const SIMULATED_NOW: &str = "2024-05-05T00:00:00.000Z";

/// Returns true when `s` is a canonical timestamp with valid calendar fields.
pub fn is_canonical(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 24 {
        return false;
    }
    let sep_ok = b[4] == b'-'
        && b[7] == b'-'
        && b[10] == b'T'
        && b[13] == b':'
        && b[16] == b':'
        && b[19] == b'.'
        && b[23] == b'Z';
    if !sep_ok {
        return false;
    }
    let num = |from: usize, to: usize| -> Option<u32> {
        let mut v = 0u32;
        for &c in &b[from..to] {
            if !c.is_ascii_digit() {
                return None;
            }
            v = v * 10 + u32::from(c - b'0');
        }
        Some(v)
    };
    let (Some(year), Some(month), Some(day), Some(hour), Some(min), Some(sec), Some(_ms)) = (
        num(0, 4),
        num(5, 7),
        num(8, 10),
        num(11, 13),
        num(14, 16),
        num(17, 19),
        num(20, 23),
    ) else {
        return false;
    };
    if !(1..=12).contains(&month) || hour > 23 || min > 59 || sec > 59 {
        return false;
    }
    day >= 1 && day <= days_in_month(year, month)
}

fn days_in_month(year: u32, month: u32) -> u32 {
    match month {
        4 | 6 | 9 | 11 => 30,
        2 if (year.is_multiple_of(4) && !year.is_multiple_of(100)) || year.is_multiple_of(400) => 29,
        2 => 28,
        _ => 31,
    }
}
