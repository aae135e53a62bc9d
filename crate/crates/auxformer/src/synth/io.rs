//! Motion file I/O.
//!
//! Binary format: magic "MOTN1", u32 LE fields T, J, T_p, then T·J·3 f64 LE
//! coordinates, frame-major then joint-major then xyz. A CSV import path with
//! header "t,j,x,y,z" is also accepted.

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::motion::MotionSequence;
use crate::numerics::Tensor;
use std::path::Path;

pub const MOTION_MAGIC: &[u8; 5] = b"MOTN1";

const MAX_ELEMENTS: u64 = 1 << 31;

pub fn write_motion(path: &Path, x: &MotionSequence) -> Result<()> {
    let mut buf = Vec::with_capacity(17 + x.coords().numel() * 8);
    buf.extend_from_slice(MOTION_MAGIC);
    buf.extend_from_slice(&(x.t_total() as u32).to_le_bytes());
    buf.extend_from_slice(&(x.joints() as u32).to_le_bytes());
    buf.extend_from_slice(&(x.t_past() as u32).to_le_bytes());
    for &v in x.coords().data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &buf)
}

pub fn read_motion(path: &Path) -> Result<MotionSequence> {
    let bytes = std::fs::read(path)?;
    let path_str = path.display().to_string();
    if bytes.len() < 17 {
        return Err(Error::MalformedHeader {
            path: path_str,
            reason: "file shorter than header".into(),
        });
    }
    if &bytes[..5] != MOTION_MAGIC {
        return Err(Error::MalformedHeader {
            path: path_str,
            reason: "missing MOTN1 magic".into(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let t_total = u32_at(5) as u64;
    let joints = u32_at(9) as u64;
    let t_past = u32_at(13) as u64;
    let numel = t_total
        .checked_mul(joints)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| Error::DimensionOverflow {
            path: path_str.clone(),
            reason: format!("T={t_total} J={joints} overflows"),
        })?;
    if numel > MAX_ELEMENTS {
        return Err(Error::DimensionOverflow {
            path: path_str,
            reason: format!("T={t_total} J={joints} declares {numel} coordinates"),
        });
    }
    if t_total == 0 || joints == 0 || t_past == 0 || t_past >= t_total {
        return Err(Error::MalformedHeader {
            path: path_str,
            reason: format!("invalid dimensions T={t_total} J={joints} T_p={t_past}"),
        });
    }
    let expected = 17 + numel * 8;
    if (bytes.len() as u64) < expected {
        return Err(Error::TruncatedPayload {
            path: path_str,
            expected,
            got: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::MalformedHeader {
            path: path_str,
            reason: format!("{} trailing bytes", bytes.len() as u64 - expected),
        });
    }
    let data: Vec<f64> = bytes[17..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();
    let coords = Tensor::new(vec![t_total as usize, joints as usize, 3], data)?;
    MotionSequence::new(coords, t_past as usize)
}

/// Import from CSV with header "t,j,x,y,z" and one row per coordinate
/// (0-based frame and joint indices; every (t, j) cell exactly once).
pub fn read_motion_csv(path: &Path, t_past: usize) -> Result<MotionSequence> {
    let text = std::fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "t,j,x,y,z" => {}
        _ => {
            return Err(Error::MalformedHeader {
                path: path_str,
                reason: "expected header t,j,x,y,z".into(),
            })
        }
    }
    let mut rows: Vec<(usize, usize, [f64; 3])> = Vec::new();
    let mut t_max = 0usize;
    let mut j_max = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::MalformedHeader {
                path: path_str,
                reason: format!("line {}: expected 5 fields", lineno + 2),
            });
        }
        let parse_idx = |s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| Error::MalformedHeader {
                path: path_str.clone(),
                reason: format!("line {}: bad index {s:?}", lineno + 2),
            })
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::MalformedHeader {
                path: path_str.clone(),
                reason: format!("line {}: bad value {s:?}", lineno + 2),
            })
        };
        let t = parse_idx(fields[0])?;
        let j = parse_idx(fields[1])?;
        let xyz = [parse_f(fields[2])?, parse_f(fields[3])?, parse_f(fields[4])?];
        t_max = t_max.max(t);
        j_max = j_max.max(j);
        rows.push((t, j, xyz));
    }
    let (t_total, joints) = (t_max + 1, j_max + 1);
    if rows.len() != t_total * joints {
        return Err(Error::TruncatedPayload {
            path: path_str,
            expected: (t_total * joints) as u64,
            got: rows.len() as u64,
        });
    }
    let mut coords = Tensor::zeros(&[t_total, joints, 3]);
    let mut seen = vec![false; t_total * joints];
    for (t, j, xyz) in rows {
        let cell = t * joints + j;
        if seen[cell] {
            return Err(Error::MalformedHeader {
                path: path_str,
                reason: format!("duplicate cell t={t}, j={j}"),
            });
        }
        seen[cell] = true;
        coords.data_mut()[cell * 3..cell * 3 + 3].copy_from_slice(&xyz);
    }
    MotionSequence::new(coords, t_past)
}
