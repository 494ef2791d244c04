//! Plain-text frame records: one frame per line, `L,X,k_1,...,k_L`, with
//! the first `X` momenta in camera C1 and momenta in units of `sigma_k`.
//! Values are written with shortest round-trip formatting.

use std::io::{BufRead, Write};

use crate::coincidence::DetectionOutcome;
use crate::error::{Error, Result};
use crate::optics::PsfModel;

pub fn write_record<W: Write>(mut w: W, record: &[DetectionOutcome], psf: &PsfModel) -> Result<()> {
    let sk = psf.sigma_k();
    let mut line = String::new();
    for f in record {
        line.clear();
        let x = f.camera_split();
        line.push_str(&format!("{},{}", f.photon_count(), x));
        let pairs = f.momenta().iter().zip(f.assignment());
        for (k, _) in pairs.clone().filter(|(_, &q)| q).chain(pairs.filter(|(_, &q)| !q)) {
            line.push(',');
            line.push_str(&format!("{}", k / sk));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reads a record. Blank lines and lines starting with `#` are skipped.
pub fn read_record<R: BufRead>(r: R, psf: &PsfModel) -> Result<Vec<DetectionOutcome>> {
    let sk = psf.sigma_k();
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let mut int = |name: &str| -> Result<usize> {
            let v = fields.next().ok_or_else(|| parse_err(n, format!("missing {name}")))?;
            v.parse().map_err(|_| parse_err(n, format!("bad {name} '{v}'")))
        };
        let l = int("L")?;
        let x = int("X")?;
        let momenta = fields
            .map(|v| v.parse::<f64>().map(|k| k * sk).map_err(|_| parse_err(n, format!("bad momentum '{v}'"))))
            .collect::<Result<Vec<f64>>>()?;
        if momenta.len() != l {
            return Err(parse_err(n, format!("L={l} but {} momenta", momenta.len())));
        }
        if x > l {
            return Err(parse_err(n, format!("X={x} exceeds L={l}")));
        }
        out.push(DetectionOutcome::canonical(x, momenta).map_err(|e| parse_err(n, e.to_string()))?);
    }
    Ok(out)
}
