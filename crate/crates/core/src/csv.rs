//! Plain CSV for kernels, sequences and result tables.
//!
//! Comment and header lines start with `#`. Kernel files carry the header
//! `# n=<n> causal=<0|1>` followed by the `2n - 1` values in offset order
//! `-(n-1)..=(n-1)`, one per line.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tcore::ToeplitzKernel;

pub fn write_kernel<W: Write>(kernel: &ToeplitzKernel, mut w: W) -> Result<()> {
    writeln!(w, "# n={} causal={}", kernel.n(), kernel.causal() as u8)?;
    for v in kernel.values() {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, bool)> {
    let mut n = None;
    let mut causal = None;
    for field in line.trim_start_matches('#').split_whitespace() {
        match field.split_once('=') {
            Some(("n", v)) => n = v.parse().ok(),
            Some(("causal", "0")) => causal = Some(false),
            Some(("causal", "1")) => causal = Some(true),
            _ => {}
        }
    }
    match (n, causal) {
        (Some(n), Some(c)) => Ok((n, c)),
        _ => Err(Error::Parse(format!("bad kernel header '{line}'"))),
    }
}

pub fn read_kernel<R: BufRead>(r: R) -> Result<ToeplitzKernel> {
    let mut header = None;
    let mut values = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            if header.is_none() && t.contains("n=") {
                header = Some(parse_header(t)?);
            }
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad kernel value '{t}'")))?,
        );
    }
    let (n, causal) = header.ok_or_else(|| Error::Parse("missing '# n=.. causal=..' header".into()))?;
    ToeplitzKernel::new(n, values, causal)
}

/// One value per line under an `# n=<len>` header.
pub fn write_sequence<W: Write>(values: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "# n={}", values.len())?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_sequence<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(t.parse().map_err(|_| Error::Parse(format!("bad value '{t}'")))?);
    }
    Ok(out)
}

/// Writes `#`-prefixed comment lines, a `#` column header, then the rows.
pub fn write_table<W: Write>(mut w: W, comments: &[String], columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "# {}", columns.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_roundtrip() {
        let k = ToeplitzKernel::from_fn(4, true, |d| 0.1 * d as f64 + 1.0 / 3.0).unwrap();
        let mut buf = Vec::new();
        write_kernel(&k, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# n=4 causal=1\n"));
        assert_eq!(read_kernel(buf.as_slice()).unwrap(), k);
    }

    #[test]
    fn truncated_kernel_rejected() {
        let text = "# n=4 causal=0\n1\n2\n3\n";
        assert!(matches!(
            read_kernel(text.as_bytes()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(read_kernel("1\n2\n".as_bytes()).is_err());
    }

    #[test]
    fn sequence_roundtrip() {
        let v = vec![1.5, -2.25e-7, 3.0];
        let mut buf = Vec::new();
        write_sequence(&v, &mut buf).unwrap();
        assert_eq!(read_sequence(buf.as_slice()).unwrap(), v);
    }
}
