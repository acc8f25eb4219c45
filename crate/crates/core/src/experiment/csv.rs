use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizers::Method;

use super::{AggregateRow, SweepRow};

pub const AGGREGATE_HEADER: &str = "n,alpha,mean_err_sq,se_err_sq,mean_f_gap,se_f_gap";
pub const SWEEP_HEADER: &str = "gamma,optimizer,final_err,max_err,diverged";

/// 17 significant digits, enough to reproduce every double exactly.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_aggregate_csv(rows: &[AggregateRow], out: &mut (impl Write + ?Sized)) -> Result<()> {
    writeln!(out, "{AGGREGATE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            num(r.alpha),
            num(r.mean_err_sq),
            num(r.se_err_sq),
            num(r.mean_f_gap),
            num(r.se_f_gap)
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv(rows: &[SweepRow], out: &mut (impl Write + ?Sized)) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            num(r.gamma),
            r.optimizer.name(),
            num(r.final_err),
            num(r.max_err),
            r.diverged
        )?;
    }
    Ok(())
}

fn to_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_aggregate_csv_file(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    to_file(path.as_ref(), |out| write_aggregate_csv(rows, out))
}

pub fn write_sweep_csv_file(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    to_file(path.as_ref(), |out| write_sweep_csv(rows, out))
}

fn data_lines<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header '{header}'"),
            })
        }
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end().split(',').collect())))
}

fn field<T: std::str::FromStr>(line: usize, raw: &str, name: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("malformed {name} '{raw}'"),
    })
}

pub fn read_aggregate_csv(text: &str) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    for (line, f) in data_lines(text, AGGREGATE_HEADER)? {
        if f.len() != 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 fields, found {}", f.len()),
            });
        }
        rows.push(AggregateRow {
            n: field(line, f[0], "n")?,
            alpha: field(line, f[1], "alpha")?,
            mean_err_sq: field(line, f[2], "mean_err_sq")?,
            se_err_sq: field(line, f[3], "se_err_sq")?,
            mean_f_gap: field(line, f[4], "mean_f_gap")?,
            se_f_gap: field(line, f[5], "se_f_gap")?,
        });
    }
    Ok(rows)
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (line, f) in data_lines(text, SWEEP_HEADER)? {
        if f.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", f.len()),
            });
        }
        rows.push(SweepRow {
            gamma: field(line, f[0], "gamma")?,
            optimizer: field::<Method>(line, f[1], "optimizer")?,
            final_err: field(line, f[2], "final_err")?,
            max_err: field(line, f[3], "max_err")?,
            diverged: field(line, f[4], "diverged")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: u64, v: f64) -> AggregateRow {
        AggregateRow {
            n,
            alpha: 2.0 / (n as f64 + 1.0),
            mean_err_sq: v,
            se_err_sq: v / 7.0,
            mean_f_gap: v * std::f64::consts::PI,
            se_f_gap: 0.1 + v,
        }
    }

    fn render(rows: &[AggregateRow]) -> String {
        let mut buf = Vec::new();
        write_aggregate_csv(rows, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_aggregate_is_header_only() {
        assert_eq!(render(&[]), format!("{AGGREGATE_HEADER}\n"));
    }

    #[test]
    fn three_rows_four_lf_lines() {
        let text = render(&[row(1, 0.5), row(2, 1e-300), row(3, 123456.789)]);
        assert_eq!(text.lines().count(), 4);
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn round_trip_is_exact() {
        let rows: Vec<_> = (1..50).map(|n| row(n, 1.0 / (n as f64).powf(1.1) + 1e-17 * n as f64)).collect();
        assert_eq!(read_aggregate_csv(&render(&rows)).unwrap(), rows);
    }

    #[test]
    fn sweep_round_trip_keeps_infinity() {
        let rows = vec![
            SweepRow {
                gamma: 1.0,
                optimizer: Method::Sgd,
                final_err: f64::INFINITY,
                max_err: f64::INFINITY,
                diverged: true,
            },
            SweepRow {
                gamma: 1e4,
                optimizer: Method::Tsgd,
                final_err: 0.123,
                max_err: 3.5,
                diverged: false,
            },
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_sweep_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), rows);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_aggregate_csv("a,b\n1,2\n").is_err());
        assert!(read_aggregate_csv(&format!("{AGGREGATE_HEADER}\n1,2\n")).is_err());
    }
}
