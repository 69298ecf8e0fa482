//! Trace CSV output.
//!
//! Columns: `k,trial,theta,eta,nu,gamma,x1..xn,xhat1..xhatn,e1..en,u1..um,znorm2`.
//! Modes are 1-based, `nu` and `gamma` are 0/1, and floats carry 17
//! significant digits so a file reproduces the run bit for bit.

use std::io::Write;
use std::path::Path;

use jumpctl::closedloop::TraceRecord;

use crate::{CliError, CliResult};

pub fn header(nx: usize, nu: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["k", "trial", "theta", "eta", "nu", "gamma"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["x", "xhat", "e"] {
        cols.extend((1..=nx).map(|i| format!("{prefix}{i}")));
    }
    cols.extend((1..=nu).map(|i| format!("u{i}")));
    cols.push("znorm2".into());
    cols
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn row(r: &TraceRecord) -> Vec<String> {
    let mut out = vec![
        r.k.to_string(),
        r.trial.to_string(),
        (r.theta + 1).to_string(),
        (r.eta + 1).to_string(),
        u8::from(r.nu).to_string(),
        u8::from(r.gamma).to_string(),
    ];
    for v in [&r.x, &r.xhat, &r.e, &r.u] {
        out.extend(v.iter().map(|&x| float(x)));
    }
    out.push(float(r.z.norm_squared()));
    out
}

pub fn write_traces<W: Write>(
    w: W,
    records: &[TraceRecord],
    nx: usize,
    nu: usize,
) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(header(nx, nu))?;
    for r in records {
        writer.write_record(row(r))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_traces_file(
    path: &Path,
    records: &[TraceRecord],
    nx: usize,
    nu: usize,
) -> CliResult<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
    write_traces(std::io::BufWriter::new(file), records, nx, nu)
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
}
