//! CSV writers. Numbers are written as shortest round-trip decimals, so a
//! table read back parses to the same f64 bits.

use crate::convolution::AtomRow;
use crate::denoiser::DenoiserCurve;
use crate::measure::Measure;
use crate::overlap::OverlapTable;
use crate::subordination::SubordinationResult;
use crate::{Error, Result};
use num_complex::Complex64 as C;
use std::io::Write;

/// Column schemas, recorded with their version in run manifests.
pub mod schema {
    pub const DENOISER_CURVE: &str = "denoiser_curve/1";
    pub const DENOISER_CURVE_COMPLEX: &str = "denoiser_curve_complex/1";
    pub const OVERLAP_TABLE: &str = "overlap_table/1";
    pub const OVERLAP_BRANCHES: &str = "overlap_branches/1";
    pub const ATOM_TABLE: &str = "atom_table/1";
    pub const SUBORDINATION: &str = "subordination/1";
    pub const TRANSFORM: &str = "transform/1";
    pub const DENSITY: &str = "density/1";
    pub const MEASURE_JSON: &str = "measure_json/1";
}

pub fn num(x: f64) -> String {
    if x.is_finite() {
        let mut b = ryu::Buffer::new();
        b.format_finite(x).to_string()
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    Ok(out)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// t, h, branch (bulk | atom | zero | gap); gaps carry an empty h. A curve
/// with a nonzero imaginary part gets an extra h_imag column.
pub fn write_denoiser_curve<W: Write>(w: W, curve: &DenoiserCurve) -> Result<&'static str> {
    let complex = curve.h_imag.iter().chain(curve.atom_values.iter().map(|a| &a.h_imag)).any(|&x| x != 0.0);
    let header: &[&str] = if complex { &["t", "h", "h_imag", "branch"] } else { &["t", "h", "branch"] };
    let mut out = writer(w, header)?;
    let mut rows: Vec<(f64, Option<(f64, f64)>, &str)> = curve
        .t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, Some((curve.h_values[k], curve.h_imag[k])), "bulk"))
        .collect();
    rows.extend(curve.atom_values.iter().map(|a| (a.gamma, Some((a.h, a.h_imag)), "atom")));
    if let Some(z) = curve.zero_value {
        rows.push((0.0, Some((z.h, 0.0)), "zero"));
    }
    rows.extend(curve.gaps.iter().map(|&t| (t, None, "gap")));
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, h, branch) in rows {
        let (re, im) = h.map_or((String::new(), String::new()), |(a, b)| (num(a), num(b)));
        let rec: Vec<String> = if complex { vec![num(t), re, im, branch.into()] } else { vec![num(t), re, branch.into()] };
        out.write_record(&rec).map_err(csv_err)?;
    }
    finish(out)?;
    Ok(if complex { schema::DENOISER_CURVE_COMPLEX } else { schema::DENOISER_CURVE })
}

/// s, t, o over the bulk of the table.
pub fn write_overlap_table<W: Write>(w: W, table: &OverlapTable) -> Result<()> {
    let mut out = writer(w, &["s", "t", "o"])?;
    for (i, &s) in table.s_grid.iter().enumerate() {
        for (j, &t) in table.t_grid.iter().enumerate() {
            out.write_record([num(s), num(t), num(table.values[i][j])]).map_err(csv_err)?;
        }
    }
    finish(out)
}

/// branch, s, t, o, mass: atom branches (s = α, t = γ, mass = target mass
/// at γ), then the ℝ₊ t = 0 branches (s = 0 is the origin value).
pub fn write_overlap_branches<W: Write>(w: W, table: &OverlapTable) -> Result<()> {
    let mut out = writer(w, &["branch", "s", "t", "o", "mass"])?;
    for b in &table.atom_branches {
        out.write_record(["atom".into(), num(b.alpha), num(b.gamma), num(b.value), num(b.mass)]).map_err(csv_err)?;
    }
    if let Some(z) = &table.zero_branches {
        out.write_record(["zero".into(), num(0.0), num(0.0), num(z.origin), num(z.mass)]).map_err(csv_err)?;
        for (&s, &o) in table.s_grid.iter().zip(&z.at_zero) {
            if s != 0.0 {
                out.write_record(["zero".into(), num(s), num(0.0), num(o), num(z.mass)]).map_err(csv_err)?;
            }
        }
    }
    finish(out)
}

pub fn write_atom_table<W: Write>(w: W, rows: &[AtomRow]) -> Result<()> {
    let mut out = writer(w, &["gamma", "alpha", "beta", "mass"])?;
    for r in rows {
        out.write_record([num(r.gamma), num(r.alpha), num(r.beta), num(r.mass)]).map_err(csv_err)?;
    }
    finish(out)
}

/// t, eps, Re ω₁, Im ω₁, Re ω₂, Im ω₂ (extrapolated), in_u.
pub fn write_subordination<W: Write>(w: W, sub: &SubordinationResult) -> Result<()> {
    let mut out = writer(w, &["t", "eps", "re_omega1", "im_omega1", "re_omega2", "im_omega2", "in_u"])?;
    for k in 0..sub.grid.len() {
        let (a, b) = (sub.boundary1[k], sub.boundary2[k]);
        out.write_record([
            num(sub.grid[k]),
            num(sub.eps[k]),
            num(a.re),
            num(a.im),
            num(b.re),
            num(b.im),
            u8::from(sub.in_u[k]).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(out)
}

/// t, eps, Re G, Im G.
pub fn write_transform<W: Write>(w: W, rows: &[(f64, f64, C)]) -> Result<()> {
    let mut out = writer(w, &["t", "eps", "re_g", "im_g"])?;
    for &(t, e, g) in rows {
        out.write_record([num(t), num(e), num(g.re), num(g.im)]).map_err(csv_err)?;
    }
    finish(out)
}

/// t, density, weight of the sampled density (no rows for a purely atomic
/// measure).
pub fn write_density<W: Write>(w: W, m: &Measure) -> Result<()> {
    let mut out = writer(w, &["t", "density", "weight"])?;
    if let Some(d) = m.density() {
        for ((&t, &v), &wt) in d.grid().iter().zip(d.values()).zip(d.weights()) {
            out.write_record([num(t), num(v), num(wt)]).map_err(csv_err)?;
        }
    }
    finish(out)
}

pub fn measure_json(m: &Measure) -> Result<String> {
    serde_json::to_string_pretty(&m.to_spec()).map_err(|e| Error::Io(e.to_string()))
}

/// Read back a two-or-more column numeric CSV (header skipped). Empty cells
/// read as NaN, non-numeric cells (e.g. a branch label) are dropped.
pub fn read_numeric_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::InvalidInput(format!("CSV: {e}")))?;
        rows.push(
            rec.iter()
                .filter_map(|c| if c.is_empty() { Some(f64::NAN) } else { c.parse::<f64>().ok() })
                .collect(),
        );
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{denoise_additive_identity, AtomValue};
    use crate::SupportDomain;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn curve_rows_sorted_with_branches() {
        let mu = Measure::discrete(SupportDomain::RealLine, &[(0.0, 0.75), (2.0, 0.25)]).unwrap();
        let mut c = denoise_additive_identity(&mu, &mu).unwrap();
        c.gaps.push(-1.0);
        let mut buf = Vec::new();
        assert_eq!(write_denoiser_curve(&mut buf, &c).unwrap(), schema::DENOISER_CURVE);
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,h,branch");
        assert!(lines[1].starts_with("-1.0,,gap"));
        assert!(lines.iter().any(|l| *l == "0.0,0.0,atom"), "{}", &text[..200]);
        let ts: Vec<f64> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        let back = read_numeric_csv(&text).unwrap();
        assert_eq!(back.len(), lines.len() - 1);
    }

    #[test]
    fn complex_curve_gets_imaginary_column() {
        let mu = Measure::discrete(SupportDomain::RealLine, &[(0.0, 0.75), (2.0, 0.25)]).unwrap();
        let mut c = denoise_additive_identity(&mu, &mu).unwrap();
        c.atom_values.push(AtomValue { gamma: 9.0, h: 1.0, h_imag: 0.5, mass: 0.0 });
        let mut buf = Vec::new();
        assert_eq!(write_denoiser_curve(&mut buf, &c).unwrap(), schema::DENOISER_CURVE_COMPLEX);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,h,h_imag,branch\n"));
        assert!(text.contains("9.0,1.0,0.5,atom"));
    }
}
